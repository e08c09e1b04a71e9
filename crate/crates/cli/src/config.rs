//! TOML experiment configuration.
//!
//! One file holds optional top-level `seed`, `unit`, `verbosity` and `out`
//! keys plus one table per pipeline. Every table has defaults, so a missing
//! table runs the default experiment. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use mcp_core::channel::SignConvention;
use mcp_core::sim::FeedbackPolicy;
use mcp_core::{
    ArModel, BackhaulConfig, Budgets, Constellation, EstimatedChannel, FrameConfig, InputSpec,
    IntegrationEngine, IterationSchedule, Link, Mac, Normalization, PowerPolicy, Scenario,
    SolverConfig, Unit, C64,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The whole configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub unit: Option<Unit>,
    pub verbosity: Option<u8>,
    pub out: Option<PathBuf>,
    #[serde(rename = "mi-surface")]
    pub mi_surface: SurfaceConfig,
    pub mmse: MmseConfig,
    pub power: PowerConfig,
    pub precode: PrecodeConfig,
    pub sim: SimConfig,
    pub validate: ValidateConfig,
}

impl ExperimentConfig {
    /// Parses `text`; `origin` names the source in diagnostics.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }
}

fn invalid(key: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        origin: key.to_string(),
        message: e.to_string(),
    }
}

/// Input law by name: `gaussian`, `bpsk`, `pam-M`, `qam-S` (S points per
/// axis), `gq-N` (N-point Gauss-Hermite discretization per axis of a
/// complex Gaussian) or `file:PATH` (a constellation file).
pub fn parse_input(name: &str) -> std::result::Result<InputSpec, String> {
    let sized = |prefix: &str| -> Option<std::result::Result<usize, String>> {
        name.strip_prefix(prefix).map(|n| {
            n.parse::<usize>()
                .map_err(|_| format!("bad size in input {name:?}"))
        })
    };
    let lift =
        |r: mcp_core::Result<Constellation>| r.map(InputSpec::Discrete).map_err(|e| e.to_string());
    match name {
        "gaussian" => Ok(InputSpec::Gaussian),
        "bpsk" => Ok(InputSpec::Bpsk),
        _ => {
            if let Some(m) = sized("pam-") {
                lift(Constellation::pam(m?))
            } else if let Some(s) = sized("qam-") {
                lift(Constellation::qam(s?))
            } else if let Some(n) = sized("gq-") {
                lift(Constellation::gaussian_quadrature(n?))
            } else if let Some(path) = name.strip_prefix("file:") {
                lift(Constellation::load(Path::new(path)))
            } else {
                Err(format!(
                    "unknown input {name:?}; expected gaussian, bpsk, pam-M, qam-S, gq-N or file:PATH"
                ))
            }
        }
    }
}

fn inputs(names: &[String; 2], key: &str) -> Result<[InputSpec; 2]> {
    let one =
        |i: usize| parse_input(&names[i]).map_err(|e| invalid(&format!("{key}.inputs[{i}]"), e));
    Ok([one(0)?, one(1)?])
}

fn budgets(q: [f64; 2], key: &str) -> Result<Budgets> {
    Budgets::new(q[0], q[1]).map_err(|e| invalid(&format!("{key}.budgets"), e))
}

fn gh(order: usize) -> IntegrationEngine {
    IntegrationEngine::gauss_hermite(order)
}

/// A scalar channel `h[rx][tx] = h_re + i h_im`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub h_re: [[f64; 2]; 2],
    pub h_im: [[f64; 2]; 2],
    pub snr: f64,
    pub sigma_sq: [f64; 2],
    pub horizon: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            h_re: [[1.0, 1.0], [1.0, 1.0]],
            h_im: [[0.0; 2]; 2],
            snr: 10.0,
            sigma_sq: [1.0, 1.0],
            horizon: 0,
        }
    }
}

impl ChannelConfig {
    pub fn build(&self, key: &str) -> Result<EstimatedChannel> {
        let h = std::array::from_fn(|k| {
            std::array::from_fn(|l| C64::new(self.h_re[k][l], self.h_im[k][l]))
        });
        EstimatedChannel::new(h, self.sigma_sq, self.horizon, self.snr)
            .map_err(|e| invalid(&format!("{key}.channel"), e))
    }
}

/// `mi-surface`: joint rates of both MACs on a square power grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub channel: ChannelConfig,
    pub inputs: [String; 2],
    pub p_max: f64,
    pub step: f64,
    pub engine: IntegrationEngine,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            inputs: ["gaussian".into(), "gaussian".into()],
            p_max: 2.0,
            step: 0.1,
            engine: gh(32),
        }
    }
}

impl SurfaceConfig {
    pub fn inputs(&self) -> Result<[InputSpec; 2]> {
        inputs(&self.inputs, "mi-surface")
    }

    /// Grid values `0, step, ..., p_max`.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.p_max >= 0.0 && self.p_max.is_finite()) {
            return Err(invalid(
                "mi-surface.step",
                "need step > 0 and finite p_max >= 0",
            ));
        }
        let n = (self.p_max / self.step).round();
        if ((n * self.step) - self.p_max).abs() > 1e-9 * self.p_max.max(1.0) {
            return Err(invalid(
                "mi-surface.step",
                "p_max must be a multiple of step",
            ));
        }
        Ok((0..=n as usize).map(|i| i as f64 * self.step).collect())
    }
}

/// `mmse`: the error covariances over an snr sweep at fixed powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmseConfig {
    pub channel: ChannelConfig,
    pub inputs: [String; 2],
    pub powers: [f64; 2],
    pub snr_grid: Vec<f64>,
    pub engine: IntegrationEngine,
}

impl Default for MmseConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            inputs: ["bpsk".into(), "bpsk".into()],
            powers: [2.0, 2.0],
            snr_grid: (0..=20)
                .map(|i| 10f64.powf(-2.0 + 0.2 * i as f64))
                .collect(),
            engine: gh(32),
        }
    }
}

impl MmseConfig {
    pub fn inputs(&self) -> Result<[InputSpec; 2]> {
        inputs(&self.inputs, "mmse")
    }
}

/// Which power solver the `power` pipeline runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMethod {
    /// Gaussian inputs, closed form at fixed prices.
    ClosedForm,
    /// Priced fixed point for any inputs.
    #[default]
    FixedPoint,
    /// Rate maximization inside the budget box.
    Budgeted,
    /// Gaussian prices tuned so the ensemble meets the budgets on average.
    Tune,
}

/// Random channels for the ensemble pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Number of Rayleigh draws; 0 uses the fixed channel.
    pub n: usize,
    pub snr: f64,
    pub real_only: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n: 0,
            snr: 1.0,
            real_only: false,
        }
    }
}

/// `power`: one solver over a channel or an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub channel: ChannelConfig,
    pub ensemble: EnsembleConfig,
    pub inputs: [String; 2],
    pub method: PowerMethod,
    pub lambda: [f64; 2],
    pub budgets: [f64; 2],
    pub macs: Vec<u8>,
    pub schedule: IterationSchedule,
    pub engine: IntegrationEngine,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            ensemble: EnsembleConfig::default(),
            inputs: ["bpsk".into(), "bpsk".into()],
            method: PowerMethod::default(),
            lambda: [0.5, 0.5],
            budgets: [2.0, 2.0],
            macs: vec![1, 2],
            schedule: IterationSchedule::default()
                .with_max_iter(2000)
                .with_tol(1e-9),
            engine: gh(32),
        }
    }
}

fn macs(list: &[u8], key: &str) -> Result<Vec<Mac>> {
    if list.is_empty() {
        return Err(invalid(key, "at least one MAC is needed"));
    }
    list.iter()
        .map(|&m| Mac::try_from(m).map_err(|e| invalid(key, e)))
        .collect()
}

impl PowerConfig {
    pub fn inputs(&self) -> Result<[InputSpec; 2]> {
        inputs(&self.inputs, "power")
    }

    pub fn budgets(&self) -> Result<Budgets> {
        budgets(self.budgets, "power")
    }

    pub fn macs(&self) -> Result<Vec<Mac>> {
        macs(&self.macs, "power.macs")
    }
}

/// Real `N x N` link blocks `blocks[rx][tx]`, each a list of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoConfig {
    pub blocks: [[Vec<Vec<f64>>; 2]; 2],
}

/// `precode`: precoders of both MACs and the selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecodeConfig {
    pub channel: ChannelConfig,
    /// Vector links; the scalar `channel` gains are ignored when present.
    pub mimo: Option<MimoConfig>,
    pub inputs: [String; 2],
    pub nu: [f64; 2],
    pub budgets: [f64; 2],
    pub normalization: Normalization,
    pub schedule: IterationSchedule,
    pub engine: IntegrationEngine,
}

impl Default for PrecodeConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            mimo: None,
            inputs: ["bpsk".into(), "bpsk".into()],
            nu: [1e-3, 1e-3],
            budgets: [2.0, 2.0],
            normalization: Normalization::Cap,
            schedule: IterationSchedule::default()
                .with_max_iter(2000)
                .with_tol(1e-9),
            engine: gh(32),
        }
    }
}

impl PrecodeConfig {
    pub fn inputs(&self) -> Result<[InputSpec; 2]> {
        inputs(&self.inputs, "precode")
    }

    pub fn budgets(&self) -> Result<Budgets> {
        budgets(self.budgets, "precode")
    }
}

/// `sim-ul` and `sim-dl`: one scenario for both links.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub snr_grid: Vec<f64>,
    pub inputs: [String; 2],
    pub rho: f64,
    /// AR order `L`.
    pub ar_order: usize,
    pub sign: SignConvention,
    pub innovation_variance: f64,
    /// Symbols per block `K`.
    pub k: usize,
    pub m: usize,
    pub l_pilots: usize,
    pub t: usize,
    /// Blocks per trace, the realization count.
    pub n_blocks: usize,
    pub budgets: [f64; 2],
    pub bandwidth_load: f64,
    pub tau: f64,
    pub policy: PowerPolicy,
    pub nu: [f64; 2],
    pub normalization: Normalization,
    pub feedback: FeedbackPolicy,
    pub real_only: bool,
    pub schedule: IterationSchedule,
    pub engine: IntegrationEngine,
}

impl Default for SimConfig {
    fn default() -> Self {
        let frame = FrameConfig::default();
        let solver = SolverConfig::default();
        let ar = ArModel::default();
        Self {
            snr_grid: vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
            inputs: ["bpsk".into(), "bpsk".into()],
            rho: ar.rho(),
            ar_order: ar.order(),
            sign: ar.sign(),
            innovation_variance: ar.innovation_variance(),
            k: frame.k,
            m: frame.m,
            l_pilots: frame.l_pilots,
            t: frame.t,
            n_blocks: frame.n_blocks,
            budgets: [2.0, 2.0],
            bandwidth_load: 0.0,
            tau: 1.0,
            policy: solver.policy,
            nu: solver.nu,
            normalization: solver.normalization,
            feedback: FeedbackPolicy::EveryBlock,
            real_only: true,
            schedule: solver.schedule,
            engine: solver.engine,
        }
    }
}

impl SimConfig {
    pub fn scenario(&self, link: Link) -> Result<Scenario> {
        let ar = ArModel::new(self.ar_order, self.rho, self.sign, self.innovation_variance)
            .map_err(|e| invalid("sim.ar_order/rho/innovation_variance", e))?;
        let frame = FrameConfig::new(self.k, self.m, self.l_pilots, self.t, self.n_blocks)
            .map_err(|e| invalid("sim.k/m/l_pilots/t", e))?;
        if self.n_blocks == 0 {
            return Err(invalid("sim.n_blocks", "must be >= 1"));
        }
        let backhaul = BackhaulConfig::new(self.bandwidth_load, self.tau)
            .map_err(|e| invalid("sim.bandwidth_load/tau", e))?;
        let solver = SolverConfig {
            inputs: inputs(&self.inputs, "sim")?,
            budgets: budgets(self.budgets, "sim")?,
            policy: self.policy,
            nu: self.nu,
            normalization: self.normalization,
            schedule: self.schedule,
            engine: self.engine,
        };
        let s = Scenario {
            link,
            snr_grid: self.snr_grid.clone(),
            ar,
            frame,
            backhaul,
            solver,
            feedback: self.feedback,
            real_only: self.real_only,
        };
        s.validate().map_err(|e| invalid("sim", e))?;
        Ok(s)
    }
}

/// `validate`: which acceptance criteria to run; empty runs all.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub criteria: Vec<u8>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("", "mem").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.mi_surface.grid().unwrap().len(), 21);
    }

    #[test]
    fn unknown_keys_name_the_key_and_line() {
        let e = ExperimentConfig::from_toml_str("seed = 3\n[sim]\nrhoo = 1.0\n", "cfg.toml")
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("rhoo"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("cfg.toml"), "{msg}");
    }

    #[test]
    fn domain_errors_name_the_key() {
        let c = ExperimentConfig::from_toml_str("[sim]\nrho = 1.5\n", "mem").unwrap();
        let msg = c.sim.scenario(Link::Uplink).unwrap_err().to_string();
        assert!(msg.contains("sim.") && msg.contains("rho"), "{msg}");
    }

    #[test]
    fn input_names_parse() {
        assert_eq!(parse_input("bpsk").unwrap(), InputSpec::Bpsk);
        assert!(matches!(parse_input("qam-4").unwrap(), InputSpec::Discrete(c) if c.len() == 16));
        assert!(matches!(parse_input("gq-4").unwrap(), InputSpec::Discrete(c) if c.len() == 16));
        assert!(parse_input("qpsk").is_err());
        assert!(parse_input("pam-x").is_err());
    }

    #[test]
    fn nested_tables_parse() {
        let text = r#"
            [power]
            method = "budgeted"
            macs = [2]
            schedule = { max_iter = 50 }
            engine = { method = "gauss-hermite", order = 8 }
            [power.ensemble]
            n = 4
            [sim]
            policy = { kind = "priced", lambda = [0.3, 0.4] }
            feedback = { kind = "ceiling", max_sigma_sq = 2.0 }
        "#;
        let c = ExperimentConfig::from_toml_str(text, "mem").unwrap();
        assert_eq!(c.power.method, PowerMethod::Budgeted);
        assert_eq!(c.power.schedule.max_iter, 50);
        assert_eq!(c.power.schedule.tol, IterationSchedule::default().tol);
        assert_eq!(c.power.ensemble.n, 4);
        assert_eq!(c.sim.policy, PowerPolicy::Priced { lambda: [0.3, 0.4] });
        c.sim.scenario(Link::Downlink).unwrap();
    }
}
