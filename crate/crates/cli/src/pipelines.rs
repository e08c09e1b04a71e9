//! One function per subcommand, each turning its config table into CSV
//! tables, warnings and a JSON summary.

use mcp_core::optimizer::kkt::{self, KktReport};
use mcp_core::seed::derive;
use mcp_core::{
    budgeted_power, fixed_point_power, fixed_point_precoder, gaussian_power, mi_gaussian_sum,
    mi_sum, mmse_matrix, run_trace, sample_channel, select_design, tune_multipliers, CMat, Cell,
    Design, DesignCandidate, EstimatedChannel, InputSpec, Link, Mac, MimoChannel, Multipliers,
    PowerProfile, PrecoderPair, RateValue, Table, Unit, User, C64,
};
use serde_json::{json, Value};

use crate::config::{
    EnsembleConfig, ExperimentConfig, MimoConfig, PowerConfig, PowerMethod, PrecodeConfig,
    SimConfig, SurfaceConfig,
};
use crate::error::{Error, Result};

/// Seed stream of the random power ensembles.
const STREAM_POWER: u64 = 0x504f_5745;

/// What a pipeline produced.
#[derive(Debug, Default)]
pub struct Output {
    /// File name and content of every table.
    pub tables: Vec<(String, Table)>,
    pub warnings: Vec<String>,
    pub summary: Value,
}

fn rate(r: &RateValue, unit: Unit) -> f64 {
    r.to(unit).value()
}

fn note_accuracy(warnings: &mut Vec<String>, what: &str, r: &RateValue) {
    if let Some(w) = &r.warning {
        warnings.push(format!("{what}: {w}"));
    }
}

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        origin: key.to_string(),
        message: message.into(),
    }
}

/// `surface.csv`: `p1, p2, mi_mac1, mi_mac2, mi_min` over the power grid.
pub fn mi_surface(cfg: &SurfaceConfig, unit: Unit) -> Result<Output> {
    let ch = cfg.channel.build("mi-surface")?;
    let inputs = cfg.inputs()?;
    cfg.engine
        .validate()
        .map_err(|e| cfg_err("mi-surface.engine", e.to_string()))?;
    let grid = cfg.grid()?;
    let mut t = Table::new(["p1", "p2", "mi_mac1", "mi_mac2", "mi_min"]);
    let mut warnings = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &p1 in &grid {
        for &p2 in &grid {
            let p = PowerProfile::new(p1, p2)?;
            let r1 = mi_sum(&ch, &p, &inputs, Mac::One, &cfg.engine)?;
            let r2 = mi_sum(&ch, &p, &inputs, Mac::Two, &cfg.engine)?;
            note_accuracy(&mut warnings, &format!("rate at ({p1}, {p2})"), &r1);
            note_accuracy(&mut warnings, &format!("rate at ({p1}, {p2})"), &r2);
            let (a, b) = (rate(&r1, unit), rate(&r2, unit));
            if a.min(b) > best.0 {
                best = (a.min(b), p1, p2);
            }
            t.push(vec![
                p1.into(),
                p2.into(),
                a.into(),
                b.into(),
                a.min(b).into(),
            ])?;
        }
    }
    let summary = json!({
        "points": t.len(),
        "best_min_rate": best.0,
        "best_powers": [best.1, best.2],
    });
    Ok(Output {
        tables: vec![("surface.csv".into(), t)],
        warnings,
        summary,
    })
}

/// `mmse.csv`: error covariances and rates of both receivers per snr.
pub fn mmse(cfg: &crate::config::MmseConfig, unit: Unit) -> Result<Output> {
    let base = cfg.channel.build("mmse")?;
    let inputs = cfg.inputs()?;
    cfg.engine
        .validate()
        .map_err(|e| cfg_err("mmse.engine", e.to_string()))?;
    let p = PowerProfile::new(cfg.powers[0], cfg.powers[1])
        .map_err(|e| cfg_err("mmse.powers", e.to_string()))?;
    if cfg.snr_grid.is_empty() {
        return Err(cfg_err("mmse.snr_grid", "must not be empty"));
    }
    let mut t = Table::new([
        "snr",
        "e11",
        "e12_re",
        "e12_im",
        "e21_re",
        "e21_im",
        "e22",
        "system_mmse",
        "mi_mac1",
        "mi_mac2",
    ]);
    let mut warnings = Vec::new();
    for &snr in &cfg.snr_grid {
        let ch = base
            .with_snr(snr)
            .map_err(|e| cfg_err("mmse.snr_grid", e.to_string()))?;
        let m = mmse_matrix(&ch, &p, &inputs, &cfg.engine)?;
        let r1 = mi_sum(&ch, &p, &inputs, Mac::One, &cfg.engine)?;
        let r2 = mi_sum(&ch, &p, &inputs, Mac::Two, &cfg.engine)?;
        note_accuracy(&mut warnings, &format!("rate at snr {snr}"), &r1);
        note_accuracy(&mut warnings, &format!("rate at snr {snr}"), &r2);
        t.push(vec![
            snr.into(),
            m.e11().into(),
            m.e12().re.into(),
            m.e12().im.into(),
            m.e21().re.into(),
            m.e21().im.into(),
            m.e22().into(),
            m.system_mmse().into(),
            rate(&r1, unit).into(),
            rate(&r2, unit).into(),
        ])?;
    }
    Ok(Output {
        summary: json!({ "points": t.len() }),
        tables: vec![("mmse.csv".into(), t)],
        warnings,
    })
}

/// The fixed channel, or `n` Rayleigh draws when an ensemble is configured.
fn channels(
    fixed: EstimatedChannel,
    ens: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<EstimatedChannel>> {
    if ens.n == 0 {
        return Ok(vec![fixed]);
    }
    (0..ens.n as u64)
        .map(|i| {
            sample_channel(derive(seed, STREAM_POWER, i), ens.snr, ens.real_only)
                .map(|c| EstimatedChannel::perfect(&c))
                .map_err(|e| cfg_err("power.ensemble", e.to_string()))
        })
        .collect()
}

/// `dI/dP` of the Gaussian joint rate, in nats.
fn gaussian_gradient(ch: &EstimatedChannel, p: &PowerProfile, mac: Mac) -> [f64; 2] {
    let c = ch.snr() / ch.sigma_sq(mac);
    let a = [
        c * ch.gain(mac, User::One).norm_sqr(),
        c * ch.gain(mac, User::Two).norm_sqr(),
    ];
    let denom = 1.0 + a[0] * p.p1() + a[1] * p.p2();
    [a[0] / denom, a[1] / denom]
}

const POWER_HEADER: [&str; 13] = [
    "channel",
    "mac",
    "p1",
    "p2",
    "rate",
    "lambda1",
    "lambda2",
    "iterations",
    "residual",
    "converged",
    "kkt_stationarity",
    "kkt_feasibility",
    "kkt_slackness",
];

struct PowerRow {
    channel: usize,
    mac: Mac,
    powers: PowerProfile,
    rate: f64,
    lambda: [f64; 2],
    iterations: usize,
    residual: f64,
    converged: bool,
    kkt: KktReport,
}

impl PowerRow {
    fn cells(&self) -> Vec<Cell> {
        vec![
            self.channel.into(),
            (self.mac.index() + 1).into(),
            self.powers.p1().into(),
            self.powers.p2().into(),
            self.rate.into(),
            self.lambda[0].into(),
            self.lambda[1].into(),
            self.iterations.into(),
            self.residual.into(),
            i64::from(self.converged).into(),
            self.kkt.stationarity.into(),
            self.kkt.feasibility.into(),
            self.kkt.slackness.into(),
        ]
    }
}

/// `power.csv` with one row per channel and MAC; `multipliers.csv` for `tune`.
pub fn power(cfg: &PowerConfig, seed: u64, unit: Unit) -> Result<Output> {
    let inputs = cfg.inputs()?;
    let budgets = cfg.budgets()?;
    let macs = cfg.macs()?;
    cfg.schedule
        .validate()
        .map_err(|e| cfg_err("power.schedule", e.to_string()))?;
    cfg.engine
        .validate()
        .map_err(|e| cfg_err("power.engine", e.to_string()))?;
    let gaussian = inputs.iter().all(InputSpec::is_gaussian);
    if matches!(cfg.method, PowerMethod::ClosedForm | PowerMethod::Tune) && !gaussian {
        return Err(cfg_err(
            "power.inputs",
            "closed-form and tune need gaussian inputs",
        ));
    }
    let mult = Multipliers::new(cfg.lambda[0], cfg.lambda[1])
        .map_err(|e| cfg_err("power.lambda", e.to_string()))?;
    let ensemble = channels(cfg.channel.build("power")?, &cfg.ensemble, seed)?;

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut extra = Vec::new();
    match cfg.method {
        PowerMethod::ClosedForm => {
            for (i, ch) in ensemble.iter().enumerate() {
                for &mac in &macs {
                    let p = gaussian_power(ch, &mult, mac)?;
                    let kkt =
                        kkt::priced(gaussian_gradient(ch, &p, mac), p.as_array(), mult.lambda).0;
                    rows.push(PowerRow {
                        channel: i,
                        mac,
                        powers: p,
                        rate: rate(&mi_gaussian_sum(ch, &p, mac), unit),
                        lambda: mult.lambda,
                        iterations: 0,
                        residual: 0.0,
                        converged: true,
                        kkt,
                    });
                }
            }
        }
        PowerMethod::FixedPoint | PowerMethod::Budgeted => {
            let init = PowerProfile::new(budgets.q(User::One), budgets.q(User::Two))?;
            for (i, ch) in ensemble.iter().enumerate() {
                for &mac in &macs {
                    let sol = if cfg.method == PowerMethod::FixedPoint {
                        fixed_point_power(
                            ch,
                            &inputs,
                            &mult,
                            mac,
                            &init,
                            &cfg.schedule,
                            &cfg.engine,
                        )?
                    } else {
                        budgeted_power(ch, &inputs, &budgets, mac, &cfg.schedule, &cfg.engine)?
                    };
                    if !sol.report.converged {
                        warnings.push(format!(
                            "channel {i} MAC {mac}: not converged after {} iterations, residual {:e}",
                            sol.report.iterations, sol.report.residual
                        ));
                    }
                    note_accuracy(&mut warnings, &format!("channel {i} MAC {mac}"), &sol.rate);
                    rows.push(PowerRow {
                        channel: i,
                        mac,
                        powers: sol.powers,
                        rate: rate(&sol.rate, unit),
                        lambda: sol.multipliers.lambda,
                        iterations: sol.report.iterations,
                        residual: sol.report.residual,
                        converged: sol.report.converged,
                        kkt: sol.kkt,
                    });
                }
            }
        }
        PowerMethod::Tune => {
            let mut m = Table::new(["mac", "lambda1", "lambda2", "avg_p1", "avg_p2", "status"]);
            for &mac in &macs {
                let tuned = tune_multipliers(&ensemble, &budgets, mac, &cfg.schedule)?;
                let status = match tuned.status {
                    mcp_core::TuneStatus::Active => "active".to_string(),
                    mcp_core::TuneStatus::InfeasibleSlack { user1, user2 } => {
                        warnings.push(format!(
                            "MAC {mac}: slack budgets (user1 {user1}, user2 {user2})"
                        ));
                        "infeasible-slack".to_string()
                    }
                };
                m.push(vec![
                    (mac.index() + 1).into(),
                    tuned.multipliers.lambda[0].into(),
                    tuned.multipliers.lambda[1].into(),
                    tuned.average[0].into(),
                    tuned.average[1].into(),
                    status.into(),
                ])?;
                for (i, (ch, p)) in ensemble.iter().zip(&tuned.allocations).enumerate() {
                    let kkt = kkt::priced(
                        gaussian_gradient(ch, p, mac),
                        p.as_array(),
                        tuned.multipliers.lambda,
                    )
                    .0;
                    rows.push(PowerRow {
                        channel: i,
                        mac,
                        powers: *p,
                        rate: rate(&mi_gaussian_sum(ch, p, mac), unit),
                        lambda: tuned.multipliers.lambda,
                        iterations: 0,
                        residual: 0.0,
                        converged: true,
                        kkt,
                    });
                }
            }
            extra.push(("multipliers.csv".to_string(), m));
        }
    }
    let mut t = Table::new(POWER_HEADER);
    for r in &rows {
        t.push(r.cells())?;
    }
    let worst_kkt = rows.iter().map(|r| r.kkt.max()).fold(0.0, f64::max);
    let summary = json!({
        "method": cfg.method,
        "channels": ensemble.len(),
        "rows": rows.len(),
        "worst_kkt_residual": worst_kkt,
        "mean_powers": [
            rows.iter().map(|r| r.powers.p1()).sum::<f64>() / rows.len() as f64,
            rows.iter().map(|r| r.powers.p2()).sum::<f64>() / rows.len() as f64,
        ],
    });
    let mut tables = vec![("power.csv".to_string(), t)];
    tables.extend(extra);
    Ok(Output {
        tables,
        warnings,
        summary,
    })
}

fn real_block(rows: &[Vec<f64>], key: &str) -> Result<CMat> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(cfg_err(key, "blocks must be square and non-empty"));
    }
    let flat: Vec<C64> = rows.iter().flatten().map(|&x| C64::new(x, 0.0)).collect();
    Ok(CMat::from_row_slice(n, n, &flat))
}

fn mimo_channel(cfg: &PrecodeConfig) -> Result<MimoChannel> {
    match &cfg.mimo {
        None => Ok(MimoChannel::from_scalar(&cfg.channel.build("precode")?)),
        Some(MimoConfig { blocks }) => {
            let b = |k: usize, l: usize| {
                real_block(&blocks[k][l], &format!("precode.mimo.blocks[{k}][{l}]"))
            };
            MimoChannel::new(
                [[b(0, 0)?, b(0, 1)?], [b(1, 0)?, b(1, 1)?]],
                cfg.channel.sigma_sq,
                cfg.channel.snr,
            )
            .map_err(|e| cfg_err("precode.mimo", e.to_string()))
        }
    }
}

/// `precoders.csv` entries of both MACs' precoders and `precode_summary.csv`.
pub fn precode(cfg: &PrecodeConfig, unit: Unit) -> Result<Output> {
    let inputs = cfg.inputs()?;
    let budgets = cfg.budgets()?;
    cfg.schedule
        .validate()
        .map_err(|e| cfg_err("precode.schedule", e.to_string()))?;
    cfg.engine
        .validate()
        .map_err(|e| cfg_err("precode.engine", e.to_string()))?;
    let mult =
        Multipliers::new(cfg.nu[0], cfg.nu[1]).map_err(|e| cfg_err("precode.nu", e.to_string()))?;
    let ch = mimo_channel(cfg)?;

    let mut warnings = Vec::new();
    let mut candidates = Vec::new();
    for mac in [Mac::One, Mac::Two] {
        let init = PrecoderPair::svd_init(&ch, mac, &budgets);
        let sol = fixed_point_precoder(
            &ch,
            &inputs,
            &mult,
            mac,
            &init,
            &budgets,
            cfg.normalization,
            &cfg.schedule,
            &cfg.engine,
        )?;
        if !sol.report.converged {
            warnings.push(format!(
                "MAC {mac}: precoder not converged after {} iterations, residual {:e}",
                sol.report.iterations, sol.report.residual
            ));
        }
        note_accuracy(&mut warnings, &format!("MAC {mac}"), &sol.rate);
        candidates.push(DesignCandidate {
            mac,
            design: Design::Precoders(sol.pair),
            rate: sol.rate,
            multipliers: sol.multipliers,
            report: sol.report,
        });
    }
    let mut entries = Table::new(["mac", "user", "row", "col", "re", "im"]);
    let mut summary_t = Table::new([
        "mac",
        "rate",
        "p1",
        "p2",
        "iterations",
        "residual",
        "converged",
        "selected",
    ]);
    let outcome = select_design(candidates[0].clone(), candidates[1].clone());
    for c in &candidates {
        let Design::Precoders(pair) = &c.design else {
            unreachable!("precoder candidates")
        };
        for u in User::BOTH {
            let m = pair.get(u);
            for r in 0..m.nrows() {
                for col in 0..m.ncols() {
                    let z = m[(r, col)];
                    entries.push(vec![
                        (c.mac.index() + 1).into(),
                        (u.index() + 1).into(),
                        r.into(),
                        col.into(),
                        z.re.into(),
                        z.im.into(),
                    ])?;
                }
            }
        }
        let p = pair.powers();
        summary_t.push(vec![
            (c.mac.index() + 1).into(),
            rate(&c.rate, unit).into(),
            p.p1().into(),
            p.p2().into(),
            c.report.iterations.into(),
            c.report.residual.into(),
            i64::from(c.report.converged).into(),
            i64::from(c.mac == outcome.selected_mac).into(),
        ])?;
    }
    let summary = json!({
        "dimension": ch.dim(),
        "selected_mac": outcome.selected_mac.index() + 1,
        "selected_rate": rate(outcome.selected_rate(), unit),
    });
    Ok(Output {
        tables: vec![
            ("precoders.csv".into(), entries),
            ("precode_summary.csv".into(), summary_t),
        ],
        warnings,
        summary,
    })
}

/// `trace.csv`, `events.csv` and `blocks.csv` of one seeded trace.
pub fn sim(cfg: &SimConfig, link: Link, seed: u64, unit: Unit) -> Result<Output> {
    let scenario = cfg.scenario(link)?;
    let trace = run_trace(cfg.n_blocks, &scenario, seed)?;
    let mut warnings = Vec::new();
    let stalled = trace.records.iter().filter(|r| !r.converged).count();
    if stalled > 0 {
        warnings.push(format!(
            "{stalled} of {} blocks used a non-converged design",
            trace.records.len()
        ));
    }
    let to_unit = |nats: f64| RateValue::from_nats(nats).to(unit).value();
    let finals: Vec<Value> = trace
        .final_averages()
        .into_iter()
        .map(|(snr, mi, mmse)| json!({ "snr": snr, "mi_avg": to_unit(mi), "mmse_avg": mmse }))
        .collect();
    let summary = json!({
        "link": match link { Link::Uplink => "uplink", Link::Downlink => "downlink" },
        "realizations": cfg.n_blocks,
        "feedback_events": trace.events.len(),
        "final_averages": finals,
    });
    Ok(Output {
        tables: vec![
            ("trace.csv".into(), trace.trace_table(unit)),
            ("events.csv".into(), trace.events_table()),
            ("blocks.csv".into(), trace.blocks_table()),
        ],
        warnings,
        summary,
    })
}

/// `validation.csv` with one row per acceptance criterion.
/// Prints each criterion line to stderr when `verbose`.
pub fn validate(cfg: &ExperimentConfig, verbose: bool) -> Result<Output> {
    let wanted = &cfg.validate.criteria;
    if let Some(bad) = wanted
        .iter()
        .find(|&&c| !(1..=crate::validation::CRITERIA).contains(&(c as usize)))
    {
        return Err(cfg_err(
            "validate.criteria",
            format!(
                "no criterion {bad}; expected 1..={}",
                crate::validation::CRITERIA
            ),
        ));
    }
    let results = crate::validation::run_with(wanted, |r| {
        if verbose {
            eprintln!("{r}");
        }
    });
    let mut t = Table::new([
        "id",
        "name",
        "status",
        "measured",
        "threshold",
        "seconds",
        "detail",
    ]);
    let mut warnings = Vec::new();
    for r in &results {
        if !r.passed {
            warnings.push(format!("criterion {} failed: {}", r.id, r.detail));
        }
        t.push(vec![
            r.id.into(),
            r.name.into(),
            (if r.passed { "pass" } else { "fail" }).into(),
            r.measured.into(),
            r.threshold.into(),
            r.seconds.into(),
            r.detail.clone().into(),
        ])?;
    }
    let summary = json!({
        "run": results.len(),
        "passed": results.iter().filter(|r| r.passed).count(),
        "failed": results.iter().filter(|r| !r.passed).map(|r| r.id).collect::<Vec<_>>(),
    });
    Ok(Output {
        tables: vec![("validation.csv".into(), t)],
        warnings,
        summary,
    })
}
