//! Multi-block runs over an AR channel trace and an snr grid.
//!
//! Every realization is one block of a single AR trace; the same trace is
//! replayed at each snr, so averages at different snr share their channels.
//! Running means are the sequential sum of the instantaneous values divided
//! by the count, which is also how they are rechecked.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rounds::{dl_round, ul_round, with_design, Mode};
use super::state::{assemble, BackhaulConfig, BsState, CsiRow};
use super::SolverConfig;
use crate::channel::{ar_trace, ArModel, ChannelMatrix, EstimatedChannel, FrameConfig};
use crate::error::{check_nonneg, check_positive, Error, Result};
use crate::estimation::mmse_matrix;
use crate::ids::Mac;
use crate::info::{mi_sum, RateValue, Unit};
use crate::optimizer::Design;
use crate::table::{Cell, Table};

/// Which round the blocks run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    #[default]
    Uplink,
    Downlink,
}

/// When the users feed pilots back in the downlink.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeedbackPolicy {
    /// After every block.
    #[default]
    EveryBlock,
    /// Only once the next prediction's `sigma^2` would exceed the ceiling.
    Ceiling { max_sigma_sq: f64 },
}

/// Everything a trace needs besides the realization count and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub link: Link,
    pub snr_grid: Vec<f64>,
    pub ar: ArModel,
    pub frame: FrameConfig,
    pub backhaul: BackhaulConfig,
    pub solver: SolverConfig,
    pub feedback: FeedbackPolicy,
    /// Real Rayleigh gains instead of circular complex ones.
    pub real_only: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            link: Link::Uplink,
            snr_grid: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            ar: ArModel::default(),
            frame: FrameConfig::default(),
            backhaul: BackhaulConfig::default(),
            solver: SolverConfig::default(),
            feedback: FeedbackPolicy::EveryBlock,
            real_only: true,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid.is_empty() {
            return Err(Error::Argument("snr grid is empty".into()));
        }
        for &s in &self.snr_grid {
            check_nonneg("snr", s)?;
        }
        self.frame.validate()?;
        self.backhaul.validate()?;
        self.solver.validate()?;
        if let FeedbackPolicy::Ceiling { max_sigma_sq } = self.feedback {
            check_positive("max_sigma_sq", max_sigma_sq)?;
        }
        Ok(())
    }
}

/// Kind of a feedback event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Pilots reached the base stations; their estimates restart at horizon 0.
    PilotSent,
    /// No pilots; the next block extends the prediction by one step.
    PredictionRefreshed,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::PilotSent => "pilot_sent",
            EventKind::PredictionRefreshed => "prediction_refreshed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub block: usize,
    pub kind: EventKind,
}

/// One block at one snr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub snr: f64,
    pub realization: usize,
    pub truth: ChannelMatrix,
    /// The rows both base stations held for the block.
    pub estimate: EstimatedChannel,
    pub mode: Mode,
    pub selected_mac: Option<Mac>,
    pub design: Design,
    /// Rate of the selected MAC on the true channel, in nats; the weaker
    /// own-cell rate without cooperation.
    pub mi_inst: f64,
    pub mi_avg: f64,
    /// Mean own-cell error on the true channel.
    pub mmse_inst: f64,
    pub mmse_avg: f64,
    pub converged: bool,
}

/// Per-block records grouped by snr (grid order, then realization order)
/// and the feedback events, which do not depend on snr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub records: Vec<BlockRecord>,
    pub events: Vec<FeedbackEvent>,
}

fn to_unit(nats: f64, unit: Unit) -> f64 {
    RateValue::from_nats(nats).to(unit).value()
}

impl SimTrace {
    /// Rows of one snr value, in realization order.
    fn groups(&self) -> Vec<&[BlockRecord]> {
        self.records
            .chunk_by(|a, b| a.snr == b.snr && b.realization > a.realization)
            .collect()
    }

    /// `realization, snr, mi_inst, mi_avg, mmse_inst, mmse_avg` with rates
    /// in `unit`; the averages are running means of the printed values.
    pub fn trace_table(&self, unit: Unit) -> Table {
        let mut t = Table::new([
            "realization",
            "snr",
            "mi_inst",
            "mi_avg",
            "mmse_inst",
            "mmse_avg",
        ]);
        for g in self.groups() {
            let mut mi = Running::default();
            let mut mmse = Running::default();
            for r in g {
                let inst = to_unit(r.mi_inst, unit);
                let row = vec![
                    Cell::from(r.realization),
                    Cell::from(r.snr),
                    Cell::from(inst),
                    Cell::from(mi.push(inst)),
                    Cell::from(r.mmse_inst),
                    Cell::from(mmse.push(r.mmse_inst)),
                ];
                t.push(row).expect("six cells");
            }
        }
        t
    }

    /// `block, event_type`.
    pub fn events_table(&self) -> Table {
        let mut t = Table::new(["block", "event_type"]);
        for e in &self.events {
            t.push(vec![Cell::from(e.block), Cell::from(e.kind.to_string())])
                .expect("two cells");
        }
        t
    }

    /// True and estimated gains, mode and design of every record.
    pub fn blocks_table(&self) -> Table {
        let mut header: Vec<String> = [
            "realization",
            "snr",
            "mode",
            "selected_mac",
            "p1",
            "p2",
            "horizon",
            "sigma_sq",
        ]
        .map(String::from)
        .to_vec();
        for src in ["true", "est"] {
            for k in 1..=2 {
                for l in 1..=2 {
                    header.push(format!("{src}_h{k}{l}_re"));
                    header.push(format!("{src}_h{k}{l}_im"));
                }
            }
        }
        let mut t = Table::new(header);
        for r in &self.records {
            let p = r.design.powers();
            let mut row = vec![
                Cell::from(r.realization),
                Cell::from(r.snr),
                Cell::from(r.mode.to_string()),
                r.selected_mac
                    .map_or(Cell::from("none"), |m| Cell::from(m.index() + 1)),
                Cell::from(p.p1()),
                Cell::from(p.p2()),
                Cell::from(r.estimate.horizon()),
                Cell::from(r.estimate.sigma_sq(Mac::One)),
            ];
            for g in [r.truth.gains(), r.estimate.gains()] {
                for z in g.iter().flatten() {
                    row.push(Cell::from(z.re));
                    row.push(Cell::from(z.im));
                }
            }
            t.push(row).expect("header and row built together");
        }
        t
    }

    /// Recomputes every running mean from scratch and compares bitwise.
    pub fn running_means_exact(&self) -> bool {
        self.groups().iter().all(|g| {
            (0..g.len()).all(|i| {
                let mi: f64 = g[..=i].iter().map(|r| r.mi_inst).sum::<f64>() / (i + 1) as f64;
                let mmse: f64 = g[..=i].iter().map(|r| r.mmse_inst).sum::<f64>() / (i + 1) as f64;
                mi == g[i].mi_avg && mmse == g[i].mmse_avg
            })
        })
    }

    /// `(snr, final mean MI in nats, final mean MMSE)` per grid point.
    pub fn final_averages(&self) -> Vec<(f64, f64, f64)> {
        self.groups()
            .iter()
            .map(|g| {
                let last = g.last().expect("groups are non-empty");
                (last.snr, last.mi_avg, last.mmse_avg)
            })
            .collect()
    }
}

/// Sequential sum and count.
#[derive(Default)]
struct Running {
    sum: f64,
    n: usize,
}

impl Running {
    fn push(&mut self, x: f64) -> f64 {
        self.sum += x;
        self.n += 1;
        self.sum / self.n as f64
    }
}

/// Horizon of each block's design and the feedback event after it.
fn schedule(scenario: &Scenario, n: usize) -> (Vec<usize>, Vec<FeedbackEvent>) {
    let mut horizons = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    let mut since = 0usize;
    for block in 0..n {
        let horizon = match scenario.link {
            Link::Uplink => 0,
            Link::Downlink => since + 1,
        };
        horizons.push(horizon);
        let send = match (scenario.link, scenario.feedback) {
            (Link::Uplink, _) | (_, FeedbackPolicy::EveryBlock) => true,
            (Link::Downlink, FeedbackPolicy::Ceiling { max_sigma_sq }) => {
                1.0 + 2.0 * scenario.ar.error_variance(horizon + 1) > max_sigma_sq
            }
        };
        let kind = if send {
            since = 0;
            EventKind::PilotSent
        } else {
            since += 1;
            EventKind::PredictionRefreshed
        };
        events.push(FeedbackEvent { block, kind });
    }
    (horizons, events)
}

/// Runs `n_realizations` blocks at every snr of the grid.
///
/// The first `L` draws of the AR trace seed the pilot history and are not
/// reported. Uplink blocks use the block's own pilots; downlink blocks use
/// the AR prediction from the pilots fed back so far, and feedback resends
/// the last `L` block estimates. Grid points run in parallel; the output is
/// a pure function of `(n_realizations, scenario, seed)`.
pub fn run_trace(n_realizations: usize, scenario: &Scenario, seed: u64) -> Result<SimTrace> {
    if n_realizations == 0 {
        return Err(Error::Argument("n_realizations must be >= 1".into()));
    }
    scenario.validate()?;
    let warm = scenario.ar.order();
    let channels = ar_trace(
        &scenario.ar,
        n_realizations + warm,
        1.0,
        scenario.real_only,
        seed,
    )?;
    let (horizons, events) = schedule(scenario, n_realizations);
    let groups = scenario
        .snr_grid
        .par_iter()
        .map(|&snr| run_at_snr(snr, &channels, &horizons, &events, scenario))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimTrace {
        records: groups.into_iter().flatten().collect(),
        events,
    })
}

fn pilots(chans: &[ChannelMatrix], rx: Mac) -> impl Iterator<Item = CsiRow> + '_ {
    chans.iter().map(move |c| CsiRow::pilot(c, rx))
}

fn run_at_snr(
    snr: f64,
    channels: &[ChannelMatrix],
    horizons: &[usize],
    events: &[FeedbackEvent],
    scenario: &Scenario,
) -> Result<Vec<BlockRecord>> {
    let chans = channels
        .iter()
        .map(|c| c.with_snr(snr))
        .collect::<Result<Vec<_>>>()?;
    let warm = scenario.ar.order();
    let cfg = &scenario.solver;
    let mut bs1 = BsState::with_pilots(Mac::One, pilots(&chans[..warm], Mac::One))?;
    let mut bs2 = BsState::with_pilots(Mac::Two, pilots(&chans[..warm], Mac::Two))?;
    let mut mi = Running::default();
    let mut mmse = Running::default();
    let mut out = Vec::with_capacity(horizons.len());
    for (b, &horizon) in horizons.iter().enumerate() {
        let now = warm + b;
        let truth = &chans[now];
        let perfect = EstimatedChannel::perfect(truth);
        let (estimate, mode, selected, design, mi_inst, converged) = match scenario.link {
            Link::Uplink => {
                bs1.push_pilot(CsiRow::pilot(truth, Mac::One))?;
                bs2.push_pilot(CsiRow::pilot(truth, Mac::Two))?;
                let o = ul_round(&mut bs1, &mut bs2, &scenario.backhaul, cfg)?;
                let estimate = assemble(bs1.newest()?, bs2.newest()?)?;
                let selected = o.outcome.as_ref().map(|s| s.selected_mac);
                let converged = o.outcome.as_ref().is_none_or(|s| s.converged);
                (
                    estimate,
                    o.mode,
                    selected,
                    Design::Powers(o.powers),
                    o.rate.nats(),
                    converged,
                )
            }
            Link::Downlink => {
                let o = dl_round(&mut bs1, &mut bs2, &scenario.ar, horizon, truth, cfg)?;
                let (eff, powers) = with_design(&perfect, &o.outcome.design)?;
                let rate = mi_sum(
                    &eff,
                    &powers,
                    &cfg.inputs,
                    o.outcome.selected_mac,
                    &cfg.engine,
                )?;
                if events[b].kind == EventKind::PilotSent {
                    let from = (now + 1).saturating_sub(warm);
                    for c in &chans[from..=now] {
                        bs1.push_pilot(CsiRow::pilot(c, Mac::One))?;
                        bs2.push_pilot(CsiRow::pilot(c, Mac::Two))?;
                    }
                }
                let converged = o.outcome.converged;
                let selected = Some(o.outcome.selected_mac);
                (
                    o.estimate,
                    Mode::Cooperative,
                    selected,
                    o.outcome.design,
                    rate.nats(),
                    converged,
                )
            }
        };
        let (eff, powers) = with_design(&perfect, &design)?;
        let mmse_inst = mmse_matrix(&eff, &powers, &cfg.inputs, &cfg.engine)?.system_mmse();
        out.push(BlockRecord {
            snr,
            realization: b,
            truth: truth.clone(),
            estimate,
            mode,
            selected_mac: selected,
            design,
            mi_inst,
            mi_avg: mi.push(mi_inst),
            mmse_inst,
            mmse_avg: mmse.push(mmse_inst),
            converged,
        });
    }
    Ok(out)
}
