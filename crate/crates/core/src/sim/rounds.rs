//! One uplink power round and one downlink precoding round.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::state::{assemble, BackhaulConfig, BsState, CsiRow, Decoder};
use super::{PowerPolicy, SolverConfig};
use crate::channel::{ArModel, ChannelMatrix, EstimatedChannel};
use crate::error::{Error, Result};
use crate::ids::{Mac, User};
use crate::info::{mi_interference_as_noise, mi_sum, InterferenceModel, RateValue};
use crate::optimizer::{
    budgeted_power, fixed_point_power, fixed_point_precoder, select_design, Design,
    DesignCandidate, DesignOutcome, IterationReport, MimoChannel, Multipliers, PowerSolution,
    PrecoderPair, SvdFactors,
};
use crate::power::PowerProfile;
use crate::C64;

/// Whether the base stations exchanged rows in a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Cooperative,
    NoCooperation,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Cooperative => "cooperative",
            Mode::NoCooperation => "no-cooperation",
        })
    }
}

/// Result of an uplink round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlOutcome {
    pub mode: Mode,
    /// Powers fed back to the two users.
    pub powers: PowerProfile,
    /// The joint selection; absent without cooperation.
    pub outcome: Option<DesignOutcome>,
    /// Selected MAC rate when cooperating, otherwise the weaker own-cell
    /// rate with the interferer treated as noise.
    pub rate: RateValue,
}

/// Result of a downlink round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlOutcome {
    pub outcome: DesignOutcome,
    /// The estimate both base stations designed for.
    pub estimate: EstimatedChannel,
    /// Coefficients multiplying `x_1` at BS1 and `x_2` at BS2.
    pub transmissions: [C64; 2],
}

fn check_pair(bs1: &BsState, bs2: &BsState) -> Result<()> {
    if bs1.id() != Mac::One || bs2.id() != Mac::Two {
        return Err(Error::Argument(
            "expected base stations 1 and 2 in order".into(),
        ));
    }
    Ok(())
}

/// Uplink power round.
///
/// With `bandwidth_load >= tau` each base station sets its own user's power
/// from its own row, the other user treated as Gaussian noise at its budget,
/// and the peer slot is never touched. Otherwise the rows are exchanged, both
/// base stations form the two MAC candidates under `cfg.policy` and the
/// min-max selection picks the powers.
pub fn ul_round(
    bs1: &mut BsState,
    bs2: &mut BsState,
    backhaul: &BackhaulConfig,
    cfg: &SolverConfig,
) -> Result<UlOutcome> {
    check_pair(bs1, bs2)?;
    backhaul.validate()?;
    cfg.validate()?;
    let row1 = bs1.newest()?.clone();
    let row2 = bs2.newest()?.clone();
    bs1.begin_round();
    bs2.begin_round();

    if !backhaul.cooperates() {
        let (p1, view1, scale1) = local_solve(&row1, cfg)?;
        let (p2, view2, scale2) = local_solve(&row2, cfg)?;
        let powers = PowerProfile::new(p1, p2)?;
        let r1 = own_cell_rate(&row1, &powers, cfg)?;
        let r2 = own_cell_rate(&row2, &powers, cfg)?;
        let rate = if r2.nats() < r1.nats() { r2 } else { r1 };
        bs1.commit(Design::Powers(powers), decoder(view1, powers, scale1));
        bs2.commit(Design::Powers(powers), decoder(view2, powers, scale2));
        return Ok(UlOutcome {
            mode: Mode::NoCooperation,
            powers,
            outcome: None,
            rate,
        });
    }

    bs1.receive(row2);
    bs2.receive(row1);
    let (ch, out) = cooperative_ul(bs1, cfg)?;
    let (ch2, out2) = cooperative_ul(bs2, cfg)?;
    if ch != ch2 || out != out2 {
        return Err(Error::Precondition(
            "base stations reached different selections".into(),
        ));
    }
    let powers = out.design.powers();
    bs1.commit(out.design.clone(), decoder(ch.clone(), powers, 1.0));
    bs2.commit(out.design.clone(), decoder(ch, powers, 1.0));
    Ok(UlOutcome {
        mode: Mode::Cooperative,
        powers,
        rate: out.selected_rate().clone(),
        outcome: Some(out),
    })
}

fn decoder(channel: EstimatedChannel, powers: PowerProfile, input_scale: f64) -> Decoder {
    Decoder {
        channel,
        powers,
        input_scale,
    }
}

/// Own-user power from a single row.
///
/// The interferer at its budget is folded into the noise by scaling the own
/// gain by `sqrt(f)`, `f = sigma^2 / (sigma^2 + snr |h_int|^2 Q_int)`, which
/// leaves `sigma^2` and the horizon untouched. Returns the power, the view
/// and `sqrt(f)`.
fn local_solve(row: &CsiRow, cfg: &SolverConfig) -> Result<(f64, EstimatedChannel, f64)> {
    let mac = row.rx;
    let own = mac.own_user();
    let other = own.other();
    let q_int = cfg.budgets.q(other);
    let f = row.sigma_sq / (row.sigma_sq + row.snr * row.h[other.index()].norm_sqr() * q_int);
    let mut h = [C64::new(0.0, 0.0); 2];
    h[own.index()] = row.h[own.index()] * f.sqrt();
    let view = EstimatedChannel::new([h, h], [row.sigma_sq; 2], row.horizon, row.snr)?;
    let p = match cfg.policy {
        PowerPolicy::Budget => cfg.budgets.q(own),
        PowerPolicy::Optimized => budgeted_power(
            &view,
            &cfg.inputs,
            &cfg.budgets,
            mac,
            &cfg.schedule,
            &cfg.engine,
        )?
        .powers
        .p(own),
        PowerPolicy::Priced { lambda } => {
            let mult = Multipliers::new(lambda[0], lambda[1])?;
            let init = PowerProfile::from(cfg.budgets);
            fixed_point_power(
                &view,
                &cfg.inputs,
                &mult,
                mac,
                &init,
                &cfg.schedule,
                &cfg.engine,
            )?
            .powers
            .p(own)
        }
    };
    Ok((p, view, f.sqrt()))
}

/// `I(x_k; y_k)` from row `k` alone, the other user's law kept exact.
fn own_cell_rate(row: &CsiRow, powers: &PowerProfile, cfg: &SolverConfig) -> Result<RateValue> {
    // both receivers carry this row, so the interfering receiver of the own user is row k
    let ch = EstimatedChannel::new([row.h, row.h], [row.sigma_sq; 2], row.horizon, row.snr)?;
    mi_interference_as_noise(
        &ch,
        powers,
        &cfg.inputs,
        row.rx.own_user(),
        InterferenceModel::Exact,
        &cfg.engine,
    )
}

fn cooperative_ul(
    bs: &mut BsState,
    cfg: &SolverConfig,
) -> Result<(EstimatedChannel, DesignOutcome)> {
    let own = bs.newest()?.clone();
    let peer = bs.read_peer()?;
    let ch = assemble(&own, &peer)?;
    let c1 = power_candidate(&ch, Mac::One, cfg)?;
    let c2 = power_candidate(&ch, Mac::Two, cfg)?;
    Ok((ch, select_design(c1, c2)))
}

fn from_solution(mac: Mac, s: PowerSolution) -> DesignCandidate {
    DesignCandidate {
        mac,
        design: Design::Powers(s.powers),
        rate: s.rate,
        multipliers: s.multipliers,
        report: s.report,
    }
}

fn power_candidate(ch: &EstimatedChannel, mac: Mac, cfg: &SolverConfig) -> Result<DesignCandidate> {
    let init = PowerProfile::from(cfg.budgets);
    match cfg.policy {
        PowerPolicy::Budget => {
            let rate = mi_sum(ch, &init, &cfg.inputs, mac, &cfg.engine)?;
            let warning = rate.warning.clone();
            Ok(DesignCandidate {
                mac,
                design: Design::Powers(init),
                rate,
                multipliers: Multipliers {
                    lambda: [0.0; 2],
                    mu: [0.0; 2],
                    nu: [0.0; 2],
                },
                report: IterationReport {
                    iterations: 0,
                    residual: 0.0,
                    converged: true,
                    warning,
                },
            })
        }
        PowerPolicy::Optimized => Ok(from_solution(
            mac,
            budgeted_power(
                ch,
                &cfg.inputs,
                &cfg.budgets,
                mac,
                &cfg.schedule,
                &cfg.engine,
            )?,
        )),
        PowerPolicy::Priced { lambda } => {
            let mult = Multipliers::new(lambda[0], lambda[1])?;
            Ok(from_solution(
                mac,
                fixed_point_power(
                    ch,
                    &cfg.inputs,
                    &mult,
                    mac,
                    &init,
                    &cfg.schedule,
                    &cfg.engine,
                )?,
            ))
        }
    }
}

/// Row of `bs` for the coming block.
///
/// Horizon 0 uses the newest pilot; horizon `j >= 1` continues the AR
/// recursion over the pilot history, with `sigma^2 = 1 + 2 var_j`.
fn predicted_row(bs: &BsState, ar: &ArModel, horizon: usize) -> Result<CsiRow> {
    let hist = bs.local();
    if hist.len() < ar.order() {
        return Err(Error::Precondition(format!(
            "base station {} holds {} pilots, AR order {} needs {}",
            bs.id(),
            hist.len(),
            ar.order(),
            ar.order()
        )));
    }
    let last = bs.newest()?;
    if horizon == 0 {
        return Ok(last.clone());
    }
    let rows: Vec<[C64; 2]> = hist.iter().map(|r| r.h).collect();
    let pred = ar.extrapolate(&rows, horizon)?;
    Ok(CsiRow {
        rx: bs.id(),
        h: pred[horizon - 1],
        sigma_sq: 1.0 + 2.0 * ar.error_variance(horizon),
        horizon,
        snr: last.snr,
    })
}

/// Downlink precoding round for the scalar link model.
///
/// Each base station predicts its row `horizon` blocks past its newest
/// pilot, the rows are exchanged, each MAC's precoder fixed point starts
/// from the SVD initialization and the min-max selection picks the pair.
/// The transmit coefficients combine the true gains in `truth` with the
/// right singular vectors `V` of the estimated `2 x 2` gain matrix:
/// BS1 sends `(h11 V_11 + h12 V_21) sqrt(P1) x1`, BS2 sends
/// `(h21 V_12 + h22 V_22) sqrt(P2) x2`.
pub fn dl_round(
    bs1: &mut BsState,
    bs2: &mut BsState,
    ar: &ArModel,
    horizon: usize,
    truth: &ChannelMatrix,
    cfg: &SolverConfig,
) -> Result<DlOutcome> {
    check_pair(bs1, bs2)?;
    cfg.validate()?;
    let row1 = predicted_row(bs1, ar, horizon)?;
    let row2 = predicted_row(bs2, ar, horizon)?;
    bs1.begin_round();
    bs2.begin_round();
    bs1.receive(row2.clone());
    bs2.receive(row1.clone());
    let (ch, out) = cooperative_dl(bs1, &row1, cfg)?;
    let (ch2, out2) = cooperative_dl(bs2, &row2, cfg)?;
    if ch != ch2 || out != out2 {
        return Err(Error::Precondition(
            "base stations reached different selections".into(),
        ));
    }
    let powers = out.design.powers();
    let (eff, _) = with_design(&ch, &out.design)?;
    bs1.commit(out.design.clone(), decoder(eff.clone(), powers, 1.0));
    bs2.commit(out.design.clone(), decoder(eff, powers, 1.0));

    let est = DMatrix::from_fn(2, 2, |k, l| ch.gains()[k][l]);
    let v = SvdFactors::of(&est).v;
    let h = truth.gains();
    let s = powers.amplitudes();
    let transmissions = [
        (h[0][0] * v[(0, 0)] + h[0][1] * v[(1, 0)]) * s[0],
        (h[1][0] * v[(0, 1)] + h[1][1] * v[(1, 1)]) * s[1],
    ];
    Ok(DlOutcome {
        outcome: out,
        estimate: ch,
        transmissions,
    })
}

fn cooperative_dl(
    bs: &mut BsState,
    own: &CsiRow,
    cfg: &SolverConfig,
) -> Result<(EstimatedChannel, DesignOutcome)> {
    let peer = bs.read_peer()?;
    let ch = assemble(own, &peer)?;
    let mimo = MimoChannel::from_scalar(&ch);
    let mult = Multipliers {
        lambda: cfg.nu,
        mu: [0.0; 2],
        nu: cfg.nu,
    };
    let mut cands = Vec::with_capacity(2);
    for mac in Mac::BOTH {
        let init = PrecoderPair::svd_init(&mimo, mac, &cfg.budgets);
        let s = fixed_point_precoder(
            &mimo,
            &cfg.inputs,
            &mult,
            mac,
            &init,
            &cfg.budgets,
            cfg.normalization,
            &cfg.schedule,
            &cfg.engine,
        )?;
        cands.push(DesignCandidate {
            mac,
            design: Design::Precoders(s.pair),
            rate: s.rate,
            multipliers: s.multipliers,
            report: s.report,
        });
    }
    let c2 = cands.pop().expect("two candidates");
    let c1 = cands.pop().expect("two candidates");
    Ok((ch, select_design(c1, c2)))
}

/// The scalar channel seen through a design: gains pick up the phase of
/// each `1 x 1` precoder. Returns it with the design's powers.
pub(crate) fn with_design(
    ch: &EstimatedChannel,
    design: &Design,
) -> Result<(EstimatedChannel, PowerProfile)> {
    let powers = design.powers();
    match design {
        Design::Powers(_) => Ok((ch.clone(), powers)),
        Design::Precoders(pair) => {
            if pair.get(User::One).nrows() != 1 {
                return Err(Error::Argument(
                    "only 1 x 1 precoders act on a scalar channel".into(),
                ));
            }
            let phase = |u: User| {
                let z = pair.get(u)[(0, 0)];
                if z.norm() > 0.0 {
                    z / z.norm()
                } else {
                    C64::new(1.0, 0.0)
                }
            };
            let ph = [phase(User::One), phase(User::Two)];
            let g = ch.gains();
            let h = [
                [g[0][0] * ph[0], g[0][1] * ph[1]],
                [g[1][0] * ph[0], g[1][1] * ph[1]],
            ];
            let sigma = [ch.sigma_sq(Mac::One), ch.sigma_sq(Mac::Two)];
            Ok((
                EstimatedChannel::new(h, sigma, ch.horizon(), ch.snr())?,
                powers,
            ))
        }
    }
}
