//! Fixed-point power allocation for arbitrary inputs.
//!
//! At a stationary point of the priced joint rate each active user satisfies
//! `lambda_k sqrt(P_k) = (snr / sigma^2) g_k`, where `g_k` collects the own
//! error and the cross-covariance term. The damped iteration
//! `a_k <- (1 - alpha) a_k + alpha max(0, (snr / sigma^2) g_k / lambda_k)`
//! on the amplitudes `a_k = sqrt(P_k)` recomputes the error covariance each
//! sweep. The map is gradient ascent on `I - sum lambda_k P_k` in the
//! amplitudes, so a sweep that lowers that objective is retried with the
//! step halved; the fixed points are unchanged. Once halving sets in, Newton
//! steps on `T(a) - a` are tried first.

use serde::{Deserialize, Serialize};

use super::kkt::{self, KktReport};
use super::newton::{self, DRIFT, NEWTON_HALVINGS};
use super::{IterationReport, IterationSchedule, Multipliers};
use crate::channel::EstimatedChannel;
use crate::engine::{worse, AccuracyWarning, IntegrationEngine};
use crate::error::Result;
use crate::estimation::{evaluate_rx, RxEval, RxView};
use crate::ids::Mac;
use crate::info::{gradient_from_cov, RateValue, POWER_FLOOR};
use crate::inputs::InputSpec;
use crate::power::{Budgets, PowerProfile};

/// Armijo sufficient-increase constant.
pub(crate) const ARMIJO: f64 = 1e-4;
/// Step halvings tried per coordinate update.
pub(crate) const MAX_HALVINGS: usize = 40;
/// Relative offset of the curvature probe.
const NEWTON_PROBE: f64 = 1e-4;
/// Relative rate change treated as rounding in the priced ascent tests.
pub(crate) const ROUNDOFF: f64 = 1e-13;

/// A solved power problem with its certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSolution {
    pub powers: PowerProfile,
    pub multipliers: Multipliers,
    pub report: IterationReport,
    /// Joint rate of the MAC at `powers`.
    pub rate: RateValue,
    pub kkt: KktReport,
}

/// One evaluation of the priced map at amplitudes `a`.
struct Sweep {
    a: [f64; 2],
    eval: RxEval,
    /// Map image `T(a)`.
    t: [f64; 2],
    residual: f64,
}

/// Rate and `dI/dP` at one point.
struct Point {
    eval: RxEval,
    dp: [f64; 2],
}

fn evaluate(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    mac: Mac,
    engine: &IntegrationEngine,
) -> Result<Point> {
    let eval = evaluate_rx(&RxView::new(ch, powers, mac), inputs, engine)?;
    let pair = gradient_from_cov(ch, powers, &eval.cov, mac);
    let g = [pair.g1, pair.g2];
    // dI/dP_k at a zero power is the limit of g_k / sqrt(P_k)
    let mut floored = powers.as_array();
    floored.iter_mut().for_each(|p| *p = p.max(POWER_FLOOR));
    let fp = PowerProfile::new(floored[0], floored[1])?;
    let dp = if floored == powers.as_array() {
        let c = ch.snr() / ch.sigma_sq(mac);
        [c * g[0] / floored[0].sqrt(), c * g[1] / floored[1].sqrt()]
    } else {
        let e = evaluate_rx(&RxView::new(ch, &fp, mac), inputs, engine)?;
        let pf = gradient_from_cov(ch, &fp, &e.cov, mac);
        let c = ch.snr() / ch.sigma_sq(mac);
        [c * pf.g1 / floored[0].sqrt(), c * pf.g2 / floored[1].sqrt()]
    };
    Ok(Point { eval, dp })
}

fn rate_of(eval: &RxEval) -> RateValue {
    RateValue::from_nats(eval.mi).with_error(eval.mi_se, eval.warning.clone())
}

/// Priced fixed point for the joint rate of `mac`, started from `init`.
///
/// Hitting `max_iter` is reported through `report.converged`, not as an error.
pub fn fixed_point_power(
    ch: &EstimatedChannel,
    inputs: &[InputSpec; 2],
    mult: &Multipliers,
    mac: Mac,
    init: &PowerProfile,
    schedule: &IterationSchedule,
    engine: &IntegrationEngine,
) -> Result<PowerSolution> {
    mult.require_positive_lambda()?;
    schedule.validate()?;
    engine.validate()?;
    let c = ch.snr() / ch.sigma_sq(mac);
    let lambda = mult.lambda;
    let priced = |mi: f64, a: &[f64; 2]| mi - lambda[0] * a[0] * a[0] - lambda[1] * a[1] * a[1];
    let map = |x: &[f64]| -> Result<Sweep> {
        let p = PowerProfile::new(x[0] * x[0], x[1] * x[1])?;
        let eval = evaluate_rx(&RxView::new(ch, &p, mac), inputs, engine)?;
        let pair = gradient_from_cov(ch, &p, &eval.cov, mac);
        let t = [
            (c * pair.g1 / lambda[0]).max(0.0),
            (c * pair.g2 / lambda[1]).max(0.0),
        ];
        let a = [x[0], x[1]];
        let residual = (a[0] - t[0]).abs().max((a[1] - t[1]).abs());
        Ok(Sweep {
            a,
            eval,
            t,
            residual,
        })
    };
    let newton = |cur: &Sweep| -> Result<Option<Sweep>> {
        let r = [cur.t[0] - cur.a[0], cur.t[1] - cur.a[1]];
        let step = newton::correction(&cur.a, &r, |x| {
            let s = map(x)?;
            Ok(vec![s.t[0] - s.a[0], s.t[1] - s.a[1]])
        })?;
        let Some(d) = step else { return Ok(None) };
        let floor = priced(cur.eval.mi, &cur.a) - DRIFT * cur.eval.mi.abs().max(1.0);
        let mut scale = 1.0;
        for _ in 0..NEWTON_HALVINGS {
            let next = map(&[
                (cur.a[0] + scale * d[0]).max(0.0),
                (cur.a[1] + scale * d[1]).max(0.0),
            ])?;
            if next.residual < cur.residual && priced(next.eval.mi, &next.a) >= floor {
                return Ok(Some(next));
            }
            scale *= 0.5;
        }
        Ok(None)
    };
    let mut cur = map(&init.amplitudes())?;
    let mut shrink = 1.0;
    let mut warning: Option<AccuracyWarning> = None;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..schedule.max_iter {
        iterations = it + 1;
        warning = worse(warning, cur.eval.warning.clone());
        if cur.residual <= schedule.tol {
            converged = true;
            break;
        }
        let stiff = shrink < 1.0;
        let mut next = if stiff { newton(&cur)? } else { None };
        if next.is_none() {
            let alpha = schedule.alpha.alpha(it);
            let before = priced(cur.eval.mi, &cur.a);
            let slack = ROUNDOFF * cur.eval.mi.abs().max(1.0);
            let (a, t) = (cur.a, cur.t);
            for _ in 0..MAX_HALVINGS {
                let step = alpha * shrink;
                let trial = map(&[a[0] + step * (t[0] - a[0]), a[1] + step * (t[1] - a[1])])?;
                let gain: f64 = (0..2)
                    .map(|k| 2.0 * lambda[k] * (trial.a[k] - a[k]).powi(2) / step)
                    .sum();
                if priced(trial.eval.mi, &trial.a) >= before + ARMIJO * gain - slack {
                    next = Some(trial);
                    break;
                }
                shrink *= 0.5;
            }
        }
        if next.is_none() && !stiff {
            next = newton(&cur)?;
        }
        match next {
            Some(n) => cur = n,
            None => break,
        }
    }
    let (a, residual) = (cur.a, cur.residual);
    let powers = PowerProfile::new(a[0] * a[0], a[1] * a[1])?;
    let pt = evaluate(ch, &powers, inputs, mac, engine)?;
    let (kkt, mu) = kkt::priced(pt.dp, powers.as_array(), lambda);
    Ok(PowerSolution {
        powers,
        multipliers: Multipliers {
            lambda,
            mu,
            nu: mult.nu,
        },
        report: IterationReport {
            iterations,
            residual,
            converged,
            warning: worse(warning, pt.eval.warning.clone()),
        },
        rate: rate_of(&pt.eval),
        kkt,
    })
}

/// Starting points of [`budgeted_power`] as fractions of the budgets.
const BOX_STARTS: [[f64; 2]; 4] = [[1.0, 1.0], [1.0, 0.5], [0.5, 1.0], [0.5, 0.5]];

/// Maximizes the joint rate of `mac` over the box `0 <= P_k <= Q_k`.
///
/// Coordinate projected-gradient ascent with Armijo backtracking and a
/// per-coordinate step that doubles after each accepted move. Discrete
/// inputs make the rate non-concave (equal received powers are a stationary
/// dip), so the ascent runs from each point of a fixed set of starts, the
/// budgets first, and keeps the best; ties keep the earlier start. The
/// residual is the natural one, `max |P - clip(P + dI/dP)|`.
pub fn budgeted_power(
    ch: &EstimatedChannel,
    inputs: &[InputSpec; 2],
    budgets: &Budgets,
    mac: Mac,
    schedule: &IterationSchedule,
    engine: &IntegrationEngine,
) -> Result<PowerSolution> {
    schedule.validate()?;
    engine.validate()?;
    let q = budgets.as_array();
    let mut best: Option<PowerSolution> = None;
    let mut total = 0;
    for f in BOX_STARTS {
        let s = ascend(
            ch,
            inputs,
            q,
            [f[0] * q[0], f[1] * q[1]],
            mac,
            schedule,
            engine,
        )?;
        total += s.report.iterations;
        if best.as_ref().is_none_or(|b| s.rate.nats() > b.rate.nats()) {
            best = Some(s);
        }
    }
    let mut best = best.expect("at least one start");
    best.report.iterations = total;
    Ok(best)
}

fn ascend(
    ch: &EstimatedChannel,
    inputs: &[InputSpec; 2],
    q: [f64; 2],
    start: [f64; 2],
    mac: Mac,
    schedule: &IterationSchedule,
    engine: &IntegrationEngine,
) -> Result<PowerSolution> {
    let mut p = start;
    let mut step = [1.0f64; 2];
    let mut pt = evaluate(ch, &PowerProfile::new(p[0], p[1])?, inputs, mac, engine)?;
    let mut warning = pt.eval.warning.clone();
    let natural = |p: &[f64; 2], dp: &[f64; 2]| -> f64 {
        (0..2)
            .map(|k| (p[k] - (p[k] + dp[k]).clamp(0.0, q[k])).abs())
            .fold(0.0, f64::max)
    };
    let mut residual = natural(&p, &pt.dp);
    let mut iterations = 0;
    let mut converged = residual <= schedule.tol;
    while !converged && iterations < schedule.max_iter {
        iterations += 1;
        let mut stalled = true;
        for k in 0..2 {
            let d = pt.dp[k];
            let mut s = step[k];
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let mut trial = p;
                trial[k] = (p[k] + s * d).clamp(0.0, q[k]);
                let moved = trial[k] - p[k];
                if moved == 0.0 {
                    break;
                }
                let tp = evaluate(
                    ch,
                    &PowerProfile::new(trial[0], trial[1])?,
                    inputs,
                    mac,
                    engine,
                )?;
                if tp.eval.mi >= pt.eval.mi + ARMIJO * d * moved {
                    p = trial;
                    warning = worse(warning, tp.eval.warning.clone());
                    pt = tp;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            stalled &= !accepted;
            step[k] = if accepted { 2.0 * s } else { s.max(1e-12) };
        }
        if stalled {
            // Rate differences fall below quadrature noise near the optimum;
            // finish with Newton steps on the gradient itself.
            for k in 0..2 {
                let before = natural(&p, &pt.dp);
                let eps = NEWTON_PROBE * p[k].max(1e-3);
                let mut probe = p;
                probe[k] = (p[k] - eps).max(0.0);
                let pp = evaluate(
                    ch,
                    &PowerProfile::new(probe[0], probe[1])?,
                    inputs,
                    mac,
                    engine,
                )?;
                let curvature = (pt.dp[k] - pp.dp[k]) / (p[k] - probe[k]);
                if curvature.is_nan() || curvature >= 0.0 {
                    continue;
                }
                let mut trial = p;
                trial[k] = (p[k] - pt.dp[k] / curvature).clamp(0.0, q[k]);
                let tp = evaluate(
                    ch,
                    &PowerProfile::new(trial[0], trial[1])?,
                    inputs,
                    mac,
                    engine,
                )?;
                if natural(&trial, &tp.dp) < before {
                    p = trial;
                    warning = worse(warning, tp.eval.warning.clone());
                    pt = tp;
                }
            }
        }
        residual = natural(&p, &pt.dp);
        converged = residual <= schedule.tol;
    }
    let powers = PowerProfile::new(p[0], p[1])?;
    let (kkt, lambda, mu) = kkt::boxed(pt.dp, p, q);
    Ok(PowerSolution {
        powers,
        multipliers: Multipliers {
            lambda,
            mu,
            nu: lambda,
        },
        report: IterationReport {
            iterations,
            residual,
            converged,
            warning,
        },
        rate: rate_of(&pt.eval),
        kkt: KktReport {
            stationarity: residual,
            ..kkt
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::info::mi_sum;
    use crate::optimizer::{gaussian_power, StepSchedule};
    use crate::seed;

    fn gauss2() -> [InputSpec; 2] {
        [InputSpec::Gaussian, InputSpec::Gaussian]
    }

    fn bpsk2() -> [InputSpec; 2] {
        [InputSpec::Bpsk, InputSpec::Bpsk]
    }

    fn tight() -> IterationSchedule {
        IterationSchedule::default()
            .with_max_iter(20000)
            .with_tol(1e-9)
    }

    fn gh() -> IntegrationEngine {
        IntegrationEngine::gauss_hermite(16)
    }

    #[test]
    fn gaussian_fixed_point_matches_closed_form() {
        for i in 0..8u64 {
            let ch = EstimatedChannel::perfect(
                &sample_channel(seed::derive(3, 1, i), 1.0, i % 2 == 0).unwrap(),
            );
            let m = Multipliers::new(0.25, 0.3).unwrap();
            for mac in Mac::BOTH {
                let cf = gaussian_power(&ch, &m, mac).unwrap();
                let fp = fixed_point_power(
                    &ch,
                    &gauss2(),
                    &m,
                    mac,
                    &PowerProfile::new(2.0, 2.0).unwrap(),
                    &tight(),
                    &gh(),
                )
                .unwrap();
                assert!(fp.report.converged, "{:?}", fp.report);
                assert!(
                    (fp.powers.p1() - cf.p1()).abs() < 1e-4,
                    "{:?} vs {:?}",
                    fp.powers,
                    cf
                );
                assert!(
                    (fp.powers.p2() - cf.p2()).abs() < 1e-4,
                    "{:?} vs {:?}",
                    fp.powers,
                    cf
                );
                assert!(fp.kkt.passes(1e-6), "{:?}", fp.kkt);
            }
        }
    }

    #[test]
    fn lone_user_reaches_its_budget() {
        // with P2 = 0 and lambda1 = dI/dP1 at Q1 the fixed point sits at Q1
        let ch = EstimatedChannel::real([[1.0, 1.0], [1.0, 1.0]], 1.0).unwrap();
        let q1 = 2.0;
        let lambda1 = 1.0 / (1.0 + q1);
        let m = Multipliers::new(lambda1, 1.0).unwrap();
        let fp = fixed_point_power(
            &ch,
            &gauss2(),
            &m,
            Mac::One,
            &PowerProfile::new(0.5, 0.0).unwrap(),
            &tight(),
            &gh(),
        )
        .unwrap();
        assert!((fp.powers.p1() - q1).abs() < 1e-6);
        assert_eq!(fp.powers.p2(), 0.0);
    }

    #[test]
    fn bpsk_fixed_point_satisfies_the_scalar_form() {
        let ch = EstimatedChannel::real([[1.0, 1.0], [1.0, 1.0]], 1.0).unwrap();
        let m = Multipliers::new(0.15, 0.15).unwrap();
        let sched = IterationSchedule {
            alpha: StepSchedule::Constant { alpha: 0.5 },
            max_iter: 5000,
            tol: 1e-10,
        };
        let engine = IntegrationEngine::gauss_hermite(32);
        let fp = fixed_point_power(
            &ch,
            &bpsk2(),
            &m,
            Mac::One,
            &PowerProfile::new(2.0, 2.0).unwrap(),
            &sched,
            &engine,
        )
        .unwrap();
        assert!(fp.report.converged);
        let mmse = crate::estimation::mmse_matrix(&ch, &fp.powers, &bpsk2(), &engine).unwrap();
        let a = fp.powers.amplitudes();
        // lambda_m a_m = |h_mm|^2 a_m E_mm + Re(h_mm h_mi a_i E_im)
        for (k, o) in [(0usize, 1usize), (1, 0)] {
            let e = mmse.at(Mac::One);
            let own = e.err(crate::ids::User::from_index(k));
            let cross = e
                .entry(
                    crate::ids::User::from_index(o),
                    crate::ids::User::from_index(k),
                )
                .re;
            let rhs = a[k] * own + a[o] * cross;
            assert!(
                (m.lambda[k] * a[k] - rhs).abs() < 1e-6,
                "{k}: {} vs {}",
                m.lambda[k] * a[k],
                rhs
            );
        }
    }

    #[test]
    fn iteration_cap_is_a_diagnostic() {
        let ch = EstimatedChannel::real([[1.0, 0.5], [0.5, 1.0]], 1.0).unwrap();
        let sched = IterationSchedule::default().with_max_iter(2);
        let fp = fixed_point_power(
            &ch,
            &bpsk2(),
            &Multipliers::new(0.2, 0.2).unwrap(),
            Mac::One,
            &PowerProfile::new(2.0, 2.0).unwrap(),
            &sched,
            &gh(),
        )
        .unwrap();
        assert!(!fp.report.converged);
        assert_eq!(fp.report.iterations, 2);
        assert!(fp.report.residual.is_finite());
    }

    #[test]
    fn gaussian_box_optimum_is_the_budget() {
        let ch = EstimatedChannel::real([[1.0, 0.7], [0.4, 1.0]], 1.0).unwrap();
        let b = Budgets::new(2.0, 1.5).unwrap();
        let s = budgeted_power(
            &ch,
            &gauss2(),
            &b,
            Mac::One,
            &IterationSchedule::default(),
            &gh(),
        )
        .unwrap();
        assert_eq!(s.powers.as_array(), [2.0, 1.5]);
        assert!(s.kkt.passes(1e-6));
    }

    #[test]
    fn bpsk_box_optimum_beats_the_budget_point() {
        let ch = EstimatedChannel::real([[1.0, 1.0], [1.0, 1.0]], 10.0).unwrap();
        let b = Budgets::new(2.0, 2.0).unwrap();
        let engine = IntegrationEngine::gauss_hermite(32);
        let sched = IterationSchedule::default()
            .with_max_iter(2000)
            .with_tol(1e-7);
        let s = budgeted_power(&ch, &bpsk2(), &b, Mac::One, &sched, &engine).unwrap();
        assert!(s.report.converged, "{:?}", s.report);
        assert!(s.kkt.passes(1e-6), "{:?}", s.kkt);
        let at_q = mi_sum(
            &ch,
            &PowerProfile::new(2.0, 2.0).unwrap(),
            &bpsk2(),
            Mac::One,
            &engine,
        )
        .unwrap();
        assert!(s.rate.nats() > at_q.nats() + 1e-3);
    }
}
