//! Closed-form Gaussian-input power allocation and price tuning.
//!
//! With Gaussian inputs the joint rate at a receiver is
//! `ln(1 + a1 P1 + a2 P2)` with effective gains `a_k = snr |h_k|^2 / sigma^2`.
//! The priced problem is solved by coordinate waterfilling, and at most one
//! user is active unless `a1 / lambda1 = a2 / lambda2` exactly.

use serde::{Deserialize, Serialize};

use super::kkt::{self, KktReport};
use super::{IterationSchedule, Multipliers};
use crate::channel::EstimatedChannel;
use crate::error::{Error, Result};
use crate::ids::{Mac, User};
use crate::power::{Budgets, PowerProfile};

/// Coordinate sweeps before the grid fallback takes over.
const MAX_SWEEPS: usize = 64;
/// Grid points per axis of the fallback search.
const GRID: usize = 2000;

/// Effective gains `snr |h_rx,k|^2 / sigma_rx^2`.
pub(crate) fn effective_gains(ch: &EstimatedChannel, mac: Mac) -> [f64; 2] {
    let c = ch.snr() / ch.sigma_sq(mac);
    [
        c * ch.gain(mac, User::One).norm_sqr(),
        c * ch.gain(mac, User::Two).norm_sqr(),
    ]
}

/// Best response of user `w` to the other user's power.
fn best_response(a: [f64; 2], lambda: [f64; 2], w: usize, p_other: f64) -> f64 {
    let o = 1 - w;
    if a[w] <= 0.0 {
        return 0.0;
    }
    (1.0 / lambda[w] - (1.0 + a[o] * p_other) / a[w]).max(0.0)
}

/// Maximizes `ln(1 + a.P) - lambda.P` on a grid, returning the best point.
fn grid_search(a: [f64; 2], lambda: [f64; 2]) -> [f64; 2] {
    let top = [1.0 / lambda[0], 1.0 / lambda[1]];
    let mut best = ([0.0, 0.0], 0.0);
    for i in 0..=GRID {
        let p1 = top[0] * i as f64 / GRID as f64;
        for j in 0..=GRID {
            let p2 = top[1] * j as f64 / GRID as f64;
            let v = (a[0] * p1 + a[1] * p2).ln_1p() - lambda[0] * p1 - lambda[1] * p2;
            if v > best.1 {
                best = ([p1, p2], v);
            }
        }
    }
    best.0
}

/// Priced Gaussian-input powers for the joint rate of `mac`.
///
/// Users are updated in order of decreasing `a_k / lambda_k` with
/// `P_k = max(0, 1/lambda_k - (1 + a_o P_o)/a_k)` until a sweep changes
/// nothing; a grid search takes over if the sweeps cycle.
pub fn gaussian_power(ch: &EstimatedChannel, mult: &Multipliers, mac: Mac) -> Result<PowerProfile> {
    mult.require_positive_lambda()?;
    let a = effective_gains(ch, mac);
    let lambda = mult.lambda;
    let order = if a[1] * lambda[0] > a[0] * lambda[1] {
        [1, 0]
    } else {
        [0, 1]
    };
    let mut p = [0.0f64; 2];
    for _ in 0..MAX_SWEEPS {
        let before = p;
        for &w in &order {
            p[w] = best_response(a, lambda, w, p[1 - w]);
        }
        if p == before {
            return PowerProfile::new(p[0], p[1]);
        }
    }
    let g = grid_search(a, lambda);
    PowerProfile::new(g[0], g[1])
}

/// Whether the ensemble budgets could be met.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneStatus {
    /// Both budgets met with equality.
    Active,
    /// These users have no usable link; their price is left at zero.
    InfeasibleSlack { user1: bool, user2: bool },
}

/// Tuned prices with the per-realization allocations they induce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedMultipliers {
    pub multipliers: Multipliers,
    pub allocations: Vec<PowerProfile>,
    /// Ensemble-average powers.
    pub average: [f64; 2],
    pub status: TuneStatus,
    pub kkt: KktReport,
}

/// `(1/lambda - 1/a)^+` summed over the gains, divided by `n`.
fn avg_power(gains: &[f64], lambda: f64, n: f64) -> f64 {
    gains
        .iter()
        .map(|&g| (1.0 / lambda - 1.0 / g).max(0.0))
        .sum::<f64>()
        / n
}

/// Exact price meeting `avg_power(gains, lambda, n) = q`; zero if no gains.
fn waterfill_price(gains: &[f64], q: f64, n: f64) -> f64 {
    let mut g: Vec<f64> = gains.iter().copied().filter(|&x| x > 0.0).collect();
    if g.is_empty() {
        return 0.0;
    }
    g.sort_by(|x, y| y.total_cmp(x));
    let mut inv_sum = 0.0;
    let mut level = 0.0;
    for (m, &gm) in g.iter().enumerate() {
        inv_sum += 1.0 / gm;
        level = (n * q + inv_sum) / (m as f64 + 1.0);
        let next_ok = g.get(m + 1).is_none_or(|&nx| level <= 1.0 / nx);
        if next_ok {
            break;
        }
    }
    1.0 / level
}

/// Prices meeting the average-power budgets over an ensemble for the joint
/// Gaussian rate of `mac`.
///
/// Each realization gives its power to the user with the larger
/// `a_k / lambda_k`, so the solution is found by scanning the intervals of
/// the price ratio between consecutive gain ratios; a root sitting on a
/// ratio shared by some realizations is resolved by splitting their power.
pub fn tune_multipliers(
    ensemble: &[EstimatedChannel],
    budgets: &Budgets,
    mac: Mac,
    schedule: &IterationSchedule,
) -> Result<TunedMultipliers> {
    schedule.validate()?;
    if ensemble.is_empty() {
        return Err(Error::Precondition("ensemble must not be empty".into()));
    }
    let n = ensemble.len() as f64;
    let gains: Vec<[f64; 2]> = ensemble.iter().map(|ch| effective_gains(ch, mac)).collect();
    let q = budgets.as_array();
    let dead = [
        gains.iter().all(|g| g[0] <= 0.0),
        gains.iter().all(|g| g[1] <= 0.0),
    ];

    let (lambda, split) = if dead[0] || dead[1] {
        let mut lambda = [0.0; 2];
        for k in 0..2 {
            if !dead[k] {
                let gk: Vec<f64> = gains.iter().map(|g| g[k]).collect();
                lambda[k] = waterfill_price(&gk, q[k], n);
            }
        }
        (lambda, None)
    } else {
        solve_ratio(&gains, q, n)
    };

    let allocations: Vec<PowerProfile> = gains
        .iter()
        .map(|g| allocate(*g, lambda, split))
        .collect::<Result<_>>()?;
    let mut average = [0.0; 2];
    for p in &allocations {
        average[0] += p.p1() / n;
        average[1] += p.p2() / n;
    }

    let mut report = KktReport::default();
    for (g, p) in gains.iter().zip(&allocations) {
        let den = 1.0 + g[0] * p.p1() + g[1] * p.p2();
        let grad = [g[0] / den, g[1] / den];
        report = report.merge(kkt::priced(grad, p.as_array(), lambda).0);
    }
    for k in 0..2 {
        report.slackness = report
            .slackness
            .max((lambda[k] * (q[k] - average[k])).abs());
        report.feasibility = report.feasibility.max(average[k] - q[k]).max(0.0);
    }

    let status = if dead[0] || dead[1] {
        TuneStatus::InfeasibleSlack {
            user1: dead[0],
            user2: dead[1],
        }
    } else {
        TuneStatus::Active
    };
    Ok(TunedMultipliers {
        multipliers: Multipliers {
            lambda,
            mu: [0.0; 2],
            nu: lambda,
        },
        allocations,
        average,
        status,
        kkt: report,
    })
}

/// Tie handling: realizations whose gain ratio equals the price ratio give
/// user 1 the fraction `t` of their waterfilled power.
#[derive(Clone, Copy, Debug)]
struct Split {
    ratio: f64,
    t: f64,
}

fn allocate(g: [f64; 2], lambda: [f64; 2], split: Option<Split>) -> Result<PowerProfile> {
    let level = |k: usize| {
        if g[k] > 0.0 && lambda[k] > 0.0 {
            (1.0 / lambda[k] - 1.0 / g[k]).max(0.0)
        } else {
            0.0
        }
    };
    if g[0] <= 0.0 && g[1] <= 0.0 {
        return Ok(PowerProfile::zero());
    }
    if let Some(s) = split {
        if g[1] > 0.0 && g[0] / g[1] == s.ratio {
            // S = a1/lambda1 - 1 = a2/lambda2 - 1 on the tie
            let share = (g[1] / lambda[1] - 1.0).max(0.0);
            return PowerProfile::new(s.t * share / g[0], (1.0 - s.t) * share / g[1]);
        }
    }
    // the user with the larger a_k / lambda_k wins
    let one_wins = g[1] <= 0.0 || (g[0] > 0.0 && g[0] * lambda[1] > g[1] * lambda[0]);
    if one_wins {
        PowerProfile::new(level(0), 0.0)
    } else {
        PowerProfile::new(0.0, level(1))
    }
}

/// Finds the price pair when both users have usable links.
fn solve_ratio(gains: &[[f64; 2]], q: [f64; 2], n: f64) -> ([f64; 2], Option<Split>) {
    let ratio = |g: &[f64; 2]| -> Option<f64> {
        match (g[0] > 0.0, g[1] > 0.0) {
            (false, false) => None,
            (true, false) => Some(f64::INFINITY),
            (false, true) => Some(0.0),
            (true, true) => Some(g[0] / g[1]),
        }
    };
    let r: Vec<Option<f64>> = gains.iter().map(ratio).collect();
    let mut bounds: Vec<f64> = r.iter().flatten().copied().collect();
    bounds.push(0.0);
    bounds.push(f64::INFINITY);
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let set = |k: usize, pick: &dyn Fn(f64) -> bool| -> Vec<f64> {
        gains
            .iter()
            .zip(&r)
            .filter(|(_, rb)| rb.is_some_and(pick))
            .map(|(g, _)| g[k])
            .collect()
    };

    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // price ratio c in (lo, hi): user 1 wins iff r_b >= hi
        let l1 = waterfill_price(&set(0, &|x| x >= hi), q[0], n);
        let l2 = waterfill_price(&set(1, &|x| x <= lo), q[1], n);
        let c = if l2 == 0.0 { f64::INFINITY } else { l1 / l2 };
        if c > lo && c < hi {
            return ([l1, l2], None);
        }
        if c <= lo {
            return tie(gains, &r, lo, q, n);
        }
    }
    unreachable!("the price ratio crosses some interval when both users have links")
}

/// Root on a jump at gain ratio `v`: `lambda1 = v lambda2`, tied realizations split.
fn tie(
    gains: &[[f64; 2]],
    r: &[Option<f64>],
    v: f64,
    q: [f64; 2],
    n: f64,
) -> ([f64; 2], Option<Split>) {
    let mut w1 = Vec::new();
    let mut w2 = Vec::new();
    let mut t_set = Vec::new();
    for (g, rb) in gains.iter().zip(r) {
        match rb {
            Some(x) if *x > v => w1.push(g[0]),
            Some(x) if *x < v => w2.push(g[1]),
            Some(_) => t_set.push(*g),
            None => {}
        }
    }
    let u = |l2: f64| -> f64 {
        t_set
            .iter()
            .map(|g| (g[1] / l2 - 1.0).max(0.0) / g[0])
            .sum::<f64>()
            / n
    };
    let big_g = |l2: f64| -> f64 {
        avg_power(&w2, l2, n) + v * u(l2) + v * avg_power(&w1, v * l2, n) - v * q[0] - q[1]
    };
    let mut hi = t_set
        .iter()
        .map(|g| g[1])
        .chain(w2.iter().copied())
        .chain(w1.iter().map(|g| g / v))
        .fold(0.0, f64::max);
    let mut lo = hi;
    while big_g(lo) <= 0.0 {
        lo *= 0.5;
    }
    while big_g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if big_g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let l2 = 0.5 * (lo + hi);
    let l1 = v * l2;
    let uu = u(l2);
    let t = if uu > 0.0 {
        ((q[0] - avg_power(&w1, l1, n)) / uu).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ([l1, l2], Some(Split { ratio: v, t }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::seed;
    use proptest::prelude::*;

    fn real(h: [[f64; 2]; 2]) -> EstimatedChannel {
        EstimatedChannel::real(h, 1.0).unwrap()
    }

    /// Lagrangian grid oracle at step 1e-3.
    fn grid_oracle(a: [f64; 2], lambda: [f64; 2], top: f64) -> ([f64; 2], f64) {
        let steps = (top / 1e-3) as usize;
        let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
        for i in 0..=steps {
            for j in 0..=steps {
                let p = [i as f64 * 1e-3, j as f64 * 1e-3];
                let v = (a[0] * p[0] + a[1] * p[1]).ln_1p() - lambda[0] * p[0] - lambda[1] * p[1];
                if v > best.1 {
                    best = (p, v);
                }
            }
        }
        best
    }

    fn lagrangian(a: [f64; 2], lambda: [f64; 2], p: &PowerProfile) -> f64 {
        (a[0] * p.p1() + a[1] * p.p2()).ln_1p() - lambda[0] * p.p1() - lambda[1] * p.p2()
    }

    #[test]
    fn priced_out_user_gets_zero() {
        let ch = real([[1.0, 1.0], [1.0, 1.0]]);
        // lambda1 >= |h11|^2 / (|h12|^2 P2 + 1) with P2 = 1/0.2 - 1 = 4
        let p = gaussian_power(&ch, &Multipliers::new(0.5, 0.2).unwrap(), Mac::One).unwrap();
        assert_eq!(p.p1(), 0.0);
        assert!((p.p2() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interference_free_waterfilling() {
        for (h, l) in [(1.0, 0.2), (0.5, 0.3), (2.0, 1.5), (0.3, 20.0)] {
            let ch = real([[h, 0.0], [0.0, 1.0]]);
            let p = gaussian_power(&ch, &Multipliers::new(l, 1.0).unwrap(), Mac::One).unwrap();
            assert!((p.p1() - (1.0 / l - 1.0 / (h * h)).max(0.0)).abs() < 1e-12);
            assert_eq!(p.p2(), 0.0);
        }
    }

    #[test]
    fn all_ones_matches_grid_oracle() {
        let ch = real([[1.0, 1.0], [1.0, 1.0]]);
        let lambda = [0.2, 0.2];
        let p = gaussian_power(&ch, &Multipliers::new(0.2, 0.2).unwrap(), Mac::One).unwrap();
        let (_, best) = grid_oracle([1.0, 1.0], lambda, 5.0);
        // the maximizers form a segment P1 + P2 = 4; compare objective values
        assert!((lagrangian([1.0, 1.0], lambda, &p) - best).abs() < 1e-6);
        assert!((p.p1() + p.p2() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unequal_gains_match_grid_oracle() {
        let ch = real([[1.2, 0.8], [0.3, 1.0]]);
        for (mac, lambda) in [
            (Mac::One, [0.25, 0.2]),
            (Mac::Two, [0.4, 0.3]),
            (Mac::One, [0.9, 0.35]),
        ] {
            let a = effective_gains(&ch, mac);
            let p =
                gaussian_power(&ch, &Multipliers::new(lambda[0], lambda[1]).unwrap(), mac).unwrap();
            let (pg, best) = grid_oracle(a, lambda, 1.0 / lambda[0].min(lambda[1]));
            assert!(lagrangian(a, lambda, &p) >= best - 1e-9);
            assert!((p.p1() - pg[0]).abs() < 2e-3 && (p.p2() - pg[1]).abs() < 2e-3);
        }
    }

    #[test]
    fn non_positive_price_is_rejected() {
        let ch = real([[1.0, 1.0], [1.0, 1.0]]);
        let m = Multipliers {
            lambda: [0.0, 1.0],
            mu: [0.0; 2],
            nu: [1.0; 2],
        };
        assert!(gaussian_power(&ch, &m, Mac::One).is_err());
    }

    #[test]
    fn waterfill_price_is_exact() {
        let g = [4.0, 1.0, 0.25, 2.0];
        for q in [0.1, 1.0, 2.0, 10.0] {
            let l = waterfill_price(&g, q, 4.0);
            assert!((avg_power(&g, l, 4.0) - q).abs() < 1e-12);
        }
    }

    #[test]
    fn single_interference_free_channel_spends_budget() {
        let ch = real([[1.0, 0.0], [0.0, 1.0]]);
        let out = tune_multipliers(
            &[ch],
            &Budgets::new(50.0, 2.0).unwrap(),
            Mac::One,
            &Default::default(),
        )
        .unwrap();
        assert!((out.average[0] - 50.0).abs() < 1e-10);
        assert!((out.multipliers.lambda[0] - 1.0 / 51.0).abs() < 1e-12);
        assert_eq!(
            out.status,
            TuneStatus::InfeasibleSlack {
                user1: false,
                user2: true
            }
        );
        assert_eq!(out.multipliers.lambda[1], 0.0);
    }

    #[test]
    fn price_falls_as_budget_grows() {
        let ch = real([[1.0, 0.0], [0.0, 1.0]]);
        let mut last = f64::INFINITY;
        for q in [1.0, 10.0, 100.0, 1e4] {
            let out = tune_multipliers(
                std::slice::from_ref(&ch),
                &Budgets::new(q, 1.0).unwrap(),
                Mac::One,
                &Default::default(),
            )
            .unwrap();
            assert!(out.multipliers.lambda[0] < last);
            last = out.multipliers.lambda[0];
        }
        assert!(last < 1e-3);
    }

    fn rayleigh_ensemble(n: usize, base: u64) -> Vec<EstimatedChannel> {
        (0..n)
            .map(|i| {
                EstimatedChannel::perfect(
                    &sample_channel(seed::derive(base, 7, i as u64), 1.0, false).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn rayleigh_ensemble_meets_budgets() {
        let ens = rayleigh_ensemble(100, 11);
        for mac in Mac::BOTH {
            let out = tune_multipliers(
                &ens,
                &Budgets::new(2.0, 2.0).unwrap(),
                mac,
                &Default::default(),
            )
            .unwrap();
            assert!((out.average[0] - 2.0).abs() < 1e-9, "{:?}", out.average);
            assert!((out.average[1] - 2.0).abs() < 1e-9, "{:?}", out.average);
            assert!(out.kkt.passes(1e-9), "{:?}", out.kkt);
            // per-realization allocations are the closed form at the tuned prices
            for (ch, p) in ens.iter().zip(&out.allocations) {
                let m =
                    Multipliers::new(out.multipliers.lambda[0], out.multipliers.lambda[1]).unwrap();
                let cf = gaussian_power(ch, &m, mac).unwrap();
                assert!((cf.p1() - p.p1()).abs() < 1e-9 && (cf.p2() - p.p2()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_channels_split_on_the_tie() {
        let ch = real([[1.0, 1.0], [1.0, 1.0]]);
        let ens = vec![ch; 4];
        let out = tune_multipliers(
            &ens,
            &Budgets::new(2.0, 1.0).unwrap(),
            Mac::One,
            &Default::default(),
        )
        .unwrap();
        assert!((out.average[0] - 2.0).abs() < 1e-9);
        assert!((out.average[1] - 1.0).abs() < 1e-9);
        assert!((out.multipliers.lambda[0] - out.multipliers.lambda[1]).abs() < 1e-12);
        assert!((out.multipliers.lambda[0] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        assert!(tune_multipliers(&[], &Budgets::default(), Mac::One, &Default::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn average_power_non_increasing_in_price(base in 0u64..1000, l in 0.05f64..2.0) {
            let ens = rayleigh_ensemble(20, base);
            let avg = |lambda: [f64; 2]| -> [f64; 2] {
                let m = Multipliers::new(lambda[0], lambda[1]).unwrap();
                let mut s = [0.0; 2];
                for ch in &ens {
                    let p = gaussian_power(ch, &m, Mac::One).unwrap();
                    s[0] += p.p1();
                    s[1] += p.p2();
                }
                s
            };
            let a = avg([l, 0.7]);
            let b = avg([l * 1.1, 0.7]);
            prop_assert!(b[0] <= a[0] + 1e-12);
        }

        #[test]
        fn closed_form_beats_perturbations(h in prop::array::uniform4(0.1f64..2.0), l1 in 0.1f64..1.0, l2 in 0.1f64..1.0, d1 in -0.3f64..0.3, d2 in -0.3f64..0.3) {
            let ch = real([[h[0], h[1]], [h[2], h[3]]]);
            let a = effective_gains(&ch, Mac::One);
            let p = gaussian_power(&ch, &Multipliers::new(l1, l2).unwrap(), Mac::One).unwrap();
            let q = PowerProfile::new((p.p1() + d1).max(0.0), (p.p2() + d2).max(0.0)).unwrap();
            prop_assert!(lagrangian(a, [l1, l2], &p) >= lagrangian(a, [l1, l2], &q) - 1e-12);
        }
    }
}
