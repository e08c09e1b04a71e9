//! Linear precoding for vector links.
//!
//! User `l` sends `P_l x_l` with `x_l` an `N`-vector of i.i.d. symbols, and
//! receiver `k` sees `y = sqrt(snr) (H_k1 P_1 x_1 + H_k2 P_2 x_2) + n`. The
//! stacked error covariance `E = E[e e^H]` of `(x_1, x_2)` gives the rate
//! gradient `(snr / sigma^2) H_k^H H_k P E`, and the priced stationary point
//! satisfies `nu_l P_l` equal to its `l`-th diagonal block.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fixed_point::{ARMIJO, MAX_HALVINGS, ROUNDOFF};
use super::newton::{self, DRIFT, NEWTON_HALVINGS};
use super::{IterationReport, IterationSchedule, Multipliers};
use crate::channel::EstimatedChannel;
use crate::engine::{integrate, worse, AccuracyWarning, IntegrationEngine, Mixture};
use crate::error::{check_nonneg, check_positive, Error, Result};
use crate::estimation::{evaluate_rx, RxView};
use crate::ids::{Mac, User};
use crate::info::RateValue;
use crate::inputs::InputSpec;
use crate::power::{Budgets, PowerProfile};
use crate::C64;

/// Dense complex matrix used for vector links and precoders.
pub type CMat = DMatrix<C64>;

/// Block channel: `blocks[k][l]` is the `N x N` link from user `l` into receiver `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MimoChannel {
    blocks: [[CMat; 2]; 2],
    sigma_sq: [f64; 2],
    snr: f64,
}

impl MimoChannel {
    pub fn new(blocks: [[CMat; 2]; 2], sigma_sq: [f64; 2], snr: f64) -> Result<Self> {
        let n = blocks[0][0].nrows();
        if n == 0
            || blocks
                .iter()
                .flatten()
                .any(|b| b.nrows() != n || b.ncols() != n)
        {
            return Err(Error::Argument(
                "all blocks must be square of one size".into(),
            ));
        }
        if blocks
            .iter()
            .flatten()
            .flat_map(|b| b.iter())
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::Argument("channel entries must be finite".into()));
        }
        check_positive("sigma1_sq", sigma_sq[0])?;
        check_positive("sigma2_sq", sigma_sq[1])?;
        check_nonneg("snr", snr)?;
        Ok(Self {
            blocks,
            sigma_sq,
            snr,
        })
    }

    /// The `1 x 1` model of a scalar estimate.
    pub fn from_scalar(ch: &EstimatedChannel) -> Self {
        let b = |k: Mac, l: User| CMat::from_element(1, 1, ch.gain(k, l));
        Self {
            blocks: [
                [b(Mac::One, User::One), b(Mac::One, User::Two)],
                [b(Mac::Two, User::One), b(Mac::Two, User::Two)],
            ],
            sigma_sq: [ch.sigma_sq(Mac::One), ch.sigma_sq(Mac::Two)],
            snr: ch.snr(),
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks[0][0].nrows()
    }

    pub fn block(&self, rx: Mac, tx: User) -> &CMat {
        &self.blocks[rx.index()][tx.index()]
    }

    pub fn sigma_sq(&self, rx: Mac) -> f64 {
        self.sigma_sq[rx.index()]
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }
}

/// How each sweep enforces `tr(P_l P_l^H) <= Q_l`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Scale down only when the budget is exceeded.
    #[default]
    Cap,
    /// Always scale a non-zero precoder onto the budget.
    Budget,
}

impl Normalization {
    fn apply(self, p: &mut CMat, budget: f64) {
        let power = p.norm_squared();
        let scale = match self {
            Normalization::Cap if power > budget => (budget / power).sqrt(),
            Normalization::Budget if power > 0.0 => (budget / power).sqrt(),
            _ => 1.0,
        };
        if scale != 1.0 {
            *p *= C64::new(scale, 0.0);
        }
    }
}

/// Singular value decomposition `H = U diag(s) V^H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v: CMat,
}

impl SvdFactors {
    pub fn of(h: &CMat) -> Self {
        let svd = h.clone().svd(true, true);
        Self {
            u: svd.u.expect("requested U"),
            singular_values: svd.singular_values.iter().copied().collect(),
            v: svd.v_t.expect("requested V^H").adjoint(),
        }
    }
}

/// One precoder per user, with the factors used to initialize them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecoderPair {
    pub mat: [CMat; 2],
    pub init_from: Option<[SvdFactors; 2]>,
}

impl PrecoderPair {
    pub fn new(mat1: CMat, mat2: CMat) -> Result<Self> {
        let n = mat1.nrows();
        if [&mat1, &mat2]
            .iter()
            .any(|m| m.nrows() != n || m.ncols() != n)
            || n == 0
        {
            return Err(Error::Argument(
                "precoders must be square of one size".into(),
            ));
        }
        if mat1
            .iter()
            .chain(mat2.iter())
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::Argument("precoder entries must be finite".into()));
        }
        Ok(Self {
            mat: [mat1, mat2],
            init_from: None,
        })
    }

    /// `P_l = V_l sqrt(Q_l / N)` from the SVD of each user's link into `mac`.
    pub fn svd_init(ch: &MimoChannel, mac: Mac, budgets: &Budgets) -> Self {
        let n = ch.dim() as f64;
        let f = |u: User| SvdFactors::of(ch.block(mac, u));
        let factors = [f(User::One), f(User::Two)];
        let mat = [
            &factors[0].v * C64::new((budgets.q(User::One) / n).sqrt(), 0.0),
            &factors[1].v * C64::new((budgets.q(User::Two) / n).sqrt(), 0.0),
        ];
        Self {
            mat,
            init_from: Some(factors),
        }
    }

    pub fn get(&self, u: User) -> &CMat {
        &self.mat[u.index()]
    }

    /// Transmit powers `tr(P_l P_l^H)`.
    pub fn powers(&self) -> PowerProfile {
        PowerProfile::new(self.mat[0].norm_squared(), self.mat[1].norm_squared())
            .expect("norms are non-negative")
    }
}

/// A solved precoder problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSolution {
    pub pair: PrecoderPair,
    pub multipliers: Multipliers,
    pub report: IterationReport,
    /// Joint rate of the MAC at the returned precoders.
    pub rate: RateValue,
}

/// Joint rate and stacked error covariance at one receiver.
struct VectorEval {
    mi: f64,
    mi_se: Option<f64>,
    /// `2N x 2N`, entry `(m, n) = E[e_m conj(e_n)]`.
    e: CMat,
    warning: Option<AccuracyWarning>,
}

/// Stacked effective matrix `sqrt(snr) [H_k1 P_1, H_k2 P_2]`.
fn effective(ch: &MimoChannel, mac: Mac, mats: [&CMat; 2]) -> CMat {
    let n = ch.dim();
    let s = C64::new(ch.snr.sqrt(), 0.0);
    let mut g = CMat::zeros(n, 2 * n);
    for u in User::BOTH {
        let b = ch.block(mac, u) * mats[u.index()] * s;
        g.view_mut((0, u.index() * n), (n, n)).copy_from(&b);
    }
    g
}

fn vector_eval(
    g: &CMat,
    noise: f64,
    inputs: &[InputSpec; 2],
    engine: &IntegrationEngine,
) -> Result<VectorEval> {
    let n = g.nrows();
    let n2 = 2 * n;
    if n == 1 {
        let view = RxView {
            amps: [g[(0, 0)], g[(0, 1)]],
            noise,
        };
        let r = evaluate_rx(&view, inputs, engine)?;
        let mut e = CMat::zeros(2, 2);
        e[(0, 0)] = C64::new(r.cov.e1, 0.0);
        e[(1, 1)] = C64::new(r.cov.e2, 0.0);
        e[(0, 1)] = r.cov.cross;
        e[(1, 0)] = r.cov.cross.conj();
        return Ok(VectorEval {
            mi: r.mi,
            mi_se: r.mi_se,
            e,
            warning: r.warning,
        });
    }
    match (inputs[0].constellation(), inputs[1].constellation()) {
        (None, None) => {
            let gh_g = g.adjoint() * g * C64::new(1.0 / noise, 0.0);
            let m = CMat::identity(n2, n2) + &gh_g;
            let e = m
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Argument("singular information matrix".into()))?;
            let det =
                (CMat::identity(n, n) + g * g.adjoint() * C64::new(1.0 / noise, 0.0)).determinant();
            Ok(VectorEval {
                mi: det.re.ln(),
                mi_se: None,
                e,
                warning: None,
            })
        }
        (Some(c1), Some(c2)) => {
            let laws = [c1, c2];
            let sizes: Vec<usize> = (0..n2).map(|d| laws[d / n].len()).collect();
            let total: usize = sizes.iter().product();
            let mut xs = Vec::with_capacity(total * n2);
            let mut weights = Vec::with_capacity(total);
            let mut centers = Vec::with_capacity(total * n);
            let mut idx = vec![0usize; n2];
            for _ in 0..total {
                let mut w = 1.0;
                let start = xs.len();
                for d in 0..n2 {
                    let law = &laws[d / n];
                    xs.push(law.points()[idx[d]]);
                    w *= law.probs()[idx[d]];
                }
                let x = &xs[start..];
                for r in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for (c, xc) in x.iter().enumerate() {
                        acc += g[(r, c)] * xc;
                    }
                    centers.push(acc);
                }
                weights.push(w);
                for (digit, size) in idx.iter_mut().zip(&sizes) {
                    *digit += 1;
                    if *digit < *size {
                        break;
                    }
                    *digit = 0;
                }
            }
            let mix = Mixture::new(n, centers, weights, noise);
            let m = 1 + 2 * n2 * n2;
            let r = integrate(&mix, engine, m, |j, post, lr, out| {
                let mut hat = vec![C64::new(0.0, 0.0); n2];
                for (k, p) in post.iter().enumerate() {
                    if *p != 0.0 {
                        for (h, x) in hat.iter_mut().zip(&xs[k * n2..(k + 1) * n2]) {
                            *h += x * p;
                        }
                    }
                }
                let x = &xs[j * n2..(j + 1) * n2];
                out[0] = lr;
                for a in 0..n2 {
                    for b in 0..n2 {
                        let c = x[a] * x[b].conj()
                            - 0.5 * (x[a] * hat[b].conj() + hat[a] * x[b].conj());
                        out[1 + 2 * (a * n2 + b)] = c.re;
                        out[2 + 2 * (a * n2 + b)] = c.im;
                    }
                }
            })?;
            let v = &r.values;
            let e = CMat::from_fn(n2, n2, |a, b| {
                C64::new(v[1 + 2 * (a * n2 + b)], v[2 + 2 * (a * n2 + b)])
            });
            Ok(VectorEval {
                mi: v[0].max(0.0),
                mi_se: r.std_err.as_ref().map(|s| s[0]),
                e,
                warning: r.warning,
            })
        }
        _ => Err(Error::Argument(
            "mixed Gaussian and discrete inputs are supported for scalar links only".into(),
        )),
    }
}

/// One evaluation of the precoder map.
struct PrecoderSweep {
    p: [CMat; 2],
    ev: VectorEval,
    /// Normalized map image.
    t: [CMat; 2],
    residual: f64,
}

/// Real and imaginary parts of both precoders, column-major.
fn flatten(p: &[CMat; 2]) -> Vec<f64> {
    p.iter()
        .flat_map(|m| m.iter().flat_map(|z| [z.re, z.im]))
        .collect()
}

fn unflatten(x: &[f64], n: usize) -> [CMat; 2] {
    let half = 2 * n * n;
    std::array::from_fn(|k| {
        CMat::from_fn(n, n, |r, c| {
            let i = half * k + 2 * (c * n + r);
            C64::new(x[i], x[i + 1])
        })
    })
}

/// `l`-th diagonal block of `H_k^H H_k P E`, unscaled.
fn gradient_block(ch: &MimoChannel, mac: Mac, mats: [&CMat; 2], e: &CMat, l: User) -> CMat {
    let n = ch.dim();
    let hl = ch.block(mac, l);
    let mut acc = CMat::zeros(n, n);
    for m in User::BOTH {
        let e_ml = e.view((m.index() * n, l.index() * n), (n, n));
        acc += hl.adjoint() * ch.block(mac, m) * mats[m.index()] * e_ml;
    }
    acc
}

fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Priced precoder fixed point for the joint rate of `mac`, started at `init`.
///
/// Each sweep forms `T_l = (snr / (sigma^2 nu_l)) [H^H H P E]_ll`, moves
/// `P_l <- (1 - alpha) P_l + alpha T_l` and normalizes against the budget.
/// The move is a projected gradient step on `I - sum nu_l tr(P_l P_l^H)`;
/// a move that lowers it is retried with `alpha` halved, and once halving
/// sets in Newton steps on `N(T(P)) - P` are tried first.
/// The residual is `max |P_l - N(T_l)|` over entries.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_precoder(
    ch: &MimoChannel,
    inputs: &[InputSpec; 2],
    mult: &Multipliers,
    mac: Mac,
    init: &PrecoderPair,
    budgets: &Budgets,
    normalization: Normalization,
    schedule: &IterationSchedule,
    engine: &IntegrationEngine,
) -> Result<PrecoderSolution> {
    mult.require_positive_nu()?;
    schedule.validate()?;
    engine.validate()?;
    if init.mat[0].nrows() != ch.dim() {
        return Err(Error::Argument(
            "precoder size does not match the channel".into(),
        ));
    }
    let c = ch.snr / ch.sigma_sq(mac);
    let noise = ch.sigma_sq(mac);
    let n = ch.dim();
    let priced = |mi: f64, p: &[CMat; 2]| {
        mi - mult.nu[0] * p[0].norm_squared() - mult.nu[1] * p[1].norm_squared()
    };
    let map = |p: [CMat; 2]| -> Result<PrecoderSweep> {
        let ev = vector_eval(&effective(ch, mac, [&p[0], &p[1]]), noise, inputs, engine)?;
        let t: [CMat; 2] = std::array::from_fn(|k| {
            let u = User::from_index(k);
            let mut tu =
                gradient_block(ch, mac, [&p[0], &p[1]], &ev.e, u) * C64::new(c / mult.nu(u), 0.0);
            normalization.apply(&mut tu, budgets.q(u));
            tu
        });
        let residual = max_abs_diff(&p[0], &t[0]).max(max_abs_diff(&p[1], &t[1]));
        Ok(PrecoderSweep { p, ev, t, residual })
    };
    let newton = |cur: &PrecoderSweep| -> Result<Option<PrecoderSweep>> {
        let x = flatten(&cur.p);
        let r: Vec<f64> = flatten(&cur.t).iter().zip(&x).map(|(t, x)| t - x).collect();
        let step = newton::correction(&x, &r, |y| {
            let s = map(unflatten(y, n))?;
            Ok(flatten(&s.t).iter().zip(y).map(|(t, y)| t - y).collect())
        })?;
        let Some(d) = step else { return Ok(None) };
        let floor = priced(cur.ev.mi, &cur.p) - DRIFT * cur.ev.mi.abs().max(1.0);
        let mut scale = 1.0;
        for _ in 0..NEWTON_HALVINGS {
            let y: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + scale * d).collect();
            let mut p = unflatten(&y, n);
            for (k, m) in p.iter_mut().enumerate() {
                normalization.apply(m, budgets.q(User::from_index(k)));
            }
            let next = map(p)?;
            if next.residual < cur.residual && priced(next.ev.mi, &next.p) >= floor {
                return Ok(Some(next));
            }
            scale *= 0.5;
        }
        Ok(None)
    };
    let mut cur = map(init.mat.clone())?;
    let mut shrink = 1.0;
    let mut warning = None;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..schedule.max_iter {
        iterations = it + 1;
        warning = worse(warning, cur.ev.warning.clone());
        if cur.residual <= schedule.tol {
            converged = true;
            break;
        }
        let stiff = shrink < 1.0;
        let mut next = if stiff { newton(&cur)? } else { None };
        if next.is_none() {
            let before = priced(cur.ev.mi, &cur.p);
            let slack = ROUNDOFF * cur.ev.mi.abs().max(1.0);
            for _ in 0..MAX_HALVINGS {
                let step = schedule.alpha.alpha(it) * shrink;
                let alpha = C64::new(step, 0.0);
                let moved: [CMat; 2] = std::array::from_fn(|k| {
                    let mut m = &cur.p[k] * (C64::new(1.0, 0.0) - alpha) + &cur.t[k] * alpha;
                    normalization.apply(&mut m, budgets.q(User::from_index(k)));
                    m
                });
                let trial = map(moved)?;
                let gain: f64 = (0..2)
                    .map(|k| 2.0 * mult.nu[k] * (&trial.p[k] - &cur.p[k]).norm_squared() / step)
                    .sum();
                if priced(trial.ev.mi, &trial.p) >= before + ARMIJO * gain - slack {
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
            Some(s) => cur = s,
            None => break,
        }
    }
    let PrecoderSweep {
        p, ev, residual, ..
    } = cur;
    let [p1, p2] = p;
    Ok(PrecoderSolution {
        pair: PrecoderPair {
            mat: [p1, p2],
            init_from: init.init_from.clone(),
        },
        multipliers: *mult,
        report: IterationReport {
            iterations,
            residual,
            converged,
            warning: worse(warning, ev.warning.clone()),
        },
        rate: RateValue::from_nats(ev.mi).with_error(ev.mi_se, ev.warning),
    })
}

/// A single-user precoder with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinglePrecoder {
    pub matrix: CMat,
    pub report: IterationReport,
    /// `I(x; y)` at the returned precoder.
    pub rate: RateValue,
}

/// Single-user fixed point `nu P = (snr / sigma^2) H^H H P E` on the direct
/// link of `user`, with the other user removed.
#[allow(clippy::too_many_arguments)]
pub fn mimo_precoder(
    ch: &MimoChannel,
    user: User,
    input: &InputSpec,
    nu: f64,
    budget: f64,
    normalization: Normalization,
    schedule: &IterationSchedule,
    engine: &IntegrationEngine,
) -> Result<SinglePrecoder> {
    check_positive("nu", nu)?;
    check_positive("budget", budget)?;
    let rx = Mac::from_index(user.index());
    let n = ch.dim();
    let zero = CMat::zeros(n, n);
    let mut blocks = [[zero.clone(), zero.clone()], [zero.clone(), zero.clone()]];
    blocks[rx.index()][user.index()] = ch.block(rx, user).clone();
    let single = MimoChannel::new(blocks, ch.sigma_sq, ch.snr)?;
    let inputs = [input.clone(), input.clone()];
    let budgets = Budgets::new(budget, budget)?;
    let mut init = PrecoderPair::svd_init(&single, rx, &budgets);
    init.mat[user.other().index()] = zero;
    let mut nus = [nu, nu];
    nus[user.other().index()] = 1.0;
    let mult = Multipliers {
        lambda: nus,
        mu: [0.0; 2],
        nu: nus,
    };
    let sol = fixed_point_precoder(
        &single,
        &inputs,
        &mult,
        rx,
        &init,
        &budgets,
        normalization,
        schedule,
        engine,
    )?;
    let [m1, m2] = sol.pair.mat;
    Ok(SinglePrecoder {
        matrix: if user == User::One { m1 } else { m2 },
        report: sol.report,
        rate: sol.rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{fixed_point_power, gaussian_power};

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn tight() -> IterationSchedule {
        IterationSchedule::default()
            .with_max_iter(20000)
            .with_tol(1e-10)
    }

    fn gh() -> IntegrationEngine {
        IntegrationEngine::gauss_hermite(16)
    }

    fn scalar_pair(a1: f64, a2: f64) -> PrecoderPair {
        PrecoderPair::new(
            CMat::from_element(1, 1, r(a1)),
            CMat::from_element(1, 1, r(a2)),
        )
        .unwrap()
    }

    #[test]
    fn scalar_model_reduces_to_power_fixed_point() {
        let est = EstimatedChannel::real([[1.0, 0.6], [0.5, 1.2]], 1.0).unwrap();
        let ch = MimoChannel::from_scalar(&est);
        let inputs = [InputSpec::Bpsk, InputSpec::Bpsk];
        let m = Multipliers::new(0.2, 0.25).unwrap();
        let big = Budgets::new(1e6, 1e6).unwrap();
        let sched = IterationSchedule::default()
            .with_max_iter(6)
            .with_tol(1e-12);
        let pre = fixed_point_precoder(
            &ch,
            &inputs,
            &m,
            Mac::One,
            &scalar_pair(1.4, 1.1),
            &big,
            Normalization::Cap,
            &sched,
            &gh(),
        )
        .unwrap();
        let pw = fixed_point_power(
            &est,
            &inputs,
            &m,
            Mac::One,
            &PowerProfile::new(1.96, 1.21).unwrap(),
            &sched,
            &gh(),
        )
        .unwrap();
        // same iterates, sweep by sweep
        assert!((pre.pair.powers().p1() - pw.powers.p1()).abs() < 1e-12);
        assert!((pre.pair.powers().p2() - pw.powers.p2()).abs() < 1e-12);
        assert!((pre.report.residual - pw.report.residual).abs() < 1e-12);
    }

    #[test]
    fn gaussian_scalar_matches_closed_form() {
        let est = EstimatedChannel::real([[1.0, 0.4], [0.3, 0.8]], 2.0).unwrap();
        let ch = MimoChannel::from_scalar(&est);
        let inputs = [InputSpec::Gaussian, InputSpec::Gaussian];
        let m = Multipliers::new(0.3, 0.5).unwrap();
        let big = Budgets::new(1e6, 1e6).unwrap();
        let sol = fixed_point_precoder(
            &ch,
            &inputs,
            &m,
            Mac::One,
            &scalar_pair(1.0, 1.0),
            &big,
            Normalization::Cap,
            &tight(),
            &gh(),
        )
        .unwrap();
        let cf = gaussian_power(&est, &m, Mac::One).unwrap();
        assert!(sol.report.converged);
        assert!((sol.pair.powers().p1() - cf.p1()).abs() < 1e-4);
        assert!((sol.pair.powers().p2() - cf.p2()).abs() < 1e-4);
    }

    #[test]
    fn single_user_gaussian_waterfills() {
        let est = EstimatedChannel::real([[0.9, 0.0], [0.0, 1.0]], 1.0).unwrap();
        let ch = MimoChannel::from_scalar(&est);
        let nu = 0.4;
        let s = mimo_precoder(
            &ch,
            User::One,
            &InputSpec::Gaussian,
            nu,
            1e6,
            Normalization::Cap,
            &tight(),
            &gh(),
        )
        .unwrap();
        let want = (1.0 / nu - 1.0 / 0.81f64).max(0.0);
        assert!((s.matrix[(0, 0)].norm_sqr() - want).abs() < 1e-4);
    }

    #[test]
    fn tiny_price_hits_the_power_ceiling() {
        let est = EstimatedChannel::real([[1.0, 0.0], [0.0, 1.0]], 2.0).unwrap();
        let ch = MimoChannel::from_scalar(&est);
        let s = mimo_precoder(
            &ch,
            User::One,
            &InputSpec::Bpsk,
            1e-9,
            2.0,
            Normalization::Cap,
            &tight(),
            &gh(),
        )
        .unwrap();
        assert!(s.report.converged);
        assert!((s.matrix.norm_squared() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infinite_price_switches_off() {
        let est = EstimatedChannel::real([[1.0, 0.0], [0.0, 1.0]], 1.0).unwrap();
        let ch = MimoChannel::from_scalar(&est);
        let s = mimo_precoder(
            &ch,
            User::One,
            &InputSpec::Bpsk,
            1e9,
            2.0,
            Normalization::Cap,
            &tight(),
            &gh(),
        )
        .unwrap();
        assert!(s.matrix.norm_squared() < 1e-12);
    }

    fn mat2(a: [[f64; 2]; 2]) -> CMat {
        CMat::from_fn(2, 2, |i, j| r(a[i][j]))
    }

    #[test]
    fn zero_cross_links_decouple() {
        let z = CMat::zeros(2, 2);
        let h11 = mat2([[1.0, 0.3], [0.2, 0.7]]);
        let h22 = mat2([[0.8, 0.1], [0.4, 1.1]]);
        let ch = MimoChannel::new(
            [[h11.clone(), z.clone()], [z.clone(), h22]],
            [1.0, 1.0],
            1.0,
        )
        .unwrap();
        let inputs = [InputSpec::Bpsk, InputSpec::Bpsk];
        let budgets = Budgets::new(2.0, 2.0).unwrap();
        let m = Multipliers::new(0.3, 0.3).unwrap();
        let sched = IterationSchedule::default()
            .with_max_iter(2000)
            .with_tol(1e-9);
        let init = PrecoderPair::svd_init(&ch, Mac::One, &budgets);
        let joint = fixed_point_precoder(
            &ch,
            &inputs,
            &m,
            Mac::One,
            &init,
            &budgets,
            Normalization::Cap,
            &sched,
            &gh(),
        )
        .unwrap();
        let single = mimo_precoder(
            &ch,
            User::One,
            &InputSpec::Bpsk,
            0.3,
            2.0,
            Normalization::Cap,
            &sched,
            &gh(),
        )
        .unwrap();
        assert!(joint.report.converged && single.report.converged);
        assert!(max_abs_diff(joint.pair.get(User::One), &single.matrix) < 1e-6);
    }

    #[test]
    fn gaussian_vector_covariance_is_the_inverse() {
        let h = mat2([[1.0, 0.5], [0.2, 0.9]]);
        let ch =
            MimoChannel::new([[h.clone(), h.clone()], [h.clone(), h]], [1.0, 1.0], 1.0).unwrap();
        let g = effective(
            &ch,
            Mac::One,
            [&CMat::identity(2, 2), &CMat::identity(2, 2)],
        );
        let ev = vector_eval(&g, 1.0, &[InputSpec::Gaussian, InputSpec::Gaussian], &gh()).unwrap();
        // E (I + G^H G) = I
        let check = &ev.e * (CMat::identity(4, 4) + g.adjoint() * &g);
        assert!(max_abs_diff(&check, &CMat::identity(4, 4)) < 1e-12);
    }

    #[test]
    fn discrete_vector_matches_scalar_when_diagonal() {
        // a diagonal 2x2 link with one user switched off splits into two scalar links
        let h = mat2([[1.0, 0.0], [0.0, 0.5]]);
        let g = {
            let mut g = CMat::zeros(2, 4);
            g.view_mut((0, 0), (2, 2)).copy_from(&h);
            g
        };
        let ev = vector_eval(
            &g,
            1.0,
            &[InputSpec::Bpsk, InputSpec::Bpsk],
            &IntegrationEngine::gauss_hermite(48),
        )
        .unwrap();
        let m1 = crate::estimation::scalar_mmse(&InputSpec::Bpsk, 1.0).unwrap();
        let m2 = crate::estimation::scalar_mmse(&InputSpec::Bpsk, 0.25).unwrap();
        assert!((ev.e[(0, 0)].re - m1).abs() < 1e-6);
        assert!((ev.e[(1, 1)].re - m2).abs() < 1e-6);
        assert!((ev.e[(2, 2)].re - 1.0).abs() < 1e-9);
        let mi = crate::estimation::scalar_mi(&InputSpec::Bpsk, 1.0).unwrap()
            + crate::estimation::scalar_mi(&InputSpec::Bpsk, 0.25).unwrap();
        assert!((ev.mi - mi).abs() < 1e-6);
    }

    #[test]
    fn svd_init_uses_right_singular_vectors() {
        let h = mat2([[1.0, 0.5], [0.2, 0.9]]);
        let ch = MimoChannel::new(
            [[h.clone(), h.clone()], [h.clone(), h.clone()]],
            [1.0, 1.0],
            1.0,
        )
        .unwrap();
        let p = PrecoderPair::svd_init(&ch, Mac::One, &Budgets::new(2.0, 4.0).unwrap());
        assert!((p.powers().p1() - 2.0).abs() < 1e-12);
        assert!((p.powers().p2() - 4.0).abs() < 1e-12);
        let f = &p.init_from.as_ref().unwrap()[0];
        let s = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            f.singular_values.iter().map(|x| r(*x)),
        ));
        let back = &f.u * s * f.v.adjoint();
        assert!(max_abs_diff(&back, &h) < 1e-12);
    }

    #[test]
    fn budget_normalization_holds_the_trace() {
        let est = EstimatedChannel::real([[1.0, 0.5], [0.5, 1.0]], 1.0).unwrap();
        let ch = MimoChannel::from_scalar(&est);
        let b = Budgets::new(2.0, 2.0).unwrap();
        let sol = fixed_point_precoder(
            &ch,
            &[InputSpec::Bpsk, InputSpec::Bpsk],
            &Multipliers::new(1.0, 1.0).unwrap(),
            Mac::One,
            &PrecoderPair::svd_init(&ch, Mac::One, &b),
            &b,
            Normalization::Budget,
            &IterationSchedule::default(),
            &gh(),
        )
        .unwrap();
        assert!((sol.pair.powers().p1() - 2.0).abs() < 1e-12);
        assert!((sol.pair.powers().p2() - 2.0).abs() < 1e-12);
    }
}
