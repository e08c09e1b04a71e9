//! Conditional-mean input estimates and the per-receiver error covariances.
//!
//! Receiver `l` observes `y_l = a_1 x_1 + a_2 x_2 + n` with amplitudes
//! `a_k = sqrt(snr) h_lk sqrt(P_k)` and `n ~ CN(0, sigma_l^2)`. Both inputs are
//! estimated from the same `y_l`, so each receiver has its own 2x2 error
//! covariance. The system matrix collects user 1's errors from receiver 1 and
//! user 2's errors from receiver 2.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::EstimatedChannel;
use crate::engine::{integrate, label_information, AccuracyWarning, IntegrationEngine, Mixture};
use crate::error::{check_nonneg, Error, Result};
use crate::ids::{Mac, User};
use crate::inputs::{Constellation, InputSpec};
use crate::power::PowerProfile;

/// Gauss-Hermite order used by the single-user scalar functions.
pub const SCALAR_ORDER_REAL: usize = 256;
pub const SCALAR_ORDER_COMPLEX: usize = 64;

/// Error covariance of both inputs estimated at one receiver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCovariance {
    /// `E|x_1 - x^_1|^2`
    pub e1: f64,
    /// `E|x_2 - x^_2|^2`
    pub e2: f64,
    /// `E[(x_1 - x^_1)(x_2 - x^_2)^*]`
    pub cross: C64,
}

impl ErrorCovariance {
    pub fn err(&self, u: User) -> f64 {
        match u {
            User::One => self.e1,
            User::Two => self.e2,
        }
    }

    /// `E[(x_m - x^_m)(x_n - x^_n)^*]`.
    pub fn entry(&self, m: User, n: User) -> C64 {
        match (m, n) {
            (User::One, User::One) => C64::new(self.e1, 0.0),
            (User::Two, User::Two) => C64::new(self.e2, 0.0),
            (User::One, User::Two) => self.cross,
            (User::Two, User::One) => self.cross.conj(),
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            e1: self.e2,
            e2: self.e1,
            cross: self.cross.conj(),
        }
    }
}

/// The 2x2 system MMSE matrix together with the full per-receiver covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmseMatrix {
    rx: [ErrorCovariance; 2],
    pub warning: Option<AccuracyWarning>,
}

impl MmseMatrix {
    pub fn from_receivers(rx1: ErrorCovariance, rx2: ErrorCovariance) -> Self {
        Self {
            rx: [rx1, rx2],
            warning: None,
        }
    }

    /// User 1's error at receiver 1.
    pub fn e11(&self) -> f64 {
        self.rx[0].e1
    }

    /// Cross covariance of the two errors at receiver 1.
    pub fn e12(&self) -> C64 {
        self.rx[0].cross
    }

    /// Cross covariance of the two errors at receiver 2, user 2 first.
    pub fn e21(&self) -> C64 {
        self.rx[1].cross.conj()
    }

    /// User 2's error at receiver 2.
    pub fn e22(&self) -> f64 {
        self.rx[1].e2
    }

    pub fn at(&self, rx: Mac) -> &ErrorCovariance {
        &self.rx[rx.index()]
    }

    /// Mean of the two own-cell errors.
    pub fn system_mmse(&self) -> f64 {
        0.5 * (self.e11() + self.e22())
    }
}

/// What one receiver sees.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RxView {
    pub amps: [C64; 2],
    pub noise: f64,
}

impl RxView {
    pub fn new(ch: &EstimatedChannel, powers: &PowerProfile, rx: Mac) -> Self {
        Self {
            amps: ch.amplitudes(rx, powers.as_array()),
            noise: ch.sigma_sq(rx),
        }
    }
}

/// Joint information and error covariance at one receiver, from one pass.
#[derive(Clone, Debug)]
pub(crate) struct RxEval {
    /// `I(x_1, x_2; y)` in nats.
    pub mi: f64,
    pub mi_se: Option<f64>,
    pub cov: ErrorCovariance,
    pub warning: Option<AccuracyWarning>,
}

fn law(spec: &InputSpec) -> Option<Constellation> {
    spec.constellation()
}

/// Closed-form linear estimator for two Gaussian inputs.
fn gaussian_pair(view: &RxView) -> RxEval {
    let [a1, a2] = view.amps;
    let cy = a1.norm_sqr() + a2.norm_sqr() + view.noise;
    RxEval {
        mi: ((a1.norm_sqr() + a2.norm_sqr()) / view.noise).ln_1p(),
        mi_se: None,
        cov: ErrorCovariance {
            e1: 1.0 - a1.norm_sqr() / cy,
            e2: 1.0 - a2.norm_sqr() / cy,
            cross: -(a1.conj() * a2) / cy,
        },
        warning: None,
    }
}

pub(crate) fn pair_mixture(
    view: &RxView,
    c1: &Constellation,
    c2: &Constellation,
) -> (Mixture, Vec<C64>, Vec<C64>) {
    let n = c1.len() * c2.len();
    let mut centers = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for (u, pu) in c1.points().iter().zip(c1.probs()) {
        for (v, pv) in c2.points().iter().zip(c2.probs()) {
            centers.push(view.amps[0] * u + view.amps[1] * v);
            weights.push(pu * pv);
            x1.push(*u);
            x2.push(*v);
        }
    }
    (Mixture::new(1, centers, weights, view.noise), x1, x2)
}

fn discrete_pair(
    view: &RxView,
    c1: &Constellation,
    c2: &Constellation,
    engine: &IntegrationEngine,
) -> Result<RxEval> {
    let (mix, x1, x2) = pair_mixture(view, c1, c2);
    let r = integrate(&mix, engine, 5, |j, post, lr, out| {
        let mut h1 = C64::new(0.0, 0.0);
        let mut h2 = C64::new(0.0, 0.0);
        for (k, p) in post.iter().enumerate() {
            if *p != 0.0 {
                h1 += x1[k] * p;
                h2 += x2[k] * p;
            }
        }
        // E[e e^H] = E[x x^H] - E[x x^^H], which converges faster under
        // quadrature than the squared-error form
        let (u, v) = (x1[j], x2[j]);
        let c = u * v.conj() - 0.5 * (u * h2.conj() + h1 * v.conj());
        out[0] = lr;
        out[1] = u.norm_sqr() - (u * h1.conj()).re;
        out[2] = v.norm_sqr() - (v * h2.conj()).re;
        out[3] = c.re;
        out[4] = c.im;
    })?;
    let v = &r.values;
    Ok(RxEval {
        mi: v[0].max(0.0),
        mi_se: r.std_err.as_ref().map(|s| s[0]),
        cov: ErrorCovariance {
            e1: v[1].clamp(0.0, 1.0),
            e2: v[2].clamp(0.0, 1.0),
            cross: C64::new(v[3], v[4]),
        },
        warning: r.warning,
    })
}

/// One discrete user `d` with the Gaussian user folded into the noise.
///
/// Returns `I(x_d; y)`, `E|x_d - x^_d|^2` and the effective noise variance.
fn discrete_in_gaussian_noise(
    a_d: C64,
    c: &Constellation,
    noise: f64,
    engine: &IntegrationEngine,
) -> Result<(f64, Option<f64>, f64, Option<AccuracyWarning>)> {
    let centers: Vec<C64> = c.points().iter().map(|x| a_d * x).collect();
    let mix = Mixture::new(1, centers, c.probs().to_vec(), noise);
    let pts = c.points();
    let r = integrate(&mix, engine, 2, |j, post, lr, out| {
        let mut h = C64::new(0.0, 0.0);
        for (k, p) in post.iter().enumerate() {
            h += pts[k] * p;
        }
        out[0] = lr;
        out[1] = pts[j].norm_sqr() - (pts[j] * h.conj()).re;
    })?;
    Ok((
        r.values[0].max(0.0),
        r.std_err.as_ref().map(|s| s[0]),
        r.values[1].clamp(0.0, 1.0),
        r.warning,
    ))
}

fn mixed_pair(
    view: &RxView,
    gaussian: User,
    c: &Constellation,
    engine: &IntegrationEngine,
) -> Result<RxEval> {
    let d = gaussian.other();
    let a_g = view.amps[gaussian.index()];
    let a_d = view.amps[d.index()];
    let s2 = view.noise + a_g.norm_sqr();
    let (mi_d, se, err_d, warning) = discrete_in_gaussian_noise(a_d, c, s2, engine)?;
    let err_g = view.noise / s2 + a_g.norm_sqr() * a_d.norm_sqr() / (s2 * s2) * err_d;
    // E[e_g e_d^*]
    let cross_gd = -(a_g.conj() * a_d) * (err_d / s2);
    let cov = if gaussian == User::One {
        ErrorCovariance {
            e1: err_g,
            e2: err_d,
            cross: cross_gd,
        }
    } else {
        ErrorCovariance {
            e1: err_d,
            e2: err_g,
            cross: cross_gd.conj(),
        }
    };
    Ok(RxEval {
        mi: mi_d + (s2 / view.noise).ln(),
        mi_se: se,
        cov,
        warning,
    })
}

pub(crate) fn evaluate_rx(
    view: &RxView,
    inputs: &[InputSpec; 2],
    engine: &IntegrationEngine,
) -> Result<RxEval> {
    match (law(&inputs[0]), law(&inputs[1])) {
        (None, None) => Ok(gaussian_pair(view)),
        (Some(c1), Some(c2)) => discrete_pair(view, &c1, &c2, engine),
        (None, Some(c2)) => mixed_pair(view, User::One, &c2, engine),
        (Some(c1), None) => mixed_pair(view, User::Two, &c1, engine),
    }
}

/// System MMSE matrix at the operating point `(ch, powers)`.
///
/// Gaussian pairs use the linear estimator in closed form; discrete and
/// mixed pairs integrate over the output mixture.
pub fn mmse_matrix(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    engine: &IntegrationEngine,
) -> Result<MmseMatrix> {
    let r1 = evaluate_rx(&RxView::new(ch, powers, Mac::One), inputs, engine)?;
    let r2 = evaluate_rx(&RxView::new(ch, powers, Mac::Two), inputs, engine)?;
    Ok(MmseMatrix {
        rx: [r1.cov, r2.cov],
        warning: crate::engine::worse(r1.warning, r2.warning),
    })
}

/// Conditional means `(E[x_1 | y], E[x_2 | y])` at receiver `rx`.
pub fn posterior_mean(
    y: C64,
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    rx: Mac,
) -> Result<[C64; 2]> {
    if !(y.re.is_finite() && y.im.is_finite()) {
        return Err(Error::Argument("observation must be finite".into()));
    }
    let view = RxView::new(ch, powers, rx);
    Ok(posterior_mean_view(y, &view, inputs))
}

pub(crate) fn posterior_mean_view(y: C64, view: &RxView, inputs: &[InputSpec; 2]) -> [C64; 2] {
    let bayes = |centers: &[C64], weights: &[f64], noise: f64| -> Vec<f64> {
        let logs: Vec<f64> = centers
            .iter()
            .zip(weights)
            .map(|(c, w)| w.ln() - (y - c).norm_sqr() / noise)
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let s: f64 = ex.iter().sum();
        ex.into_iter().map(|e| e / s).collect()
    };
    match (law(&inputs[0]), law(&inputs[1])) {
        (None, None) => {
            let [a1, a2] = view.amps;
            let cy = a1.norm_sqr() + a2.norm_sqr() + view.noise;
            [a1.conj() * y / cy, a2.conj() * y / cy]
        }
        (Some(c1), Some(c2)) => {
            let (mix, x1, x2) = pair_mixture(view, &c1, &c2);
            let centers: Vec<C64> = (0..mix.len()).map(|j| mix.center(j)[0]).collect();
            let weights: Vec<f64> = (0..mix.len()).map(|j| mix.weight(j)).collect();
            let post = bayes(&centers, &weights, view.noise);
            let mut h = [C64::new(0.0, 0.0); 2];
            for (k, p) in post.iter().enumerate() {
                h[0] += x1[k] * p;
                h[1] += x2[k] * p;
            }
            h
        }
        (g, d) => {
            let (gaussian, c) = match (g, d) {
                (None, Some(c)) => (User::One, c),
                (Some(c), None) => (User::Two, c),
                _ => unreachable!(),
            };
            let du = gaussian.other();
            let a_g = view.amps[gaussian.index()];
            let a_d = view.amps[du.index()];
            let s2 = view.noise + a_g.norm_sqr();
            let centers: Vec<C64> = c.points().iter().map(|x| a_d * x).collect();
            let post = bayes(&centers, c.probs(), s2);
            let xd: C64 = c.points().iter().zip(&post).map(|(x, p)| x * p).sum();
            let xg = a_g.conj() * (y - a_d * xd) / s2;
            let mut h = [C64::new(0.0, 0.0); 2];
            h[du.index()] = xd;
            h[gaussian.index()] = xg;
            h
        }
    }
}

fn scalar_engine(c: &Constellation) -> IntegrationEngine {
    IntegrationEngine::gauss_hermite(if c.is_real() {
        SCALAR_ORDER_REAL
    } else {
        SCALAR_ORDER_COMPLEX
    })
}

/// Single-user MMSE at effective SNR `snr_eff` (unit noise).
pub fn scalar_mmse(kind: &InputSpec, snr_eff: f64) -> Result<f64> {
    check_nonneg("snr_eff", snr_eff)?;
    match law(kind) {
        None => Ok(1.0 / (1.0 + snr_eff)),
        Some(c) => {
            if snr_eff == 0.0 {
                return Ok(1.0);
            }
            let a = C64::new(snr_eff.sqrt(), 0.0);
            Ok(discrete_in_gaussian_noise(a, &c, 1.0, &scalar_engine(&c))?.2)
        }
    }
}

/// Single-user mutual information in nats at effective SNR `snr_eff`.
pub fn scalar_mi(kind: &InputSpec, snr_eff: f64) -> Result<f64> {
    check_nonneg("snr_eff", snr_eff)?;
    match law(kind) {
        None => Ok(snr_eff.ln_1p()),
        Some(c) => {
            if snr_eff == 0.0 {
                return Ok(0.0);
            }
            let centers = c.points().iter().map(|x| x * snr_eff.sqrt()).collect();
            let mix = Mixture::new(1, centers, c.probs().to_vec(), 1.0);
            Ok(label_information(&mix, &scalar_engine(&c))?.values[0].max(0.0))
        }
    }
}
