//! Mutual information and its power gradients.
//!
//! Rates are computed in nats and converted on request. At receiver `l`
//! the joint information is `I(x1, x2; y_l)`; the chain rule splits it into
//! the rate of the interferer decoded with the own-cell user as noise and the
//! own-cell rate given the interferer.
//!
//! Gradients follow the per-receiver error covariance `E`. For amplitudes
//! `a_k = sqrt(P_k)` the joint gradient returned by [`grad_power_joint`] is
//! `g_k = Re[(H^H H P E)_kk]` with `H` the receiver's row of gains and
//! `P = diag(a)`, so that `dI/da_k = (2 snr / sigma_l^2) g_k` in nats.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::{EstimatedChannel, FrameConfig};
use crate::engine::{label_information, AccuracyWarning, IntegrationEngine, Mixture};
use crate::error::{Error, Result};
use crate::estimation::{
    evaluate_rx, pair_mixture, scalar_mi, scalar_mmse, ErrorCovariance, MmseMatrix, RxView,
};
use crate::ids::{Mac, User};
use crate::inputs::InputSpec;
use crate::power::PowerProfile;

/// Power used in place of an exact zero where a derivative needs `1/sqrt(P)`.
pub(crate) const POWER_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Bits,
    Nats,
}

impl std::str::FromStr for Unit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bits" => Ok(Unit::Bits),
            "nats" => Ok(Unit::Nats),
            other => Err(Error::Argument(format!(
                "unit must be bits or nats, got {other}"
            ))),
        }
    }
}

/// A rate with its unit and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateValue {
    value: f64,
    unit: Unit,
    prefactor_applied: bool,
    std_err: Option<f64>,
    pub warning: Option<AccuracyWarning>,
}

impl RateValue {
    pub fn from_nats(nats: f64) -> Self {
        Self {
            value: nats,
            unit: Unit::Nats,
            prefactor_applied: false,
            std_err: None,
            warning: None,
        }
    }

    pub fn from_bits(bits: f64) -> Self {
        Self::from_nats(bits * std::f64::consts::LN_2)
    }

    pub(crate) fn with_error(
        mut self,
        std_err: Option<f64>,
        warning: Option<AccuracyWarning>,
    ) -> Self {
        self.std_err = std_err;
        self.warning = warning;
        self
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn prefactor_applied(&self) -> bool {
        self.prefactor_applied
    }

    /// Monte Carlo standard error in the rate's own unit.
    pub fn std_err(&self) -> Option<f64> {
        self.std_err
    }

    pub fn nats(&self) -> f64 {
        match self.unit {
            Unit::Nats => self.value,
            Unit::Bits => self.value * std::f64::consts::LN_2,
        }
    }

    pub fn bits(&self) -> f64 {
        match self.unit {
            Unit::Bits => self.value,
            Unit::Nats => self.value / std::f64::consts::LN_2,
        }
    }

    pub fn to(&self, unit: Unit) -> Self {
        let scale = match (self.unit, unit) {
            (Unit::Nats, Unit::Bits) => 1.0 / std::f64::consts::LN_2,
            (Unit::Bits, Unit::Nats) => std::f64::consts::LN_2,
            _ => 1.0,
        };
        Self {
            value: self.value * scale,
            unit,
            prefactor_applied: self.prefactor_applied,
            std_err: self.std_err.map(|s| s * scale),
            warning: self.warning.clone(),
        }
    }

    /// Scales by the pilot overhead `(K - M L) / K`; applying it twice is an error.
    pub fn with_prefactor(&self, frame: &FrameConfig) -> Result<Self> {
        if self.prefactor_applied {
            return Err(Error::Precondition("rate prefactor already applied".into()));
        }
        let f = frame.rate_prefactor();
        Ok(Self {
            value: self.value * f,
            unit: self.unit,
            prefactor_applied: true,
            std_err: self.std_err.map(|s| s * f),
            warning: self.warning.clone(),
        })
    }
}

/// Law assumed for the undecoded user when it is treated as noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceModel {
    /// The undecoded signal is replaced by Gaussian noise of equal power.
    #[default]
    Gaussian,
    /// The undecoded signal keeps its own input law.
    Exact,
}

/// Power gradient pair at one receiver, per unit amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientPair {
    pub g1: f64,
    pub g2: f64,
}

impl GradientPair {
    pub fn g(&self, u: User) -> f64 {
        match u {
            User::One => self.g1,
            User::Two => self.g2,
        }
    }
}

/// Closed-form joint rate of two Gaussian inputs at receiver `rx`.
pub fn mi_gaussian_sum(ch: &EstimatedChannel, powers: &PowerProfile, rx: Mac) -> RateValue {
    let [a1, a2] = ch.amplitudes(rx, powers.as_array());
    RateValue::from_nats(((a1.norm_sqr() + a2.norm_sqr()) / ch.sigma_sq(rx)).ln_1p())
}

/// Joint rate of two discrete inputs at receiver `rx`.
pub fn mi_discrete_sum(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    rx: Mac,
    engine: &IntegrationEngine,
) -> Result<RateValue> {
    if inputs.iter().any(InputSpec::is_gaussian) {
        return Err(Error::Argument(
            "mi_discrete_sum needs two discrete inputs".into(),
        ));
    }
    mi_sum(ch, powers, inputs, rx, engine)
}

/// Joint rate at receiver `rx` for any combination of input laws.
pub fn mi_sum(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    rx: Mac,
    engine: &IntegrationEngine,
) -> Result<RateValue> {
    let view = RxView::new(ch, powers, rx);
    if let (Some(c1), Some(c2), IntegrationEngine::GaussHermite { .. }) =
        (inputs[0].constellation(), inputs[1].constellation(), engine)
    {
        let (mix, _, _) = pair_mixture(&view, &c1, &c2);
        let r = label_information(&mix, engine)?;
        return Ok(RateValue::from_nats(r.values[0].max(0.0)).with_error(None, r.warning));
    }
    let r = evaluate_rx(&view, inputs, engine)?;
    Ok(RateValue::from_nats(r.mi).with_error(r.mi_se, r.warning))
}

/// Joint rate with user `gaussian_user` Gaussian and the other user `other`.
pub fn mi_mixed(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    gaussian_user: User,
    other: &InputSpec,
    rx: Mac,
    engine: &IntegrationEngine,
) -> Result<RateValue> {
    if other.is_gaussian() {
        return Err(Error::Argument(
            "mi_mixed needs exactly one Gaussian user".into(),
        ));
    }
    let mut inputs = [InputSpec::Gaussian, InputSpec::Gaussian];
    inputs[gaussian_user.other().index()] = other.clone();
    mi_sum(ch, powers, &inputs, rx, engine)
}

/// Receiver at which `decoded` is the interferer.
fn ian_receiver(decoded: User) -> Mac {
    Mac::from_index(decoded.other().index())
}

/// Rate of the own-cell user given the interferer, via its own mixture.
fn own_given_interferer(
    view: &RxView,
    own: User,
    inputs: &[InputSpec; 2],
    engine: &IntegrationEngine,
) -> Result<(f64, Option<f64>, Option<AccuracyWarning>)> {
    let a = view.amps[own.index()];
    match inputs[own.index()].constellation() {
        None => Ok(((a.norm_sqr() / view.noise).ln_1p(), None, None)),
        Some(c) => {
            let centers = c.points().iter().map(|x| a * x).collect();
            let mix = Mixture::new(1, centers, c.probs().to_vec(), view.noise);
            let r = label_information(&mix, engine)?;
            Ok((r.values[0].max(0.0), r.std_err.map(|s| s[0]), r.warning))
        }
    }
}

/// Rate of `decoded` at the receiver where it interferes, with the
/// own-cell user treated as noise.
///
/// `decoded = User::Two` gives `I(x2; y1)`, `User::One` gives `I(x1; y2)`.
pub fn mi_interference_as_noise(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    decoded: User,
    model: InterferenceModel,
    engine: &IntegrationEngine,
) -> Result<RateValue> {
    let rx = ian_receiver(decoded);
    let view = RxView::new(ch, powers, rx);
    let own = decoded.other();
    match model {
        InterferenceModel::Gaussian => {
            let a_own = view.amps[own.index()];
            let a_dec = view.amps[decoded.index()];
            let snr_s = a_dec.norm_sqr() / (a_own.norm_sqr() + view.noise);
            match inputs[decoded.index()].constellation() {
                None => Ok(RateValue::from_nats(snr_s.ln_1p())),
                Some(c) => {
                    let centers = c.points().iter().map(|x| x * snr_s.sqrt()).collect();
                    let mix = Mixture::new(1, centers, c.probs().to_vec(), 1.0);
                    let r = label_information(&mix, engine)?;
                    Ok(RateValue::from_nats(r.values[0].max(0.0))
                        .with_error(r.std_err.map(|s| s[0]), r.warning))
                }
            }
        }
        InterferenceModel::Exact => {
            let joint = evaluate_rx(&view, inputs, engine)?;
            let (cond, se, w) = own_given_interferer(&view, own, inputs, engine)?;
            let se = match (joint.mi_se, se) {
                (Some(a), Some(b)) => Some(a.hypot(b)),
                (a, b) => a.or(b),
            };
            Ok(RateValue::from_nats((joint.mi - cond).max(0.0))
                .with_error(se, crate::engine::worse(joint.warning, w)))
        }
    }
}

/// Own-cell rate given the interferer at receiver `rx`, by the chain rule:
/// `I(x_l; y_l | x_m) = I(x1, x2; y_l) - I(x_m; y_l)`.
pub fn mi_conditional(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    rx: Mac,
    model: InterferenceModel,
    engine: &IntegrationEngine,
) -> Result<RateValue> {
    let joint = mi_sum(ch, powers, inputs, rx, engine)?;
    let interferer = rx.own_user().other();
    let ian = mi_interference_as_noise(ch, powers, inputs, interferer, model, engine)?;
    let se = match (joint.std_err, ian.std_err) {
        (Some(a), Some(b)) => Some(a.hypot(b)),
        (a, b) => a.or(b),
    };
    Ok(RateValue::from_nats(joint.nats() - ian.nats()).with_error(
        se,
        crate::engine::worse(joint.warning.clone(), ian.warning.clone()),
    ))
}

/// Joint-rate gradient at receiver `rx` from the error covariance there.
pub fn grad_power_joint(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    mmse: &MmseMatrix,
    rx: Mac,
) -> GradientPair {
    gradient_from_cov(ch, powers, mmse.at(rx), rx)
}

pub(crate) fn gradient_from_cov(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    cov: &ErrorCovariance,
    rx: Mac,
) -> GradientPair {
    let row = [ch.gain(rx, User::One), ch.gain(rx, User::Two)];
    let a = powers.amplitudes();
    let g = |k: User| -> f64 {
        let hk = row[k.index()];
        let mut acc = C64::new(0.0, 0.0);
        for m in User::BOTH {
            acc += hk.conj() * row[m.index()] * a[m.index()] * cov.entry(m, k);
        }
        acc.re
    };
    GradientPair {
        g1: g(User::One),
        g2: g(User::Two),
    }
}

/// `dI(x1, x2; y_rx)/dP_k` in nats per unit power.
pub(crate) fn joint_power_derivative(
    ch: &EstimatedChannel,
    rx: Mac,
    powers: &PowerProfile,
    pair: &GradientPair,
) -> [f64; 2] {
    let c = ch.snr() / ch.sigma_sq(rx);
    let a = powers.amplitudes();
    [c * pair.g1 / a[0], c * pair.g2 / a[1]]
}

fn floored(powers: &PowerProfile, u: User) -> PowerProfile {
    if powers.p(u) > 0.0 {
        *powers
    } else {
        powers.with(u, POWER_FLOOR).expect("floor is non-negative")
    }
}

/// Derivative of the interferer rate with respect to the own-cell power,
/// in nats per unit power: `dI(x2; y1)/dP1` at receiver 1, `dI(x1; y2)/dP2`
/// at receiver 2.
///
/// Under the Gaussian model the rate is a single-user rate at
/// `s = snr |h_int|^2 P_int / (snr |h_own|^2 P_own + sigma^2)`, so the
/// derivative is `ds/dP_own * mmse(s)`.
pub fn grad_power_int_noise(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    rx: Mac,
    model: InterferenceModel,
    engine: &IntegrationEngine,
) -> Result<f64> {
    let own = rx.own_user();
    let int = own.other();
    let snr = ch.snr();
    let s2 = ch.sigma_sq(rx);
    let g_own = snr * ch.gain(rx, own).norm_sqr();
    let g_int = snr * ch.gain(rx, int).norm_sqr();
    match model {
        InterferenceModel::Gaussian => {
            let den = g_own * powers.p(own) + s2;
            let s = g_int * powers.p(int) / den;
            let m = scalar_mmse(&inputs[int.index()], s)?;
            Ok(-g_own * g_int * powers.p(int) * m / (den * den))
        }
        InterferenceModel::Exact => {
            let p = floored(powers, own);
            let mmse = crate::estimation::mmse_matrix(ch, &p, inputs, engine)?;
            let pair = grad_power_joint(ch, &p, &mmse, rx);
            let joint = joint_power_derivative(ch, rx, &p, &pair)[own.index()];
            let own_snr = g_own * p.p(own) / s2;
            let cond = g_own / s2 * scalar_mmse(&inputs[own.index()], own_snr)?;
            Ok(joint - cond)
        }
    }
}

/// Own-cell conditional-rate gradient at receiver `rx` in the joint
/// gradient's amplitude normalization: `g_own - (sigma^2/snr) sqrt(P_own) dI_int/dP_own`.
pub fn grad_power_conditional(
    ch: &EstimatedChannel,
    powers: &PowerProfile,
    inputs: &[InputSpec; 2],
    rx: Mac,
    model: InterferenceModel,
    engine: &IntegrationEngine,
) -> Result<f64> {
    if ch.snr() == 0.0 {
        return Ok(0.0);
    }
    let own = rx.own_user();
    let mmse = crate::estimation::mmse_matrix(ch, powers, inputs, engine)?;
    let g = grad_power_joint(ch, powers, &mmse, rx).g(own);
    let int = grad_power_int_noise(ch, powers, inputs, rx, model, engine)?;
    Ok(g - ch.sigma_sq(rx) / ch.snr() * powers.p(own).sqrt() * int)
}

/// Single-user rate in nats, re-exported for convenience.
pub fn single_user_mi(kind: &InputSpec, snr_eff: f64) -> Result<f64> {
    scalar_mi(kind, snr_eff)
}
