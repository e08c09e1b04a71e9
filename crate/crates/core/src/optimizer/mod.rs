//! Power and precoder design for the two MACs, and the min-max selection.
//!
//! Prices `lambda_k` are in nats per unit power throughout: a user is
//! active when its marginal rate `dI/dP_k` reaches `lambda_k`.

mod closed_form;
mod fixed_point;
pub mod kkt;
mod newton;
mod precoder;

use serde::{Deserialize, Serialize};

use crate::engine::AccuracyWarning;
use crate::error::{check_positive, Error, Result};
use crate::ids::{Mac, User};
use crate::info::RateValue;
use crate::power::PowerProfile;

pub use closed_form::{gaussian_power, tune_multipliers, TuneStatus, TunedMultipliers};
pub use fixed_point::{budgeted_power, fixed_point_power, PowerSolution};
pub use precoder::{
    fixed_point_precoder, mimo_precoder, CMat, MimoChannel, Normalization, PrecoderPair,
    PrecoderSolution, SinglePrecoder, SvdFactors,
};

/// Rates closer than this (relative) count as tied in the selection rule.
pub const TIE_TOL: f64 = 1e-12;

/// Dual variables of the design problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Average-power prices.
    pub lambda: [f64; 2],
    /// Non-negativity duals.
    pub mu: [f64; 2],
    /// Precoder prices.
    pub nu: [f64; 2],
}

impl Multipliers {
    /// Prices for power allocation; precoder prices set equal.
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        check_positive("lambda1", lambda1)?;
        check_positive("lambda2", lambda2)?;
        Ok(Self {
            lambda: [lambda1, lambda2],
            mu: [0.0, 0.0],
            nu: [lambda1, lambda2],
        })
    }

    pub fn lambda(&self, u: User) -> f64 {
        self.lambda[u.index()]
    }

    pub fn nu(&self, u: User) -> f64 {
        self.nu[u.index()]
    }

    pub(crate) fn require_positive_lambda(&self) -> Result<()> {
        for (i, l) in self.lambda.iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return Err(Error::Domain {
                    name: if i == 0 { "lambda1" } else { "lambda2" },
                    value: *l,
                    expected: "finite and > 0",
                });
            }
        }
        Ok(())
    }

    pub(crate) fn require_positive_nu(&self) -> Result<()> {
        for (i, l) in self.nu.iter().enumerate() {
            if !(l.is_finite() && *l > 0.0) {
                return Err(Error::Domain {
                    name: if i == 0 { "nu1" } else { "nu2" },
                    value: *l,
                    expected: "finite and > 0",
                });
            }
        }
        Ok(())
    }
}

/// Damping sequence of the fixed-point iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        alpha: f64,
    },
    /// `alpha_k = 1 / (k + 1)`
    Harmonic,
}

impl StepSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::Harmonic => 1.0 / (k as f64 + 1.0),
        }
    }
}

/// Step sizes, iteration cap and residual tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationSchedule {
    pub alpha: StepSchedule,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IterationSchedule {
    fn default() -> Self {
        Self {
            alpha: StepSchedule::Constant { alpha: 0.5 },
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

impl IterationSchedule {
    pub fn with_max_iter(self, max_iter: usize) -> Self {
        Self { max_iter, ..self }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Argument("max_iter must be >= 1".into()));
        }
        check_positive("tol", self.tol)?;
        if let StepSchedule::Constant { alpha } = self.alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Domain {
                    name: "alpha",
                    value: alpha,
                    expected: "in (0, 1]",
                });
            }
        }
        Ok(())
    }
}

/// Iteration diagnostics common to the iterative solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub warning: Option<AccuracyWarning>,
}

/// A designed transmit strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum Design {
    Powers(PowerProfile),
    Precoders(PrecoderPair),
}

impl Design {
    /// Per-user transmit powers implied by the design.
    pub fn powers(&self) -> PowerProfile {
        match self {
            Design::Powers(p) => *p,
            Design::Precoders(pp) => pp.powers(),
        }
    }
}

/// One MAC's solved problem, ready for the selection rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignCandidate {
    pub mac: Mac,
    pub design: Design,
    /// Maximized rate of this MAC.
    pub rate: RateValue,
    pub multipliers: Multipliers,
    pub report: IterationReport,
}

/// The selected design and the rates of both candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignOutcome {
    pub selected_mac: Mac,
    pub design: Design,
    pub rates: [RateValue; 2],
    pub multipliers: Multipliers,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl DesignOutcome {
    pub fn selected_rate(&self) -> &RateValue {
        &self.rates[self.selected_mac.index()]
    }
}

/// Keeps the candidate whose maximized rate is the smaller one; near-ties
/// (within [`TIE_TOL`] relative) go to the first argument.
pub fn select_design(
    outcome_mac1: DesignCandidate,
    outcome_mac2: DesignCandidate,
) -> DesignOutcome {
    let r1 = outcome_mac1.rate.nats();
    let r2 = outcome_mac2.rate.nats();
    let tol = TIE_TOL * r1.abs().max(r2.abs()).max(1.0);
    let rates = [outcome_mac1.rate.clone(), outcome_mac2.rate.clone()];
    let pick = if r2 < r1 - tol {
        outcome_mac2
    } else {
        outcome_mac1
    };
    DesignOutcome {
        selected_mac: pick.mac,
        design: pick.design,
        rates,
        multipliers: pick.multipliers,
        iterations: pick.report.iterations,
        residual: pick.report.residual,
        converged: pick.report.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(mac: Mac, bits: f64) -> DesignCandidate {
        DesignCandidate {
            mac,
            design: Design::Powers(PowerProfile::new(bits, 1.0).unwrap()),
            rate: RateValue::from_bits(bits),
            multipliers: Multipliers::new(1.0, 1.0).unwrap(),
            report: IterationReport {
                iterations: 3,
                residual: 0.0,
                converged: true,
                warning: None,
            },
        }
    }

    #[test]
    fn smaller_maximum_wins() {
        let out = select_design(cand(Mac::One, 2.0), cand(Mac::Two, 1.5));
        assert_eq!(out.selected_mac, Mac::Two);
        assert_eq!(
            out.design,
            Design::Powers(PowerProfile::new(1.5, 1.0).unwrap())
        );
        assert!((out.selected_rate().bits() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_mac1() {
        let out = select_design(cand(Mac::One, 1.0), cand(Mac::Two, 1.0));
        assert_eq!(out.selected_mac, Mac::One);
    }

    #[test]
    fn selection_is_idempotent() {
        let a = cand(Mac::One, 0.7);
        let out = select_design(a.clone(), a.clone());
        assert_eq!(out.selected_mac, a.mac);
        assert_eq!(out.design, a.design);
        assert_eq!(out.rates[0], a.rate);
    }

    #[test]
    fn schedule_validation() {
        assert!(IterationSchedule::default().validate().is_ok());
        let bad = IterationSchedule {
            alpha: StepSchedule::Constant { alpha: 1.5 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(StepSchedule::Harmonic.alpha(0), 1.0);
        assert_eq!(StepSchedule::Harmonic.alpha(3), 0.25);
    }
}
