//! First-order optimality certificates.
//!
//! For `max I(P) - sum lambda_k P_k` over `P >= 0` the non-negativity duals are
//! taken as `mu_k = max(0, lambda_k - dI/dP_k)`, which makes the stationarity
//! residual `max(0, dI/dP_k - lambda_k)` and leaves `mu_k P_k` as the
//! complementary-slackness residual. Box problems `0 <= P <= Q` use
//! `lambda_k = max(0, dI/dP_k)` and `mu_k = max(0, -dI/dP_k)`.

use serde::{Deserialize, Serialize};

/// Residuals of a KKT check, all zero at an exact solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub feasibility: f64,
    pub slackness: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.slackness)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max() <= tol
    }

    pub(crate) fn merge(self, other: KktReport) -> KktReport {
        KktReport {
            stationarity: self.stationarity.max(other.stationarity),
            feasibility: self.feasibility.max(other.feasibility),
            slackness: self.slackness.max(other.slackness),
        }
    }
}

/// Certificate for the priced problem; returns the residuals and `mu`.
pub fn priced(grad: [f64; 2], powers: [f64; 2], lambda: [f64; 2]) -> (KktReport, [f64; 2]) {
    let mut r = KktReport::default();
    let mut mu = [0.0; 2];
    for k in 0..2 {
        mu[k] = (lambda[k] - grad[k]).max(0.0);
        r.stationarity = r.stationarity.max((grad[k] - lambda[k]).max(0.0));
        r.feasibility = r.feasibility.max((-powers[k]).max(0.0));
        r.slackness = r.slackness.max(mu[k] * powers[k]);
    }
    (r, mu)
}

/// Certificate for the box problem; returns residuals, upper and lower duals.
pub fn boxed(
    grad: [f64; 2],
    powers: [f64; 2],
    budgets: [f64; 2],
) -> (KktReport, [f64; 2], [f64; 2]) {
    let mut r = KktReport::default();
    let mut lambda = [0.0; 2];
    let mut mu = [0.0; 2];
    for k in 0..2 {
        lambda[k] = grad[k].max(0.0);
        mu[k] = (-grad[k]).max(0.0);
        r.feasibility = r
            .feasibility
            .max((-powers[k]).max(0.0))
            .max((powers[k] - budgets[k]).max(0.0));
        r.slackness = r
            .slackness
            .max(lambda[k] * (budgets[k] - powers[k]).max(0.0))
            .max(mu[k] * powers[k].max(0.0));
    }
    (r, lambda, mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_optimum_is_clean() {
        let (r, mu) = priced([0.5, 0.2], [1.0, 0.0], [0.5, 0.3]);
        assert_eq!(r.max(), 0.0);
        assert_eq!(mu[0], 0.0);
        assert!((mu[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn violations_are_measured() {
        let (r, _) = priced([0.9, 0.2], [1.0, 0.5], [0.5, 0.3]);
        assert!((r.stationarity - 0.4).abs() < 1e-15);
        assert!((r.slackness - 0.05).abs() < 1e-15);
        let (b, lam, mu) = boxed([0.3, -0.1], [2.0, 0.0], [2.0, 2.0]);
        assert_eq!(b.max(), 0.0);
        assert_eq!(lam, [0.3, 0.0]);
        assert_eq!(mu, [0.0, 0.1]);
        let (b, _, _) = boxed([0.3, 0.1], [1.5, 0.0], [2.0, 2.0]);
        assert!((b.slackness - 0.2).abs() < 1e-15);
    }
}
