//! Per-user transmit powers and their average budgets.

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, check_positive, Result};
use crate::ids::User;

/// Instantaneous powers `(P1, P2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    p: [f64; 2],
}

impl PowerProfile {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        Ok(Self {
            p: [check_nonneg("p1", p1)?, check_nonneg("p2", p2)?],
        })
    }

    pub fn zero() -> Self {
        Self { p: [0.0, 0.0] }
    }

    pub fn p(&self, u: User) -> f64 {
        self.p[u.index()]
    }

    pub fn p1(&self) -> f64 {
        self.p[0]
    }

    pub fn p2(&self) -> f64 {
        self.p[1]
    }

    pub fn as_array(&self) -> [f64; 2] {
        self.p
    }

    pub fn amplitudes(&self) -> [f64; 2] {
        self.p.map(f64::sqrt)
    }

    pub fn with(&self, u: User, value: f64) -> Result<Self> {
        let mut p = self.p;
        p[u.index()] = check_nonneg(if u == User::One { "p1" } else { "p2" }, value)?;
        Ok(Self { p })
    }

    pub fn swapped(&self) -> Self {
        Self {
            p: [self.p[1], self.p[0]],
        }
    }
}

impl From<Budgets> for PowerProfile {
    fn from(b: Budgets) -> Self {
        Self { p: b.q }
    }
}

/// Average power budgets `(Q1, Q2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    q: [f64; 2],
}

impl Budgets {
    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        Ok(Self {
            q: [check_positive("q1", q1)?, check_positive("q2", q2)?],
        })
    }

    pub fn q(&self, u: User) -> f64 {
        self.q[u.index()]
    }

    pub fn as_array(&self) -> [f64; 2] {
        self.q
    }
}

impl Default for Budgets {
    fn default() -> Self {
        Self { q: [2.0, 2.0] }
    }
}
