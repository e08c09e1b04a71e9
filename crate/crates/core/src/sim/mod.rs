//! Two base stations running the uplink power and downlink precoding rounds.
//!
//! Each base station keeps the channel row of the receiver it serves. Rows
//! cross the backhaul only in a cooperative round; user data never does.
//! [`ul_round`] and [`dl_round`] run one block; [`run_trace`] chains blocks
//! over an AR channel trace and an snr grid.

mod rounds;
mod state;
mod trace;

pub use rounds::{dl_round, ul_round, DlOutcome, Mode, UlOutcome};
pub use state::{BackhaulConfig, BsState, CsiRow, Decoder};
pub use trace::{
    run_trace, BlockRecord, EventKind, FeedbackEvent, FeedbackPolicy, Link, Scenario, SimTrace,
};

use serde::{Deserialize, Serialize};

use crate::engine::IntegrationEngine;
use crate::error::{check_positive, Result};
use crate::inputs::InputSpec;
use crate::optimizer::{IterationSchedule, Normalization};
use crate::power::Budgets;

/// How the uplink round picks the powers of each MAC candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PowerPolicy {
    /// Both users at their budgets.
    #[default]
    Budget,
    /// Box-constrained maximization of the MAC rate.
    Optimized,
    /// Priced fixed point with the given prices.
    Priced { lambda: [f64; 2] },
}

/// Everything the rounds need besides the channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub inputs: [InputSpec; 2],
    pub budgets: Budgets,
    pub policy: PowerPolicy,
    /// Precoder prices of the downlink fixed point.
    pub nu: [f64; 2],
    pub normalization: Normalization,
    pub schedule: IterationSchedule,
    pub engine: IntegrationEngine,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            inputs: [InputSpec::Bpsk, InputSpec::Bpsk],
            budgets: Budgets::default(),
            policy: PowerPolicy::default(),
            nu: [1e-3, 1e-3],
            normalization: Normalization::Cap,
            schedule: IterationSchedule::default(),
            engine: IntegrationEngine::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.engine.validate()?;
        check_positive("nu1", self.nu[0])?;
        check_positive("nu2", self.nu[1])?;
        if let PowerPolicy::Priced { lambda } = self.policy {
            check_positive("lambda1", lambda[0])?;
            check_positive("lambda2", lambda[1])?;
        }
        Ok(())
    }
}
