//! Two-cell limited-cooperation design toolkit.
//!
//! Base stations share channel estimates (never data) and pick per-user
//! powers or precoders that maximize the weaker of the two multiple access
//! channels they form. The crate provides:
//!
//! - [`channel`]: Rayleigh block fading and AR prediction with its noise penalty.
//! - [`inputs`], [`estimation`], [`engine`]: input laws, conditional-mean
//!   estimates and the error covariances behind the I-MMSE relations.
//! - [`info`]: mutual information for Gaussian, discrete and mixed inputs,
//!   and the power gradients expressed through the error covariances.
//! - [`optimizer`]: closed-form and fixed-point power and precoder design,
//!   multiplier tuning, KKT certificates and the min-max selection rule.
//! - [`sim`]: uplink and downlink rounds between two base stations and
//!   seeded multi-block traces.

pub mod channel;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod ids;
pub mod info;
pub mod inputs;
pub mod optimizer;
pub mod power;
pub mod seed;
pub mod sim;
pub mod table;

pub use num_complex::Complex64 as C64;

pub use channel::{
    ar_step, ar_trace, predict_block, sample_channel, ArModel, ChannelMatrix, EstimatedChannel,
    FrameConfig, SignConvention,
};
pub use engine::{AccuracyWarning, IntegrationEngine};
pub use error::{Error, Result};
pub use estimation::{
    mmse_matrix, posterior_mean, scalar_mi, scalar_mmse, ErrorCovariance, MmseMatrix,
};
pub use ids::{Mac, User};
pub use info::{
    grad_power_conditional, grad_power_int_noise, grad_power_joint, mi_conditional,
    mi_discrete_sum, mi_gaussian_sum, mi_interference_as_noise, mi_mixed, mi_sum, GradientPair,
    InterferenceModel, RateValue, Unit,
};
pub use inputs::{Constellation, InputSpec};
pub use optimizer::{
    budgeted_power, fixed_point_power, fixed_point_precoder, gaussian_power, mimo_precoder,
    select_design, tune_multipliers, CMat, Design, DesignCandidate, DesignOutcome, IterationReport,
    IterationSchedule, MimoChannel, Multipliers, Normalization, PowerSolution, PrecoderPair,
    PrecoderSolution, SinglePrecoder, StepSchedule, TuneStatus, TunedMultipliers,
};
pub use power::{Budgets, PowerProfile};
pub use sim::{
    dl_round, run_trace, ul_round, BackhaulConfig, BsState, CsiRow, DlOutcome, Link, Mode,
    PowerPolicy, Scenario, SimTrace, SolverConfig, UlOutcome,
};
pub use table::{Cell, Table};
