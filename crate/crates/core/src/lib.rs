//! Harvest-timing decisions for batch fermentation when the growth-rate
//! distributions are only partially known.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: ground-truth growth dynamics, process limits, and the
//!   terminality rules that force a harvest.
//! - [`learning`]: normal-inverse-gamma knowledge states, conjugate updates,
//!   Student-t posterior predictives and the inherent/model-risk variance split.
//! - [`reward`]: stage rewards and the survival/control-limit primitives.
//! - [`myopic`]: closed-form one-step-lookahead policies and harvest boundaries.
//! - [`planner`]: Bayesian sparse-sampling lookahead and the online control loop.
//! - [`exact`]: exhaustive backward induction for discrete growth laws.
//! - [`evaluation`]: Monte Carlo comparison of harvesting strategies.
//! - [`campaign`]: multi-batch campaigns with random setup times.
//! - [`config`]: the JSON experiment document shared by the CLI and service.
//!
//! Replication loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results are
//! identical either way because every replication owns a derived random stream.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::type_complexity)]

pub mod campaign;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod learning;
pub mod model;
pub mod myopic;
pub mod par;
pub mod planner;
pub mod reward;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use learning::{Channel, KnowledgeState, PredictiveDist};
pub use model::{
    EconomicParams, GrowthTruth, Observation, PhysicalState, ProcessLimits, TerminalClass,
};
pub use planner::{EpisodeRecord, HyperState, PlannerConfig, RecommendMode, Recommendation, SamplerMode};
pub use reward::Action;
