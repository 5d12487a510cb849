//! Training and evaluation of human/algorithm decision teams from logged
//! bandit feedback.
//!
//! Historical decisions were made by human decision-makers; only the reward of
//! the action actually taken is observed. This crate learns, from such logs:
//!
//! - a policy over actions, via truncated inverse-propensity-scored reward
//!   maximization with an optional reward baseline,
//! - a router that decides per instance whether the policy or a human expert
//!   should make the call (optionally *which* expert, when experts differ),
//! - both together, either sequentially (two-stage) or jointly.
//!
//! Everything is deterministic given a seed: networks are trained with a
//! hand-rolled dense kernel and Adam, data and simulated experts are generated
//! from explicit RNG streams, and evaluation replays bit-identically.
//!
//! Module map:
//!
//! - [`nn`] — dense feed-forward networks, manual backprop, Adam.
//! - [`data`] — multi-label datasets, LIBSVM parsing, synthetic generators,
//!   splits, standardization.
//! - [`sim`] — simulated human decision-makers, expert pools, log generation.
//! - [`propensity`] — behavior-policy and expert-assignment estimation.
//! - [`objective`] — the IPS, collaboration and personalized objectives with
//!   analytic gradients.
//! - [`train`] — end-to-end training procedures for the five system kinds.
//! - [`eval`] — deterministic deployment evaluation and summaries.

pub mod data;
pub mod eval;
pub mod nn;
pub mod objective;
pub mod propensity;
pub mod seeds;
pub mod sim;
pub mod train;

pub use data::{MultiLabelDataset, SplitSpec, Standardizer};
pub use eval::{DeploymentResult, Summary};
pub use nn::{Activation, AdamConfig, AdamState, DenseNet, Gradient, Head};
pub use objective::{ObjectiveConfig, PropensitySource};
pub use propensity::{AssignmentMode, BehaviorConditioning, PropensityEstimates};
pub use sim::{BanditLog, Expert, ExpertBehavior, ExpertPool, LogRecord};
pub use train::{SystemKind, TrainConfig, TrainedSystem};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input shape mismatch: {0}")]
    InputShape(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
