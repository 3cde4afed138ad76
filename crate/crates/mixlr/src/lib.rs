//! Mixed linear regression without a generative model: gradient
//! alternating minimization for the min-loss and gradient EM for the
//! soft-min loss, plus the geometric quantities, convergence diagnostics,
//! and generalization probes that characterize when and how fast the two
//! solvers contract toward the population loss minimizers.
//!
//! The guide in `book/` walks through each concept with runnable snippets;
//! the `mixlr` binary exposes the experiment harness.

pub mod datagen;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod generalization;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod params;
pub mod rng;
pub mod solvers;

pub mod config;
pub mod experiment;
pub mod records;

pub use dataset::{Dataset, GroundTruth};
pub use error::{Error, Result};
pub use losses::{LossKind, SoftminConfig, HARD_MIN};
pub use params::{param_distance, ParamDistance, ParameterSet};
pub use rng::RngStream;
pub use solvers::{SolverConfig, SolverKind, SplitMode, Trajectory};
