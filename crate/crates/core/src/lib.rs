//! Lifelong reinforcement learning on linear contextual MDPs.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that is pure
//! computation:
//!
//! - [`linalg`]: dense primitives, the incrementally maintained regularized Gram
//!   matrix ([`GramTracker`]) and ridge regression.
//! - [`env`]: generator and exact dynamic-programming oracle for finite linear
//!   contextual MDPs, representative contexts, design sets and task sequencers.
//! - [`qcqp`]: projected-gradient solver for the value-distillation program.
//! - [`agents`]: Lifelong-LSVI, UCBlvd and its variants behind one [`Agent`] trait.
//! - [`runner`]: the episodic interaction loop with exact per-episode regret.
//! - [`verify`]: empirical checks of the confidence, distillation and optimism
//!   properties against the exact oracle.
//!
//! IO, configuration files and the CLI live in the `lifelong-bench` crate.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod agents;
pub mod env;
mod error;
pub mod linalg;
pub mod qcqp;
pub mod runner;
pub mod verify;

pub use agents::{build_agent, Agent, AgentConfig, Algorithm, BetaSchedule};
pub use env::{
    ContextMode, DesignSet, EnvConfig, LinearCmdp, SequencerMode, TaskContext, TaskSequencer,
};
pub use error::{Error, Result};
pub use linalg::{GramTracker, RidgeEstimate};
pub use qcqp::{DistillationProblem, DistillationSolution, SolverOptions};
pub use runner::{EpisodeRow, RunMetrics, RunSummary};
