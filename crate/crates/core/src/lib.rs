//! Linear-quadratic control with untrusted disturbance predictions.
//!
//! The crate provides the Riccati machinery ([`riccati`]), the family of
//! trust-weighted controllers ([`controllers`]), closed-loop rollouts for
//! linear systems and the nonlinear cart-pole ([`simulation`]), the
//! evaluation quantities ([`metrics`]), the case-study instances
//! ([`scenarios`]) and a seeded Monte-Carlo sweep runner ([`experiment`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod riccati;
pub mod scenarios;
pub mod simulation;

pub use controllers::{
    lambda_confident_action, offline_optimal_rollout, one_confident_action, zero_confident_action, CausalView,
    Controller, LambdaConfident, OfflineOptimal, PredictionWindow, SelfTuning, SelfTuningState, ThresholdControl,
    ThresholdState, ZeroConfident,
};
pub use error::{Error, Result};
pub use experiment::{emit_csv, emit_trace, run_sweep, run_trace, ExperimentConfig, SweepRow};
pub use riccati::{solve_dare, spectral_radius, DareOptions, RiccatiSolution, SystemMatrices};
pub use simulation::{rollout_cartpole, rollout_linear, CartPoleParams, DisturbanceScaling, Rollout};
