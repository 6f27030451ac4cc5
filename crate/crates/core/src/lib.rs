//! Exit-time simulation for one-dimensional linear diffusions
//! `dX = (α(t) X + β(t)) dt + σ(t) dW` and geometric-type diffusions
//! `dX = (α̃ X + β̃ X log X) dt + σ̃ X dW`, by walking on moving spheroids.
//!
//! ```
//! use exitwalk::{CoefficientSet, ExitProblem, replica_rng};
//!
//! let problem = ExitProblem::new(CoefficientSet::brownian(), -1.0, 1.0, 0.0).unwrap();
//! let exit = problem.run_sample(&mut replica_rng(42, 0)).unwrap();
//! assert!(exit.time > 0.0 && exit.position.abs() >= 1.0 - 1e-2);
//! ```

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coeffs;
pub mod error;
pub mod euler;
pub mod gclass;
pub mod harness;
pub mod quadrature;
pub mod spheroid;
pub mod woms;

pub use coeffs::{CoefficientSet, Primitives};
pub use error::{Error, Result};
pub use euler::{euler_exit, EulerConfig, EulerExit};
pub use gclass::{g_solution, run_g, GCoefficientSet, GExitProblem};
pub use harness::{
    cdf_sandwich_check, empirical_cdf, ks_critical, ks_distance, replica_rng, sample_many, steps_vs_logeps,
    BoundParams, McReport, SandwichReport, StepsFit,
};
pub use quadrature::{integrate, Tolerance};
pub use spheroid::{Side, Spheroid};
pub use woms::{ExitProblem, ExitSample, WalkState};
