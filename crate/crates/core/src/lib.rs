//! Low-rank trace regression: measurement ensembles, nuclear-norm and
//! factored estimators, cross-validation, and the quantities that enter the
//! error bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod crossval;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{Mat, NormKind, SvdFactors};
pub use sampling::{Dataset, EnsembleConstants, EnsembleKind, EnsembleSpec, Measurement, XiMode};
pub use solvers::{Estimate, Estimator, Method, SolverConfig, StepMode};
pub use crossval::{CvResult, FoldPlan};
pub use theory::{CalibrationReport, ErrorBound, RademacherSketch, RecoveryThreshold, RscProbeReport};
