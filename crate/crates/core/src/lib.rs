//! Minimum-error discrimination of quantum states that are known only
//! through finite calibration data.
//!
//! The crate couples maximum-likelihood estimation of the unknown states
//! with the design of the discrimination POVM: both are refined together by
//! a multiplicative fixed-point iteration ([`mlse`]). Exact two-state
//! Helstrom baselines live in [`helstrom`], calibration and communication
//! sampling in [`calibsim`], and sweeps, problem files and the CLI plumbing
//! in [`runner`].

pub mod calibsim;
pub mod error;
pub mod helstrom;
pub mod mlse;
pub mod qmat;
pub mod runner;
pub mod states;

pub use error::{Error, Result};
pub use qmat::{HermitianOperator, Spectrum, C64};
pub use states::{Axis, DensityMatrix, PovmSet, Sign, StateParams};
