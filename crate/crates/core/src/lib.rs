//! Robust Lee-Carter mortality model estimation.
//!
//! The Lee-Carter model describes log central mortality rates as the
//! bilinear form `y[x,t] = a_x + b_x * k_t + noise`. This crate estimates
//! `(a, b, k)` three ways:
//!
//! - [`gaussian::fit_svd`] — the classic closed-form SVD/PCA estimator,
//!   together with its probabilistic-PCA twin
//!   [`gaussian::fit_ppca_closed_form`];
//! - [`poisson::fit_poisson_glm`] — the Poisson bilinear GLM fitted by
//!   cyclic one-dimensional Newton (IRLS) updates;
//! - [`tppca::fit_tppca`] — a multivariate t-distribution PPCA fitted by
//!   an ECM algorithm. The heavy-tailed marginal downweights outlier
//!   years (pandemics, wars) so `b` stays close to the outlier-free
//!   principal component.
//!
//! Supporting machinery: second-stage re-estimation of `k_t` by matching
//! observed total deaths ([`matching`]), Mahalanobis/F outlier scoring,
//! residual and deviance bootstraps ([`bootstrap`]), and a
//! hypothetical-pandemic experiment grid ([`simulation`]).
//!
//! The crate is `no_std`-compatible (`alloc` required); disable default
//! features and enable `libm` for a `no_std` build. File formats and the
//! CLI live in the companion `leecarter-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub(crate) mod fmath;

pub mod bootstrap;
pub mod dataset;
pub mod gaussian;
pub mod matching;
pub mod matrix;
pub mod numerics;
pub mod pipeline;
pub mod poisson;
pub mod rng;
pub mod simulation;
pub mod tppca;

use alloc::string::String;
use core::fmt;

/// Errors shared across the estimation modules.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument(&'static str),
    /// Matrix/vector dimensions do not agree.
    DimensionMismatch(&'static str),
    /// The deaths/exposures panel does not cover the full age × year grid.
    NonRectangularPanel(String),
    /// An exposure cell is zero or negative.
    NonPositiveExposure { age: u32, year: i32 },
    /// A death cell is negative.
    NegativeDeaths { age: u32, year: i32 },
    /// Root bracketing failed: no sign change within the expansion bound.
    NoSignChange,
    /// An iterative routine hit its iteration cap.
    MaxIterExceeded(&'static str),
    /// Estimation failed to converge within the configured iteration budget.
    NoConvergence { iterations: usize },
    /// Input is structurally degenerate for the requested operation.
    Degenerate(&'static str),
    /// A requested year is not in the panel.
    YearOutsidePanel(i32),
    /// A requested age (or age group bound) is not in the panel.
    AgeOutsidePanel(u32),
    /// Per-year failure in a vectorized operation, with the offending year.
    YearFailure { year: i32, source: &'static str },
    /// Every bootstrap replication failed.
    AllReplicationsFailed,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::NonRectangularPanel(msg) => write!(f, "non-rectangular panel: {msg}"),
            Error::NonPositiveExposure { age, year } => {
                write!(f, "nonpositive exposure at age {age}, year {year}")
            }
            Error::NegativeDeaths { age, year } => {
                write!(f, "negative deaths at age {age}, year {year}")
            }
            Error::NoSignChange => write!(f, "no sign change found within expansion bound"),
            Error::MaxIterExceeded(what) => write!(f, "max iterations exceeded in {what}"),
            Error::NoConvergence { iterations } => {
                write!(f, "failed to converge within {iterations} iterations")
            }
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::YearOutsidePanel(y) => write!(f, "year {y} outside panel"),
            Error::AgeOutsidePanel(a) => write!(f, "age {a} outside panel"),
            Error::YearFailure { year, source } => {
                write!(f, "year {year}: {source}")
            }
            Error::AllReplicationsFailed => write!(f, "all bootstrap replications failed"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
