//! Treatment-effect estimation for staggered triple-differences panels.
//!
//! The crate works on a three-dimensional grid of cells indexed by a unit
//! grouping `s`, a stratum grouping `r` and a time period `t`. It provides:
//!
//! - [`panel`] — ingestion, validation and aggregation of `(s, r, t)` panels
//!   and derivation of per-series treatment initiation times;
//! - [`regression`] — the three-way fixed-effects regression coefficient via
//!   triple demeaning, via a dense dummy-variable solve, and via a general
//!   weighted alternating-projections solver usable on cell subsets;
//! - [`decomposition`] — enumeration and classification of the 2x2x2
//!   comparisons that make up the regression coefficient, with per-category
//!   weight accounting;
//! - [`identification`] — nonparametric plug-in estimators for conditional
//!   group-time average treatment effects and researcher-weighted aggregation;
//! - [`imputation`] — the heterogeneity-robust counterfactual imputation
//!   estimator with event-study and held-out placebo diagnostics;
//! - [`inference`] — one-way Bayesian cluster bootstrap and two-way
//!   pigeonhole bootstrap standard errors;
//! - [`simulate`] — seed-deterministic data generators with known ground
//!   truth.
//!
//! Core numerics are generic over the scalar type through [`Scalar`];
//! concrete `f64` aliases are exported at the crate root.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

pub mod decomposition;
pub mod error;
pub mod identification;
pub mod imputation;
pub mod inference;
pub mod panel;
pub mod regression;
pub mod simulate;

pub use error::{Error, Result};

/// Scalar type for panel outcomes and estimator arithmetic.
///
/// Implemented for `f32` and `f64`. The default tolerances in
/// [`regression::FitOptions`] assume `f64`; `f32` callers should loosen them.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    /// Lossless-enough conversion from `f64` for constants and RNG draws.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Default-precision panel.
pub type Panel = panel::PanelDataset<f64>;
/// Default-precision fixed-effects fit.
pub type Fit = regression::FeFit<f64>;
/// Default-precision decomposition report.
pub type Report = decomposition::DecompositionReport<f64>;
/// Default-precision group-time effect.
pub type Effect = identification::GroupTimeEffect<f64>;
/// Default-precision imputed cell effect.
pub type ImputedEffect = imputation::CellEffect<f64>;
/// Default-precision bootstrap summary.
pub type Summary = inference::BootstrapSummary<f64>;
