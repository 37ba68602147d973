//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by panel construction, estimation and inference.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Two input rows share the same `(s, r, t)` key.
    #[error("DuplicateCell: duplicate cell at (s={s}, r={r}, t={t})")]
    DuplicateCell { s: i64, r: i64, t: i64 },

    /// A treatment value outside {0, 1} was supplied.
    #[error("NonBinaryTreatment: d = {value} at (s={s}, r={r}, t={t})")]
    NonBinaryTreatment { s: i64, r: i64, t: i64, value: f64 },

    /// No input rows.
    #[error("EmptyInput: no cells supplied")]
    EmptyInput,

    /// Rows within one `(s, r, t)` cell disagree on treatment status.
    #[error("MixedTreatmentInCell: mixed d within cell (s={s}, r={r}, t={t})")]
    MixedTreatmentInCell { s: i64, r: i64, t: i64 },

    /// A 1 -> 0 transition in a treatment series.
    #[error("TreatmentReversal: series (s={s}, r={r}) reverts from treated to control at t={t}")]
    TreatmentReversal { s: i64, r: i64, t: i64 },

    /// A series is treated in its first observed period.
    #[error("TreatedAtBaseline: series (s={s}, r={r}) is treated at its first period")]
    TreatedAtBaseline { s: i64, r: i64 },

    /// Operation requires a fully balanced panel.
    #[error("UnbalancedPanel: {0}")]
    UnbalancedPanel(String),

    /// Residualized treatment has (numerically) zero variation.
    #[error("NoResidualTreatmentVariation: collinear design, residual treatment sum of squares = {0}")]
    NoResidualTreatmentVariation(f64),

    /// Dummy-variable design matrix cannot identify the treatment coefficient.
    #[error("SingularDesign: {0}")]
    SingularDesign(String),

    /// Iterative solver hit its sweep cap before converging.
    #[error("NonConvergence: no convergence after {sweeps} sweeps (last change {change})")]
    NonConvergence { sweeps: usize, change: f64 },

    /// A prediction needs a fixed-effect group absent from the fitting subset.
    #[error("UnanchoredPrediction: group(s) for cell (s={s}, r={r}, t={t}) absent from fitting subset")]
    UnanchoredPrediction { s: usize, r: usize, t: usize },

    /// A required treated or comparison cohort is empty.
    #[error("EmptyCohort: {0}")]
    EmptyCohort(String),

    /// Violated `g <= t`, `t* < g` or `g' > t` window restriction.
    #[error("InvalidWindow: {0}")]
    InvalidWindow(String),

    /// No unit survives the placebo-stratum control restriction.
    #[error("EmptyPlaceboCohort: {0}")]
    EmptyPlaceboCohort(String),

    /// Aggregation weights missing for an effect.
    #[error("MissingWeight: no weight for (r={r}, g={g}, t={t})")]
    MissingWeight { r: usize, g: usize, t: usize },

    /// Aggregation weights do not sum to one.
    #[error("UnnormalizedWeights: weights sum to {0}")]
    UnnormalizedWeights(f64),

    /// No control cells to fit the imputation model on.
    #[error("NoControls: every present cell is treated")]
    NoControls,

    /// No imputed effects to aggregate.
    #[error("EmptyEffects: no cell effects supplied")]
    EmptyEffects,

    /// Placebo lag leaves nothing to fit or predict.
    #[error("InsufficientPretreatmentData: {0}")]
    InsufficientPretreatmentData(String),

    /// Bootstrap needs at least two clusters per resampled dimension.
    #[error("TooFewClusters: {0} cluster(s)")]
    TooFewClusters(usize),

    /// Every bootstrap draw failed.
    #[error("AllDrawsFailed: all {0} bootstrap draws failed")]
    AllDrawsFailed(usize),

    /// Decomposition normalizer is (numerically) zero.
    #[error("DegenerateDesign: omega = {0}")]
    DegenerateDesign(f64),

    /// Term enumeration would exceed the configured tuple cap.
    #[error("EnumerationCapExceeded: {needed} tuples exceed cap {cap}; raise the cap to proceed")]
    EnumerationCapExceeded { needed: u64, cap: u64 },

    /// Unrecognized named adoption design.
    #[error("UnknownDesign: {0:?}")]
    UnknownDesign(String),

    /// Malformed generator or run configuration.
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    /// Malformed CSV input.
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors that indicate bad user input rather than a
    /// degenerate design or an internal failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DuplicateCell { .. }
                | Error::NonBinaryTreatment { .. }
                | Error::EmptyInput
                | Error::MixedTreatmentInCell { .. }
                | Error::TreatmentReversal { .. }
                | Error::TreatedAtBaseline { .. }
                | Error::UnknownDesign(_)
                | Error::InvalidConfig(_)
                | Error::InvalidInput(_)
        )
    }
}
