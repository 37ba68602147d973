//! Nonparametric group-time treatment-effect estimators.
//!
//! The target is the conditional group-time average treatment effect
//! `ATT_r(g, t)`: the average effect at time `t`, within stratum `r`, for
//! units that first adopted at `g`. Two plug-in estimators are provided:
//!
//! - [`did_estimator`] — the within-stratum double difference comparing the
//!   `g` cohort against not-yet-treated cohorts between a pre-period `t*`
//!   and `t`; unbiased under parallel trends across cohorts within the
//!   stratum.
//! - [`triple_diff_estimator`] — subtracts from that double difference the
//!   matching placebo double difference taken in another stratum `r'`,
//!   restricted to units still under control in `r'` at `t`; this removes a
//!   parallel-trends violation that is common across strata.
//!
//! Researcher-weighted aggregation of a set of group-time effects is
//! provided by [`aggregate_atts`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, TreatmentSchedule};
use crate::Scalar;

/// Which estimator produced a [`GroupTimeEffect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorTag {
    /// Double difference under parallel trends.
    Prop1,
    /// Triple difference under a constant violation of parallel trends.
    Prop2,
    /// Counterfactual imputation.
    Imputation,
}

/// An estimate of `ATT_r(g, t)` with its cohort sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupTimeEffect<F> {
    pub r: usize,
    pub g: usize,
    pub t: usize,
    pub estimate: F,
    pub n_treated: usize,
    pub n_comparison: usize,
    pub estimator: EstimatorTag,
}

/// Choice of not-yet-treated comparison cohorts `g'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComparisonSet {
    /// All cohorts with `g' > t`, including never-treated (default).
    NotYetTreated,
    /// Never-treated series only.
    NeverTreated,
    /// An explicit set of initiation times; each must exceed `t`.
    Explicit(Vec<usize>),
}

impl ComparisonSet {
    /// Whether a series with initiation time `g_series` is in the comparison
    /// set when evaluating at time `t`.
    fn admits(&self, g_series: usize, t: usize, never: usize) -> Result<bool> {
        match self {
            ComparisonSet::NotYetTreated => Ok(g_series > t),
            ComparisonSet::NeverTreated => Ok(g_series >= never),
            ComparisonSet::Explicit(set) => {
                for &gp in set {
                    if gp <= t {
                        return Err(Error::InvalidWindow(format!(
                            "comparison cohort g'={gp} is treated by t={t}"
                        )));
                    }
                }
                Ok(set.contains(&g_series))
            }
        }
    }
}

fn check_window(g: usize, t: usize, t_star: usize, never: usize) -> Result<()> {
    if g >= never {
        return Err(Error::InvalidWindow(format!(
            "cohort g={g} is the never-treated sentinel"
        )));
    }
    if t < g {
        return Err(Error::InvalidWindow(format!("need g <= t, got g={g}, t={t}")));
    }
    if t_star >= g {
        return Err(Error::InvalidWindow(format!(
            "anchor t*={t_star} must precede g={g}"
        )));
    }
    Ok(())
}

/// Mean of `Y_srt - Y_srt*` over a unit set within stratum `r`.
fn mean_change<F: Scalar>(
    panel: &PanelDataset<F>,
    units: &[usize],
    r: usize,
    t: usize,
    t_star: usize,
) -> Result<F> {
    let mut acc = F::zero();
    for &s in units {
        if !panel.is_present(s, r, t) || !panel.is_present(s, r, t_star) {
            return Err(Error::UnbalancedPanel(format!(
                "cells for series (s={s}, r={r}) missing at t={t} or t*={t_star}"
            )));
        }
        acc += panel.y(s, r, t) - panel.y(s, r, t_star);
    }
    Ok(acc / F::from_count(units.len()))
}

/// Double-difference estimator of `ATT_r(g, t)`.
///
/// Compares the outcome change from `t_star` to `t` of the stratum-`r`
/// cohort that adopted at `g` against the same change for comparison
/// cohorts still untreated at `t`. All indices are zero-based; `t_star`
/// must precede `g` and every comparison cohort must exceed `t`.
pub fn did_estimator<F: Scalar>(
    panel: &PanelDataset<F>,
    schedule: &TreatmentSchedule,
    r: usize,
    g: usize,
    t: usize,
    t_star: usize,
    comparison: &ComparisonSet,
) -> Result<GroupTimeEffect<F>> {
    check_window(g, t, t_star, schedule.never())?;
    let ss = panel.s_count();
    let treated: Vec<usize> = (0..ss).filter(|&s| schedule.g(s, r) == g).collect();
    if treated.is_empty() {
        return Err(Error::EmptyCohort(format!(
            "no series in stratum index {r} with g={g}"
        )));
    }
    let mut comparison_units = Vec::new();
    for s in 0..ss {
        if comparison.admits(schedule.g(s, r), t, schedule.never())? {
            comparison_units.push(s);
        }
    }
    if comparison_units.is_empty() {
        return Err(Error::EmptyCohort(format!(
            "no comparison series in stratum index {r} untreated at t={t}"
        )));
    }
    let estimate = mean_change(panel, &treated, r, t, t_star)?
        - mean_change(panel, &comparison_units, r, t, t_star)?;
    Ok(GroupTimeEffect {
        r,
        g,
        t,
        estimate,
        n_treated: treated.len(),
        n_comparison: comparison_units.len(),
        estimator: EstimatorTag::Prop1,
    })
}

/// The placebo double difference in stratum `r_prime` for the unit sets of a
/// primary comparison, restricted to units under control in `r_prime` at `t`.
/// Returns the value and the surviving cohort sizes.
fn placebo_did<F: Scalar>(
    panel: &PanelDataset<F>,
    schedule: &TreatmentSchedule,
    r_prime: usize,
    treated: &[usize],
    comparison_units: &[usize],
    t: usize,
    t_star: usize,
) -> Result<(F, usize, usize)> {
    let keep = |units: &[usize]| -> Vec<usize> {
        units
            .iter()
            .copied()
            .filter(|&s| schedule.g(s, r_prime) > t)
            .collect()
    };
    let placebo_treated = keep(treated);
    let placebo_comparison = keep(comparison_units);
    if placebo_treated.is_empty() || placebo_comparison.is_empty() {
        return Err(Error::EmptyPlaceboCohort(format!(
            "no units under control in stratum index {r_prime} at t={t}"
        )));
    }
    let value = mean_change(panel, &placebo_treated, r_prime, t, t_star)?
        - mean_change(panel, &placebo_comparison, r_prime, t, t_star)?;
    Ok((value, placebo_treated.len(), placebo_comparison.len()))
}

/// Triple-difference estimator of `ATT_r(g, t)`.
///
/// Subtracts from the [`did_estimator`] value the matching placebo double
/// difference in stratum `r_prime` (same unit sets, restricted to units with
/// `G_{s r'} > t`, so every placebo observation is under control). With
/// `r_prime = None` the placebo is averaged with equal weights over every
/// stratum other than `r` in which both restricted unit sets are non-empty —
/// a default, not a prescription; any single eligible stratum is equally
/// valid under a constant violation of parallel trends.
#[allow(clippy::too_many_arguments)]
pub fn triple_diff_estimator<F: Scalar>(
    panel: &PanelDataset<F>,
    schedule: &TreatmentSchedule,
    r: usize,
    r_prime: Option<usize>,
    g: usize,
    t: usize,
    t_star: usize,
    comparison: &ComparisonSet,
) -> Result<GroupTimeEffect<F>> {
    let primary = did_estimator(panel, schedule, r, g, t, t_star, comparison)?;
    let ss = panel.s_count();
    let treated: Vec<usize> = (0..ss).filter(|&s| schedule.g(s, r) == g).collect();
    let mut comparison_units = Vec::new();
    for s in 0..ss {
        if comparison.admits(schedule.g(s, r), t, schedule.never())? {
            comparison_units.push(s);
        }
    }
    let placebo = match r_prime {
        Some(rp) => {
            if rp == r {
                return Err(Error::InvalidWindow(format!(
                    "placebo stratum must differ from primary stratum {r}"
                )));
            }
            placebo_did(panel, schedule, rp, &treated, &comparison_units, t, t_star)?.0
        }
        None => {
            let mut values = Vec::new();
            for rp in 0..panel.r_count() {
                if rp == r {
                    continue;
                }
                if let Ok((v, _, _)) =
                    placebo_did(panel, schedule, rp, &treated, &comparison_units, t, t_star)
                {
                    values.push(v);
                }
            }
            if values.is_empty() {
                return Err(Error::EmptyPlaceboCohort(format!(
                    "no stratum offers an all-control placebo for (r={r}, g={g}, t={t})"
                )));
            }
            values.iter().copied().sum::<F>() / F::from_count(values.len())
        }
    };
    Ok(GroupTimeEffect {
        estimate: primary.estimate - placebo,
        estimator: EstimatorTag::Prop2,
        ..primary
    })
}

/// Researcher weighting for [`aggregate_atts`].
#[derive(Debug, Clone, PartialEq)]
pub enum Weighting<F> {
    /// Equal weight on every effect.
    Uniform,
    /// Weight proportional to each effect's treated-cohort size.
    CohortSize,
    /// Explicit normalized weights keyed by `(r, g, t)`.
    Table(BTreeMap<(usize, usize, usize), F>),
}

/// Weighted average of group-time effects.
///
/// Explicit tables must define a weight for every effect and sum to one;
/// uniform and cohort-size weightings are normalized internally.
pub fn aggregate_atts<F: Scalar>(
    effects: &[GroupTimeEffect<F>],
    weighting: &Weighting<F>,
) -> Result<F> {
    if effects.is_empty() {
        return Err(Error::EmptyEffects);
    }
    match weighting {
        Weighting::Uniform => {
            Ok(effects.iter().map(|e| e.estimate).sum::<F>() / F::from_count(effects.len()))
        }
        Weighting::CohortSize => {
            let total: F = effects.iter().map(|e| F::from_count(e.n_treated)).sum();
            Ok(effects
                .iter()
                .map(|e| F::from_count(e.n_treated) * e.estimate)
                .sum::<F>()
                / total)
        }
        Weighting::Table(table) => {
            let mut total = F::zero();
            let mut acc = F::zero();
            for e in effects {
                let w = table
                    .get(&(e.r, e.g, e.t))
                    .copied()
                    .ok_or(Error::MissingWeight { r: e.r, g: e.g, t: e.t })?;
                total += w;
                acc += w * e.estimate;
            }
            if (total - F::one()).abs() > F::from_f64_lossy(1e-8) {
                return Err(Error::UnnormalizedWeights(total.to_f64().unwrap_or(f64::NAN)));
            }
            Ok(acc)
        }
    }
}
