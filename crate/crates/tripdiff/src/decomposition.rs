//! Decomposition of the triple-differences coefficient into 2x2x2 terms.
//!
//! The regression coefficient can be rewritten as a normalized sum, over all
//! ordered tuples `(s, s', t, t', r, r' != r)` with a treated anchor cell
//! `(s, r, t)`, of the difference between a "primary" difference-in-
//! differences in stratum `r` and a matched "placebo" difference-in-
//! differences in stratum `r'`. Each tuple's validity is a pure function of
//! the treatment status of the eight cells it references: a valid primary
//! compares the treated anchor against three controls; a valid placebo uses
//! four controls; everything else mixes treated observations into a
//! comparison that is only effect-free under constant effects. This module
//! enumerates the tuples, classifies each of the 256 possible treatment
//! patterns, reports how much estimator weight each category carries, and
//! verifies that the categorized sum divided by the normalizing constant
//! `omega` reconstructs the regression coefficient exactly.
//!
//! Terms whose indicator product is zero ("vanishing") and index-diagonal
//! tuples (`s' = s` or `t' = t`, whose comparison is identically zero) are
//! skipped but counted for auditability. Patterns that would require a
//! treated-then-control sequence within some `(unit, stratum)` series cannot
//! occur under staggered adoption and are classified separately.

use std::collections::BTreeMap;
use std::io;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::{derive_schedule, PanelDataset, TreatmentSchedule};
use crate::regression::tdr_estimate;
use crate::Scalar;

/// Default cap on the number of enumerated tuples.
pub const DEFAULT_TUPLE_CAP: u64 = 100_000_000;

/// The five invalid-placebo treatment patterns.
///
/// Each mixes an even, positive number of treated observations into the
/// placebo comparison, so the comparison is only bias-identifying when
/// effects are constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InvalidPlaceboKind {
    /// Both units treated at `t'`, control at `t`: pattern `(0,0,1,1)`.
    TwoTreatedAtTPrime,
    /// Unit `s'` treated at both periods, `s` control at both: `(0,1,0,1)`.
    SecondUnitAlwaysTreated,
    /// All four placebo observations treated: `(1,1,1,1)`.
    AllFourTreated,
    /// Both units treated at `t`, control at `t'`: `(1,1,0,0)`.
    TwoTreatedAtT,
    /// Unit `s` treated at both periods, `s'` control at both: `(1,0,1,0)`.
    FirstUnitAlwaysTreated,
}

impl InvalidPlaceboKind {
    fn label(self) -> &'static str {
        match self {
            InvalidPlaceboKind::TwoTreatedAtTPrime => "two_treated_at_t2",
            InvalidPlaceboKind::SecondUnitAlwaysTreated => "unit_s2_always_treated",
            InvalidPlaceboKind::AllFourTreated => "all_four_treated",
            InvalidPlaceboKind::TwoTreatedAtT => "two_treated_at_t",
            InvalidPlaceboKind::FirstUnitAlwaysTreated => "unit_s_always_treated",
        }
    }
}

/// Validity category of one 2x2x2 term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermCategory {
    /// Treated anchor against three controls; placebo all-control.
    ValidPrimaryValidPlacebo,
    /// Valid primary, contaminated placebo.
    ValidPrimaryInvalidPlacebo(InvalidPlaceboKind),
    /// Primary second difference taken between two treated observations;
    /// placebo all-control.
    InvalidPrimaryValidPlacebo,
    /// Both comparisons contaminated.
    InvalidPrimaryInvalidPlacebo(InvalidPlaceboKind),
    /// Valid primary whose placebo has an odd number of treated cells and
    /// acts as a primary comparison elsewhere in the sum.
    FlippedDidValidPrimary,
    /// Invalid primary matched with an odd-treated placebo.
    FlippedDidInvalidPrimary,
    /// Indicator product is zero; the tuple contributes nothing.
    Vanishing,
    /// Pattern requires a treated-then-control sequence in some series and
    /// cannot occur under staggered adoption.
    RuledOutByStaggering,
}

impl TermCategory {
    /// Stable snake-case label used in reports and term dumps.
    pub fn label(self) -> String {
        match self {
            TermCategory::ValidPrimaryValidPlacebo => "valid_primary_valid_placebo".into(),
            TermCategory::ValidPrimaryInvalidPlacebo(k) => {
                format!("valid_primary_invalid_placebo_{}", k.label())
            }
            TermCategory::InvalidPrimaryValidPlacebo => "invalid_primary_valid_placebo".into(),
            TermCategory::InvalidPrimaryInvalidPlacebo(k) => {
                format!("invalid_primary_invalid_placebo_{}", k.label())
            }
            TermCategory::FlippedDidValidPrimary => "flipped_did_valid_primary".into(),
            TermCategory::FlippedDidInvalidPrimary => "flipped_did_invalid_primary".into(),
            TermCategory::Vanishing => "vanishing".into(),
            TermCategory::RuledOutByStaggering => "ruled_out_by_staggering".into(),
        }
    }

    /// True for the categories that contribute to the estimator sum.
    pub fn is_kept(self) -> bool {
        !matches!(
            self,
            TermCategory::Vanishing | TermCategory::RuledOutByStaggering
        )
    }

    /// True for the flipped-DiD categories.
    pub fn is_flipped(self) -> bool {
        matches!(
            self,
            TermCategory::FlippedDidValidPrimary | TermCategory::FlippedDidInvalidPrimary
        )
    }
}

/// Classify one 8-bit treatment pattern.
///
/// The pattern order is `(D_srt, D_s'rt, D_srt', D_s'rt' | D_sr't, D_s'r't,
/// D_sr't', D_s'r't')`: primary stratum first, placebo stratum second.
///
/// Staggered adoption is checked first: each of the four `(unit, stratum)`
/// series contributes an ordering constraint between `t` and `t'` (treated
/// at one period and control at the other pins their order), and
/// contradictory constraints mean the pattern can never arise in a verified
/// panel. Remaining patterns are matched against the kept primary-placebo
/// products; everything else has a zero indicator product and vanishes.
pub fn classify_pattern(pattern: [bool; 8]) -> TermCategory {
    // Series at (s,r), (s',r), (s,r'), (s',r') as (status at t, status at t').
    let series = [
        (pattern[0], pattern[2]),
        (pattern[1], pattern[3]),
        (pattern[4], pattern[6]),
        (pattern[5], pattern[7]),
    ];
    let mut t2_before = false;
    let mut t2_after = false;
    for (at_t, at_t2) in series {
        if at_t && !at_t2 {
            t2_before = true;
        }
        if !at_t && at_t2 {
            t2_after = true;
        }
    }
    if t2_before && t2_after {
        return TermCategory::RuledOutByStaggering;
    }

    let primary = (pattern[0], pattern[1], pattern[2], pattern[3]);
    let placebo = (pattern[4], pattern[5], pattern[6], pattern[7]);
    let invalid_placebo = |p: (bool, bool, bool, bool)| -> Option<InvalidPlaceboKind> {
        match p {
            (false, false, true, true) => Some(InvalidPlaceboKind::TwoTreatedAtTPrime),
            (false, true, false, true) => Some(InvalidPlaceboKind::SecondUnitAlwaysTreated),
            (true, true, true, true) => Some(InvalidPlaceboKind::AllFourTreated),
            (true, true, false, false) => Some(InvalidPlaceboKind::TwoTreatedAtT),
            (true, false, true, false) => Some(InvalidPlaceboKind::FirstUnitAlwaysTreated),
            _ => None,
        }
    };
    match primary {
        // Valid primary: treated anchor, three controls.
        (true, false, false, false) => match placebo {
            (false, false, false, false) => TermCategory::ValidPrimaryValidPlacebo,
            (false, true, false, false) | (true, true, true, false) => {
                TermCategory::FlippedDidValidPrimary
            }
            p => match invalid_placebo(p) {
                Some(k) => TermCategory::ValidPrimaryInvalidPlacebo(k),
                None => TermCategory::Vanishing,
            },
        },
        // Invalid primary: second difference between two treated cells.
        (true, false, true, true) => match placebo {
            (false, false, false, false) => TermCategory::InvalidPrimaryValidPlacebo,
            (false, true, true, true) | (false, false, true, false) => {
                TermCategory::FlippedDidInvalidPrimary
            }
            p => match invalid_placebo(p) {
                Some(k) => TermCategory::InvalidPrimaryInvalidPlacebo(k),
                None => TermCategory::Vanishing,
            },
        },
        _ => TermCategory::Vanishing,
    }
}

/// One categorized 2x2x2 comparison with internal (zero-based) indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermRecord<F> {
    pub s: usize,
    pub s2: usize,
    pub t: usize,
    pub t2: usize,
    pub r: usize,
    pub r2: usize,
    /// Treatment status at the eight referenced cells, primary stratum first.
    pub pattern: [bool; 8],
    pub category: TermCategory,
    /// `Y_srt - Y_s'rt - Y_srt' + Y_s'rt'`.
    pub primary_did: F,
    /// The same comparison in stratum `r'`.
    pub placebo_did: F,
    /// `primary_did - placebo_did`.
    pub value: F,
}

/// Counters describing one full enumeration pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EnumerationStats {
    /// Ordered tuples visited (treated anchors times `S * T * (R - 1)`).
    pub tuples_total: u64,
    /// Tuples skipped for `s' = s` or `t' = t` (identically zero).
    pub skipped_diagonal: u64,
    /// Tuples whose indicator product is zero.
    pub vanishing: u64,
    /// Tuples with a staggering-inconsistent pattern (zero on verified
    /// panels; counted defensively).
    pub ruled_out: u64,
    /// Tuples yielded to the consumer.
    pub kept: u64,
}

/// Enumerate every contributing 2x2x2 term, streaming records to `sink`.
///
/// Only tuples in kept categories are yielded; diagonal, vanishing and
/// staggering-ruled-out tuples are counted in the returned stats. Refuses to
/// start when the tuple count exceeds `cap`.
pub fn enumerate_terms<F: Scalar>(
    panel: &PanelDataset<F>,
    schedule: &TreatmentSchedule,
    cap: u64,
    mut sink: impl FnMut(&TermRecord<F>),
) -> Result<EnumerationStats> {
    if !panel.is_balanced() {
        return Err(Error::UnbalancedPanel(
            "decomposition requires a balanced panel".into(),
        ));
    }
    let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
    let anchors: Vec<(usize, usize, usize)> = (0..ss)
        .flat_map(|s| (0..rr).map(move |r| (s, r)))
        .flat_map(|(s, r)| (0..tt).map(move |t| (s, r, t)))
        .filter(|&(s, r, t)| schedule.treated(s, r, t))
        .collect();
    let total = anchors.len() as u64 * ss as u64 * tt as u64 * (rr as u64 - 1);
    if total > cap {
        return Err(Error::EnumerationCapExceeded { needed: total, cap });
    }
    let mut stats = EnumerationStats { tuples_total: total, ..Default::default() };
    for &(s, r, t) in &anchors {
        for s2 in 0..ss {
            for t2 in 0..tt {
                if s2 == s || t2 == t {
                    stats.skipped_diagonal += (rr as u64) - 1;
                    continue;
                }
                for r2 in 0..rr {
                    if r2 == r {
                        continue;
                    }
                    let pattern = [
                        schedule.treated(s, r, t),
                        schedule.treated(s2, r, t),
                        schedule.treated(s, r, t2),
                        schedule.treated(s2, r, t2),
                        schedule.treated(s, r2, t),
                        schedule.treated(s2, r2, t),
                        schedule.treated(s, r2, t2),
                        schedule.treated(s2, r2, t2),
                    ];
                    let category = classify_pattern(pattern);
                    match category {
                        TermCategory::Vanishing => {
                            stats.vanishing += 1;
                            continue;
                        }
                        TermCategory::RuledOutByStaggering => {
                            stats.ruled_out += 1;
                            continue;
                        }
                        _ => {}
                    }
                    let primary_did =
                        panel.y(s, r, t) - panel.y(s2, r, t) - panel.y(s, r, t2)
                            + panel.y(s2, r, t2);
                    let placebo_did =
                        panel.y(s, r2, t) - panel.y(s2, r2, t) - panel.y(s, r2, t2)
                            + panel.y(s2, r2, t2);
                    stats.kept += 1;
                    sink(&TermRecord {
                        s,
                        s2,
                        t,
                        t2,
                        r,
                        r2,
                        pattern,
                        category,
                        primary_did,
                        placebo_did,
                        value: primary_did - placebo_did,
                    });
                }
            }
        }
    }
    Ok(stats)
}

/// Treated-cell counts entering the normalizing constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreatedCounts {
    pub total: u64,
    pub by_sr: Vec<u64>,
    pub by_st: Vec<u64>,
    pub by_rt: Vec<u64>,
    pub by_s: Vec<u64>,
    pub by_r: Vec<u64>,
    pub by_t: Vec<u64>,
}

impl TreatedCounts {
    fn compute<F: Scalar>(panel: &PanelDataset<F>, schedule: &TreatmentSchedule) -> Self {
        let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
        let mut c = TreatedCounts {
            total: 0,
            by_sr: vec![0; ss * rr],
            by_st: vec![0; ss * tt],
            by_rt: vec![0; rr * tt],
            by_s: vec![0; ss],
            by_r: vec![0; rr],
            by_t: vec![0; tt],
        };
        for s in 0..ss {
            for r in 0..rr {
                for t in 0..tt {
                    if schedule.treated(s, r, t) {
                        c.total += 1;
                        c.by_sr[s * rr + r] += 1;
                        c.by_st[s * tt + t] += 1;
                        c.by_rt[r * tt + t] += 1;
                        c.by_s[s] += 1;
                        c.by_r[r] += 1;
                        c.by_t[t] += 1;
                    }
                }
            }
        }
        c
    }

    fn omega_exact(&self, ss: usize, rr: usize, tt: usize) -> i128 {
        let sq = |v: &[u64]| -> i128 { v.iter().map(|&x| (x as i128) * (x as i128)).sum() };
        let (s, r, t) = (ss as i128, rr as i128, tt as i128);
        s * r * t * self.total as i128
            - s * r * sq(&self.by_sr)
            - s * t * sq(&self.by_st)
            - r * t * sq(&self.by_rt)
            + t * sq(&self.by_t)
            + r * sq(&self.by_r)
            + s * sq(&self.by_s)
            - (self.total as i128) * (self.total as i128)
    }
}

/// The normalizing constant `omega`, computed from treated-cell counts.
///
/// Equals `S * R * T` times the residual treatment sum of squares.
pub fn normalizer<F: Scalar>(
    schedule: &TreatmentSchedule,
    panel: &PanelDataset<F>,
) -> Result<F> {
    if !panel.is_balanced() {
        return Err(Error::UnbalancedPanel(
            "normalizer requires a balanced panel".into(),
        ));
    }
    let counts = TreatedCounts::compute(panel, schedule);
    let omega = counts.omega_exact(panel.s_count(), panel.r_count(), panel.t_count());
    Ok(F::from_f64_lossy(omega as f64))
}

/// Per-category accounting in a [`DecompositionReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryStat<F> {
    /// Number of contributing tuples.
    pub terms: u64,
    /// Sum of term values.
    pub sum: F,
    /// Summed absolute contribution divided by `omega`.
    pub weight_mass: F,
}

/// Full term-level accounting of the regression coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "F: Serialize")]
pub struct DecompositionReport<F> {
    pub omega: F,
    pub counts: TreatedCounts,
    /// Per-category term counts, value sums and weight masses, keyed by
    /// [`TermCategory::label`].
    pub categories: BTreeMap<String, CategoryStat<F>>,
    /// Categorized sum divided by `omega`.
    pub tau_reconstructed: F,
    /// Coefficient from the triple-demeaning estimator.
    pub tau_regression: F,
    /// Flipped-DiD sums in the alternative "double-counted" 2x2 view
    /// (twice the primary comparison); must match the triple-difference
    /// sums in `categories` per flipped category.
    pub flipped_double_counted: BTreeMap<String, F>,
    pub enumeration: EnumerationStats,
}

impl<F: Scalar> DecompositionReport<F> {
    /// Total weight mass on the invalid and flipped categories.
    pub fn contaminated_mass(&self) -> F {
        self.categories
            .iter()
            .filter(|(label, _)| {
                label.contains("invalid") || label.starts_with("flipped")
            })
            .map(|(_, stat)| stat.weight_mass)
            .sum()
    }

    /// Serialize to pretty JSON.
    pub fn to_json(&self) -> String
    where
        F: Serialize,
    {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Decompose with the default tuple cap.
pub fn decompose<F: Scalar>(panel: &PanelDataset<F>) -> Result<DecompositionReport<F>> {
    decompose_with_cap(panel, DEFAULT_TUPLE_CAP)
}

/// Enumerate, classify and aggregate all 2x2x2 terms of a balanced panel.
pub fn decompose_with_cap<F: Scalar>(
    panel: &PanelDataset<F>,
    cap: u64,
) -> Result<DecompositionReport<F>> {
    let schedule = derive_schedule(panel)?;
    if !panel.is_balanced() {
        return Err(Error::UnbalancedPanel(
            "decomposition requires a balanced panel".into(),
        ));
    }
    let counts = TreatedCounts::compute(panel, &schedule);
    let omega_exact = counts.omega_exact(panel.s_count(), panel.r_count(), panel.t_count());
    if omega_exact <= 0 {
        return Err(Error::DegenerateDesign(omega_exact as f64));
    }
    let omega = F::from_f64_lossy(omega_exact as f64);
    let mut sums: BTreeMap<TermCategory, (u64, F, F)> = BTreeMap::new();
    let mut flipped_double: BTreeMap<TermCategory, F> = BTreeMap::new();
    let two = F::from_f64_lossy(2.0);
    let stats = enumerate_terms(panel, &schedule, cap, |term| {
        let entry = sums
            .entry(term.category)
            .or_insert((0, F::zero(), F::zero()));
        entry.0 += 1;
        entry.1 += term.value;
        entry.2 += term.value.abs();
        if term.category.is_flipped() {
            *flipped_double.entry(term.category).or_insert(F::zero()) +=
                two * term.primary_did;
        }
    })?;
    let total: F = sums.values().map(|&(_, sum, _)| sum).sum();
    let tau_reconstructed = total / omega;
    let tau_regression = tdr_estimate(panel)?;
    let categories = sums
        .into_iter()
        .map(|(cat, (terms, sum, abs_sum))| {
            (cat.label(), CategoryStat { terms, sum, weight_mass: abs_sum / omega })
        })
        .collect();
    let flipped_double_counted = flipped_double
        .into_iter()
        .map(|(cat, sum)| (cat.label(), sum))
        .collect();
    Ok(DecompositionReport {
        omega,
        counts,
        categories,
        tau_reconstructed,
        tau_regression,
        flipped_double_counted,
        enumeration: stats,
    })
}

/// Stream the full term dump as CSV
/// `s,s2,t,t2,r,r2,category,primary_did,placebo_did,value` (external labels).
pub fn write_term_csv<F: Scalar, W: io::Write>(
    panel: &PanelDataset<F>,
    schedule: &TreatmentSchedule,
    cap: u64,
    writer: W,
) -> Result<EnumerationStats> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "s", "s2", "t", "t2", "r", "r2", "category", "primary_did", "placebo_did", "value",
    ])
    .map_err(|e| Error::InvalidInput(format!("csv write: {e}")))?;
    let mut write_err = None;
    let stats = enumerate_terms(panel, schedule, cap, |term| {
        if write_err.is_some() {
            return;
        }
        let rec = [
            panel.s_label(term.s).to_string(),
            panel.s_label(term.s2).to_string(),
            panel.t_label(term.t).to_string(),
            panel.t_label(term.t2).to_string(),
            panel.r_label(term.r).to_string(),
            panel.r_label(term.r2).to_string(),
            term.category.label(),
            format!("{}", term.primary_did),
            format!("{}", term.placebo_did),
            format!("{}", term.value),
        ];
        if let Err(e) = wtr.write_record(&rec) {
            write_err = Some(Error::InvalidInput(format!("csv write: {e}")));
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    wtr.flush()
        .map_err(|e| Error::InvalidInput(format!("csv flush: {e}")))?;
    Ok(stats)
}
