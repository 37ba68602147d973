//! Seed-deterministic data-generating processes with exact ground truth.
//!
//! Panels are built from an additive control law plus a treatment effect
//! that depends only on (stratum, cohort, period), so the true group-time
//! effects are known by construction and returned in a [`TruthTable`].
//! A trend-violation switch generates the two regimes the estimators are
//! supposed to distinguish: a drift common to every stratum (correctable by
//! the triple difference) and a stratum-specific drift (not correctable,
//! detectable by the placebo test).
//!
//! All numeric choices without a substantive anchor — fixed-effect
//! distributions, drift shapes, default magnitudes — are artifact decisions
//! of this crate, documented inline.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{derive_schedule, PanelDataset, TreatmentSchedule};

/// Adoption design: an explicit per-(s, r) map or a named construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Adoption {
    /// Row-major `s * R + r` vector of adoption period indices, `1..=T`,
    /// with `T` meaning never treated.
    Explicit { g: Vec<usize> },
    /// One of the named designs understood by [`named_design`].
    Named { design: String },
}

/// Treatment-effect law; must depend on the cell only through (r, g, t) so
/// that group-time average effects are well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EffectLaw {
    Constant { value: f64 },
    /// `slope * (t - g + 1)`: the effect grows linearly in event time and
    /// equals `slope` in the adoption period.
    EventTimeLinear { slope: f64 },
    /// Explicit per-(r, g, t) effects, internal indices. Every treated
    /// (r, g, t) triple must be covered.
    Table { entries: Vec<EffectEntry> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEntry {
    pub r: usize,
    pub g: usize,
    pub t: usize,
    pub tau: f64,
}

fn default_magnitude() -> f64 {
    0.5
}

/// Trend-violation law applied to adopter units.
///
/// Adopters of cohort `g` drift by `magnitude * g * t` relative to
/// never-treated units. Under [`Violation::StratumCommon`] the drift hits
/// the unit in every stratum (the stratum-invariance condition the triple
/// difference relies on holds, so it corrects the drift exactly); under
/// [`Violation::StratumSpecific`] the drift hits only the stratum where the
/// unit adopts (the assumption fails, and for a positive magnitude the
/// held-out placebo average is positive).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    #[default]
    None,
    StratumCommon {
        #[serde(default = "default_magnitude")]
        magnitude: f64,
    },
    StratumSpecific {
        #[serde(default = "default_magnitude")]
        magnitude: f64,
    },
}

/// Noise law for the observed outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Noise {
    #[default]
    None,
    /// Independent Gaussian(0, sd) per cell.
    Iid { sd: f64 },
    /// Per-period shared unit factor plus shared stratum factor plus a small
    /// idiosyncratic term: generates genuine two-way cluster dependence.
    TwoWay { sd_s: f64, sd_r: f64, sd_iid: f64 },
}

/// Full DGP description; deserializable from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub s_count: usize,
    pub r_count: usize,
    pub t_count: usize,
    pub adoption: Adoption,
    pub effect: EffectLaw,
    #[serde(default)]
    pub violation: Violation,
    #[serde(default)]
    pub noise: Noise,
    pub seed: u64,
}

/// Exact ground truth for one generated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    /// `(r, g, t) -> ATT_r(g, t)`, internal indices, treated triples only
    /// (no-anticipation makes every pre-treatment effect zero).
    pub atts: BTreeMap<(usize, usize, usize), f64>,
    /// Uniform-over-treated-cells average effect; `None` when nothing is
    /// treated.
    pub uniform_att: Option<f64>,
    /// The untreated-potential-outcome grid Y(∞), noiseless, in panel index
    /// order.
    pub baseline: Vec<f64>,
}

/// Resolve a named adoption design to a row-major g-vector.
///
/// - `pure-placebo-stratum`: roughly half the units adopt at the second
///   period in the first stratum; every other series is never treated.
/// - `cross-stratum-staggered`: each stratum has a single cohort, but the
///   adopters and the timing differ across strata (unit `s` adopts in
///   stratum `s % R` at internal period `1 + (s % R)`).
/// - `within-stratum-staggered`: every stratum except the last contains
///   multiple cohorts; the last stratum is never treated.
pub fn named_design(name: &str, s_count: usize, r_count: usize, t_count: usize) -> Result<Vec<usize>> {
    let (ss, rr, tt) = (s_count, r_count, t_count);
    if ss < 2 || rr < 2 || tt < 2 {
        return Err(Error::InvalidConfig(format!(
            "named designs need at least 2 units, 2 strata and 2 periods, got {ss}x{rr}x{tt}"
        )));
    }
    let never = tt;
    let mut g = vec![never; ss * rr];
    match name {
        "pure-placebo-stratum" => {
            let adopters = ss.div_ceil(2).min(ss - 1); // keep a within-stratum control
            for s in 0..adopters {
                g[s * rr] = 1;
            }
        }
        "cross-stratum-staggered" => {
            for s in 0..ss {
                let r = s % rr;
                let when = 1 + r;
                if when < tt {
                    g[s * rr + r] = when;
                }
            }
        }
        "within-stratum-staggered" => {
            if tt < 3 {
                return Err(Error::InvalidConfig(
                    "within-stratum-staggered needs at least 3 periods".into(),
                ));
            }
            let adopters = ss.div_ceil(2).min(ss - 1);
            let cohorts = (tt - 1).clamp(2, 3);
            for r in 0..rr - 1 {
                for s in 0..adopters {
                    g[s * rr + r] = 1 + (s + r) % cohorts;
                }
            }
        }
        other => return Err(Error::UnknownDesign(other.to_string())),
    }
    Ok(g)
}

fn resolve_adoption(config: &DgpConfig) -> Result<Vec<usize>> {
    let (ss, rr, tt) = (config.s_count, config.r_count, config.t_count);
    match &config.adoption {
        Adoption::Explicit { g } => {
            if g.len() != ss * rr {
                return Err(Error::InvalidConfig(format!(
                    "adoption map has {} entries, expected {}",
                    g.len(),
                    ss * rr
                )));
            }
            if let Some(&bad) = g.iter().find(|&&x| x < 1 || x > tt) {
                return Err(Error::InvalidConfig(format!(
                    "adoption period {bad} outside 1..={tt}"
                )));
            }
            Ok(g.clone())
        }
        Adoption::Named { design } => named_design(design, ss, rr, tt),
    }
}

fn effect_at(law: &EffectLaw, table: &BTreeMap<(usize, usize, usize), f64>, r: usize, g: usize, t: usize) -> Result<f64> {
    match law {
        EffectLaw::Constant { value } => Ok(*value),
        EffectLaw::EventTimeLinear { slope } => Ok(slope * (t - g + 1) as f64),
        EffectLaw::Table { .. } => table.get(&(r, g, t)).copied().ok_or_else(|| {
            Error::InvalidConfig(format!("effect table misses treated triple (r={r}, g={g}, t={t})"))
        }),
    }
}

/// Generate one panel with its schedule and exact truth table.
pub fn gen_dgp(config: &DgpConfig) -> Result<(PanelDataset<f64>, TreatmentSchedule, TruthTable)> {
    let (ss, rr, tt) = (config.s_count, config.r_count, config.t_count);
    if ss == 0 || rr == 0 || tt == 0 {
        return Err(Error::InvalidConfig("all dimensions must be positive".into()));
    }
    match config.noise {
        Noise::Iid { sd } if sd < 0.0 => {
            return Err(Error::InvalidConfig(format!("negative noise sd {sd}")));
        }
        Noise::TwoWay { sd_s, sd_r, sd_iid } if sd_s < 0.0 || sd_r < 0.0 || sd_iid < 0.0 => {
            return Err(Error::InvalidConfig("negative noise sd".into()));
        }
        _ => {}
    }
    let g = resolve_adoption(config)?;
    let effect_table: BTreeMap<(usize, usize, usize), f64> = match &config.effect {
        EffectLaw::Table { entries } => entries
            .iter()
            .map(|e| ((e.r, e.g, e.t), e.tau))
            .collect(),
        _ => BTreeMap::new(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    // Generic-position fixed effects. The unit-time component is drawn
    // additively separable (u_s + v_t) rather than as a free (s, t) grid:
    // a free grid would itself violate the common-trend structure the
    // stratum-common regime is supposed to satisfy in sample.
    let a_sr: Vec<f64> = (0..ss * rr).map(|_| normal()).collect();
    let u_s: Vec<f64> = (0..ss).map(|_| normal()).collect();
    let v_t: Vec<f64> = (0..tt).map(|_| normal()).collect();
    let c_rt: Vec<f64> = (0..rr * tt).map(|_| normal()).collect();

    // Violation drift per series: magnitude * g for adopters, applied as a
    // linear time trend. Stratum-common drift follows the unit everywhere;
    // stratum-specific drift only hits the stratum where the unit adopts.
    let drift = |s: usize, r: usize| -> f64 {
        match config.violation {
            Violation::None => 0.0,
            Violation::StratumCommon { magnitude } => {
                let g_min = (0..rr).map(|r2| g[s * rr + r2]).min().unwrap();
                if g_min < tt {
                    magnitude * g_min as f64
                } else {
                    0.0
                }
            }
            Violation::StratumSpecific { magnitude } => {
                if g[s * rr + r] < tt {
                    magnitude * g[s * rr + r] as f64
                } else {
                    0.0
                }
            }
        }
    };

    let n = ss * rr * tt;
    let mut baseline = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut d = vec![false; n];
    let mut att_sum = 0.0;
    let mut att_cells = 0usize;
    let mut atts = BTreeMap::new();
    for s in 0..ss {
        for r in 0..rr {
            let lambda = drift(s, r);
            let gg = g[s * rr + r];
            for t in 0..tt {
                let i = (s * rr + r) * tt + t;
                let y_inf = a_sr[s * rr + r] + u_s[s] + v_t[t] + c_rt[r * tt + t]
                    + lambda * t as f64;
                baseline[i] = y_inf;
                let treated = t >= gg;
                d[i] = treated;
                let tau = if treated {
                    let tau = effect_at(&config.effect, &effect_table, r, gg, t)?;
                    atts.insert((r, gg, t), tau);
                    att_sum += tau;
                    att_cells += 1;
                    tau
                } else {
                    0.0
                };
                y[i] = y_inf + tau;
            }
        }
    }

    match config.noise {
        Noise::None => {}
        Noise::Iid { sd } => {
            for v in y.iter_mut() {
                *v += sd * normal();
            }
        }
        Noise::TwoWay { sd_s, sd_r, sd_iid } => {
            let f_st: Vec<f64> = (0..ss * tt).map(|_| sd_s * normal()).collect();
            let h_rt: Vec<f64> = (0..rr * tt).map(|_| sd_r * normal()).collect();
            for s in 0..ss {
                for r in 0..rr {
                    for t in 0..tt {
                        y[(s * rr + r) * tt + t] +=
                            f_st[s * tt + t] + h_rt[r * tt + t] + sd_iid * normal();
                    }
                }
            }
        }
    }

    let panel = PanelDataset::from_grid(
        (1..=ss as i64).collect(),
        (1..=rr as i64).collect(),
        (1..=tt as i64).collect(),
        y,
        d,
    )?;
    let schedule = derive_schedule(&panel)?;
    debug_assert_eq!(schedule.g_vec(), g.as_slice());
    let truth = TruthTable {
        atts,
        uniform_att: (att_cells > 0).then(|| att_sum / att_cells as f64),
        baseline,
    };
    Ok((panel, schedule, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imputation::{att_overall, impute_counterfactuals, AttWeighting};
    use crate::regression::tdr_estimate;

    fn base_config() -> DgpConfig {
        DgpConfig {
            s_count: 6,
            r_count: 3,
            t_count: 6,
            adoption: Adoption::Named { design: "cross-stratum-staggered".into() },
            effect: EffectLaw::Constant { value: 1.0 },
            violation: Violation::None,
            noise: Noise::None,
            seed: 7,
        }
    }

    #[test]
    fn constant_effect_truth_table() {
        let (_, schedule, truth) = gen_dgp(&base_config()).unwrap();
        assert!(!truth.atts.is_empty());
        assert!(truth.atts.values().all(|&v| v == 1.0));
        assert_eq!(truth.uniform_att, Some(1.0));
        // Only treated triples appear, so every key satisfies t >= g.
        assert!(truth.atts.keys().all(|&(_, g, t)| t >= g));
        assert!(schedule.cohorts().len() > 1);
    }

    #[test]
    fn event_time_linear_truth() {
        let mut config = base_config();
        config.effect = EffectLaw::EventTimeLinear { slope: 1.0 };
        let (_, _, truth) = gen_dgp(&config).unwrap();
        for (&(_, g, t), &att) in &truth.atts {
            assert_eq!(att, (t - g + 1) as f64);
        }
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let config = base_config();
        let (p1, _, t1) = gen_dgp(&config).unwrap();
        let (p2, _, t2) = gen_dgp(&config).unwrap();
        assert_eq!(p1.y_slice(), p2.y_slice());
        assert_eq!(t1, t2);
        let mut other = config;
        other.seed = 8;
        let (p3, _, _) = gen_dgp(&other).unwrap();
        assert_ne!(p1.y_slice(), p3.y_slice());
    }

    #[test]
    fn generated_panels_pass_derive_schedule() {
        for seed in 0..5 {
            for design in [
                "pure-placebo-stratum",
                "cross-stratum-staggered",
                "within-stratum-staggered",
            ] {
                let config = DgpConfig {
                    adoption: Adoption::Named { design: design.into() },
                    noise: Noise::Iid { sd: 0.3 },
                    seed,
                    ..base_config()
                };
                let (panel, schedule, _) = gen_dgp(&config).unwrap();
                let derived = derive_schedule(&panel).unwrap();
                assert_eq!(derived.g_vec(), schedule.g_vec(), "{design}");
            }
        }
    }

    #[test]
    fn unknown_design() {
        assert!(matches!(
            named_design("no-such-design", 4, 2, 4),
            Err(Error::UnknownDesign(_))
        ));
    }

    #[test]
    fn pure_placebo_keeps_within_stratum_controls() {
        let g = named_design("pure-placebo-stratum", 4, 2, 4).unwrap();
        // Spec shape: a treated subset of the first stratum adopts at the
        // second period; the other stratum is never treated.
        assert_eq!(g, vec![1, 4, 1, 4, 4, 4, 4, 4]);
    }

    #[test]
    fn explicit_adoption_validation() {
        let mut config = base_config();
        config.adoption = Adoption::Explicit { g: vec![1; 5] };
        assert!(matches!(gen_dgp(&config), Err(Error::InvalidConfig(_))));
        config.adoption = Adoption::Explicit { g: vec![0; 18] };
        assert!(matches!(gen_dgp(&config), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn effect_table_must_cover_treated_triples() {
        let mut config = base_config();
        config.effect = EffectLaw::Table { entries: vec![] };
        assert!(matches!(gen_dgp(&config), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn noiseless_imputation_recovers_truth() {
        // Includes a stratum-common violation: the control law stays
        // additive in (s, t), so imputation is still exact.
        let mut config = base_config();
        config.effect = EffectLaw::EventTimeLinear { slope: 0.7 };
        config.violation = Violation::StratumCommon { magnitude: 0.5 };
        let (panel, schedule, truth) = gen_dgp(&config).unwrap();
        let result = impute_counterfactuals(&panel, &schedule, None).unwrap();
        assert!(result.dropped.is_empty());
        for e in &result.effects {
            let g = schedule.g(e.s, e.r);
            let att = truth.atts[&(e.r, g, e.t)];
            assert!((e.effect - att).abs() < 1e-8);
        }
        let att = att_overall(&result.effects, AttWeighting::Uniform).unwrap();
        assert!((att - truth.uniform_att.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn tdr_biased_under_heterogeneous_effects_but_att_exact() {
        let mut config = base_config();
        config.effect = EffectLaw::EventTimeLinear { slope: 1.0 };
        let (panel, schedule, truth) = gen_dgp(&config).unwrap();
        let tau = tdr_estimate(&panel).unwrap();
        let truth_att = truth.uniform_att.unwrap();
        assert!((tau - truth_att).abs() > 1e-6, "tdr {tau} vs truth {truth_att}");
        let result = impute_counterfactuals(&panel, &schedule, None).unwrap();
        let att = att_overall(&result.effects, AttWeighting::Uniform).unwrap();
        assert!((att - truth_att).abs() < 1e-8);
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{
            "s_count": 4, "r_count": 2, "t_count": 4,
            "adoption": {"kind": "named", "design": "pure-placebo-stratum"},
            "effect": {"kind": "event_time_linear", "slope": 2.0},
            "violation": {"kind": "stratum_common"},
            "seed": 3
        }"#;
        let config: DgpConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.violation, Violation::StratumCommon { magnitude: 0.5 });
        assert_eq!(config.noise, Noise::None);
        let (panel, _, _) = gen_dgp(&config).unwrap();
        assert_eq!(panel.s_count(), 4);
        let back: DgpConfig =
            serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(back, config);
    }
}
