//! Multiplier bootstrap inference.
//!
//! Standard errors come from an exponential-weight (Bayesian) bootstrap:
//! each draw assigns every cluster an independent Exp(1) weight, re-runs the
//! estimator with the induced cell weights, and the standard error is the
//! sample standard deviation of the draws. Clustering is either one-way (on
//! the (s, r) dyad, the unit, or the stratum) or two-way via the pigeonhole
//! construction of Owen and Eckles (2012): the weight on cell (s, r) is the
//! product `w_s * w_r` of independent unit and stratum weights, which
//! reproduces two-way dependence without resampling rows.
//!
//! Draws are reproducible regardless of thread count: draw `b` uses a
//! ChaCha8 stream derived from the master seed and `b` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Which margin the one-way weights are drawn on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKey {
    /// One weight per (s, r) dyad.
    Dyad,
    /// One weight per unit `s`, shared across strata.
    S,
    /// One weight per stratum `r`, shared across units.
    R,
}

/// Bootstrap weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "cluster")]
pub enum Scheme {
    OneWayCluster(ClusterKey),
    PigeonholeTwoWay,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::OneWayCluster(ClusterKey::Dyad) => "cluster_dyad",
            Scheme::OneWayCluster(ClusterKey::S) => "cluster_s",
            Scheme::OneWayCluster(ClusterKey::R) => "cluster_r",
            Scheme::PigeonholeTwoWay => "pigeonhole",
        }
    }
}

/// Bootstrap configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub scheme: Scheme,
    /// Number of draws; at least 2.
    pub draws: usize,
    pub seed: u64,
}

/// Point estimate with bootstrap uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary<F> {
    /// Estimate under all-ones weights.
    pub estimate: F,
    /// Sample standard deviation across successful draws.
    pub se: F,
    /// `estimate - 1.96 * se`.
    pub ci_lo: F,
    /// `estimate + 1.96 * se`.
    pub ci_hi: F,
    pub b_requested: usize,
    /// Draws on which the estimator returned an error (for example a
    /// degenerate reweighted design); excluded from the standard deviation.
    pub b_failed: usize,
    pub scheme: Scheme,
    pub seed: u64,
    /// Mean of the draws, as a finite-sample bias diagnostic.
    pub bootstrap_mean: F,
    #[serde(skip)]
    pub draws: Vec<F>,
}

impl<F: crate::Scalar + Serialize> BootstrapSummary<F> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialization")
    }
}

fn rng_for_draw(seed: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64 + 1);
    rng
}

/// One vector of Exp(1) cluster weights expanded to cells, one-way scheme.
pub fn draw_one_way_weights<F: crate::Scalar>(
    panel: &PanelDataset<F>,
    key: ClusterKey,
    seed: u64,
    draw: usize,
) -> Result<Vec<F>> {
    let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
    let clusters = match key {
        ClusterKey::Dyad => ss * rr,
        ClusterKey::S => ss,
        ClusterKey::R => rr,
    };
    if clusters < 2 {
        return Err(Error::TooFewClusters(clusters));
    }
    let mut rng = rng_for_draw(seed, draw);
    let w: Vec<f64> = (0..clusters).map(|_| Exp1.sample(&mut rng)).collect();
    let mut out = vec![F::zero(); ss * rr * tt];
    for s in 0..ss {
        for r in 0..rr {
            let c = match key {
                ClusterKey::Dyad => s * rr + r,
                ClusterKey::S => s,
                ClusterKey::R => r,
            };
            let wf = F::from_f64_lossy(w[c]);
            for t in 0..tt {
                out[panel.idx(s, r, t)] = wf;
            }
        }
    }
    Ok(out)
}

/// Pigeonhole two-way weights: `w_s * w_r` from independent Exp(1) vectors.
pub fn draw_pigeonhole_weights<F: crate::Scalar>(
    panel: &PanelDataset<F>,
    seed: u64,
    draw: usize,
) -> Result<Vec<F>> {
    let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
    if ss < 2 || rr < 2 {
        return Err(Error::TooFewClusters(ss.min(rr)));
    }
    let mut rng = rng_for_draw(seed, draw);
    let ws: Vec<f64> = (0..ss).map(|_| Exp1.sample(&mut rng)).collect();
    let wr: Vec<f64> = (0..rr).map(|_| Exp1.sample(&mut rng)).collect();
    let mut out = vec![F::zero(); ss * rr * tt];
    for s in 0..ss {
        for r in 0..rr {
            let wf = F::from_f64_lossy(ws[s] * wr[r]);
            for t in 0..tt {
                out[panel.idx(s, r, t)] = wf;
            }
        }
    }
    Ok(out)
}

fn weights_for_draw<F: crate::Scalar>(
    panel: &PanelDataset<F>,
    config: &BootstrapConfig,
    draw: usize,
) -> Result<Vec<F>> {
    match config.scheme {
        Scheme::OneWayCluster(key) => draw_one_way_weights(panel, key, config.seed, draw),
        Scheme::PigeonholeTwoWay => draw_pigeonhole_weights(panel, config.seed, draw),
    }
}

/// Run the multiplier bootstrap for an arbitrary weighted estimator.
///
/// `estimator` receives one weight per cell (in panel index order) and
/// returns the statistic of interest; the point estimate uses all-ones
/// weights. Draws run in parallel and are reproducible for a fixed seed.
pub fn bootstrap<F, E>(
    panel: &PanelDataset<F>,
    estimator: E,
    config: &BootstrapConfig,
) -> Result<BootstrapSummary<F>>
where
    F: crate::Scalar,
    E: Fn(&[F]) -> Result<F> + Sync,
{
    if config.draws < 2 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 2 draws, got {}",
            config.draws
        )));
    }
    let n = panel.s_count() * panel.r_count() * panel.t_count();
    let ones = vec![F::one(); n];
    let estimate = estimator(&ones)?;

    let draws: Vec<Option<F>> = (0..config.draws)
        .into_par_iter()
        .map(|b| {
            let w = weights_for_draw(panel, config, b)?;
            Ok(estimator(&w).ok())
        })
        .collect::<Result<_>>()?;
    let ok: Vec<F> = draws.into_iter().flatten().collect();
    let b_failed = config.draws - ok.len();
    if ok.is_empty() {
        return Err(Error::AllDrawsFailed(config.draws));
    }
    let nf = F::from_count(ok.len());
    let mean = ok.iter().copied().sum::<F>() / nf;
    let se = if ok.len() < 2 {
        F::zero()
    } else {
        let ssq: F = ok.iter().map(|&x| (x - mean) * (x - mean)).sum();
        (ssq / (nf - F::one())).sqrt()
    };
    let z = F::from_f64_lossy(1.96);
    Ok(BootstrapSummary {
        estimate,
        se,
        ci_lo: estimate - z * se,
        ci_hi: estimate + z * se,
        b_requested: config.draws,
        b_failed,
        scheme: config.scheme,
        seed: config.seed,
        bootstrap_mean: mean,
        draws: ok,
    })
}
