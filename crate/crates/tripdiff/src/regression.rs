//! Three-way fixed-effects regression.
//!
//! The grouped triple-differences specification regresses the cell outcome on
//! a treatment dummy and three overlapping fixed-effect groups,
//!
//! ```text
//! Y_srt = tau * D_srt + alpha_sr + gamma_st + delta_rt + eps_srt,
//! ```
//!
//! and on a balanced panel the coefficient has a closed form: triple-demean
//! both `Y` and `D` (subtract all two-way means, add back the one-way means,
//! subtract the grand mean) and take the ratio of the treated-cell residual
//! sum to the residual treatment sum of squares. This module provides that
//! closed form ([`tdr_estimate`]), an independent dense dummy-variable solve
//! of the same normal equations ([`dense_ols_oracle`]), and a weighted
//! alternating-projections solver ([`fit_three_way_fe`]) that also handles
//! cell subsets — the workhorse behind counterfactual imputation and
//! bootstrap reweighting.
//!
//! The three individual fixed-effect coefficient vectors are not separately
//! identified (the groups are collinear); only fitted values and `tau` are
//! exposed as results.

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::Scalar;

/// One-way, two-way and grand means of a per-cell array on a balanced panel.
#[derive(Debug, Clone)]
pub struct MeanField<F> {
    /// Per-`(s, r)` means, `r` fastest.
    pub sr: Vec<F>,
    /// Per-`(s, t)` means, `t` fastest.
    pub st: Vec<F>,
    /// Per-`(r, t)` means, `t` fastest.
    pub rt: Vec<F>,
    /// Per-`s` means.
    pub s: Vec<F>,
    /// Per-`r` means.
    pub r: Vec<F>,
    /// Per-`t` means.
    pub t: Vec<F>,
    /// Grand mean.
    pub grand: F,
}

impl<F: Scalar> MeanField<F> {
    /// Compute all means of `values` (storage order, `t` fastest) on a
    /// balanced panel.
    pub fn compute(values: &[F], panel: &PanelDataset<F>) -> Result<Self> {
        if !panel.is_balanced() {
            return Err(Error::UnbalancedPanel(
                "mean field requires a balanced panel".into(),
            ));
        }
        let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
        let n = ss * rr * tt;
        if values.len() != n {
            return Err(Error::InvalidConfig(format!(
                "expected {} values, got {}",
                n,
                values.len()
            )));
        }
        let mut sr = vec![F::zero(); ss * rr];
        let mut st = vec![F::zero(); ss * tt];
        let mut rt = vec![F::zero(); rr * tt];
        for s in 0..ss {
            for r in 0..rr {
                for t in 0..tt {
                    let v = values[(s * rr + r) * tt + t];
                    sr[s * rr + r] += v;
                    st[s * tt + t] += v;
                    rt[r * tt + t] += v;
                }
            }
        }
        let grand = sr.iter().copied().sum::<F>() / F::from_count(n);
        let s_means: Vec<F> = (0..ss)
            .map(|s| sr[s * rr..(s + 1) * rr].iter().copied().sum::<F>() / F::from_count(rr * tt))
            .collect();
        let r_means: Vec<F> = (0..rr)
            .map(|r| {
                (0..ss).map(|s| sr[s * rr + r]).sum::<F>() / F::from_count(ss * tt)
            })
            .collect();
        let t_means: Vec<F> = (0..tt)
            .map(|t| {
                (0..ss).map(|s| st[s * tt + t]).sum::<F>() / F::from_count(ss * rr)
            })
            .collect();
        for v in &mut sr {
            *v /= F::from_count(tt);
        }
        for v in &mut st {
            *v /= F::from_count(rr);
        }
        for v in &mut rt {
            *v /= F::from_count(ss);
        }
        Ok(MeanField { sr, st, rt, s: s_means, r: r_means, t: t_means, grand })
    }
}

/// Per-cell triple-demeaned values.
///
/// The residual at `(s, r, t)` is the input minus its three two-way means,
/// plus its three one-way means, minus the grand mean. Residuals sum to zero
/// along every index holding the other two fixed.
#[derive(Debug, Clone)]
pub struct ResidualField<F> {
    values: Vec<F>,
    r_count: usize,
    t_count: usize,
}

impl<F: Scalar> ResidualField<F> {
    /// Residual at `(s, r, t)`.
    #[inline]
    pub fn get(&self, s: usize, r: usize, t: usize) -> F {
        self.values[(s * self.r_count + r) * self.t_count + t]
    }

    /// All residuals in storage order.
    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    /// Residual sum of squares.
    pub fn sum_squares(&self) -> F {
        self.values.iter().map(|&v| v * v).sum()
    }
}

/// Triple-demean a per-cell array on a balanced panel.
pub fn triple_demean<F: Scalar>(
    values: &[F],
    panel: &PanelDataset<F>,
) -> Result<ResidualField<F>> {
    let means = MeanField::compute(values, panel)?;
    let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
    let mut out = vec![F::zero(); ss * rr * tt];
    for s in 0..ss {
        for r in 0..rr {
            for t in 0..tt {
                out[(s * rr + r) * tt + t] = values[(s * rr + r) * tt + t]
                    - means.sr[s * rr + r]
                    - means.st[s * tt + t]
                    - means.rt[r * tt + t]
                    + means.s[s]
                    + means.r[r]
                    + means.t[t]
                    - means.grand;
            }
        }
    }
    Ok(ResidualField { values: out, r_count: rr, t_count: tt })
}

/// Treatment indicators as scalar values, in panel index order.
pub fn d_as_values<F: Scalar>(panel: &PanelDataset<F>) -> Vec<F> {
    panel
        .d_slice()
        .iter()
        .map(|&d| if d { F::one() } else { F::zero() })
        .collect()
}

/// The triple-differences regression coefficient via triple demeaning.
///
/// Returns the ratio of the triple-demeaned outcome summed over treated
/// cells to the residual treatment sum of squares.
pub fn tdr_estimate<F: Scalar>(panel: &PanelDataset<F>) -> Result<F> {
    let y_res = triple_demean(panel.y_slice(), panel)?;
    let d_res = triple_demean(&d_as_values(panel), panel)?;
    let denom = d_res.sum_squares();
    let n = panel.y_slice().len();
    if denom <= F::epsilon() * F::from_count(n.max(1)) {
        return Err(Error::NoResidualTreatmentVariation(
            denom.to_f64().unwrap_or(0.0),
        ));
    }
    let numer: F = panel
        .d_slice()
        .iter()
        .zip(y_res.as_slice())
        .filter(|&(&d, _)| d)
        .map(|(_, &v)| v)
        .sum();
    Ok(numer / denom)
}

/// The same coefficient from a dense dummy-variable least-squares solve.
///
/// Builds the full design — intercept, drop-first dummies for the `(s, r)`,
/// `(s, t)` and `(r, t)` groups, and the treatment column last — and solves
/// the normal equations by Gauss-Jordan elimination in fixed column order,
/// zeroing coefficients on rank-deficient (free) columns. Any least-squares
/// minimizer yields the same treatment coefficient, which is unique whenever
/// the treatment column has residual variation; a free treatment column is
/// reported as [`Error::SingularDesign`].
pub fn dense_ols_oracle<F: Scalar>(panel: &PanelDataset<F>) -> Result<F> {
    if !panel.is_balanced() {
        return Err(Error::UnbalancedPanel(
            "dense oracle requires a balanced panel".into(),
        ));
    }
    let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
    let n = ss * rr * tt;
    // Column layout: intercept | sr dummies (skip first) | st dummies (skip
    // first) | rt dummies (skip first) | treatment.
    let p = 1 + (ss * rr - 1) + (ss * tt - 1) + (rr * tt - 1) + 1;
    let mut x = vec![F::zero(); n * p];
    let mut row = 0usize;
    for s in 0..ss {
        for r in 0..rr {
            for t in 0..tt {
                let base = row * p;
                x[base] = F::one();
                let mut off = 1;
                let sr = s * rr + r;
                if sr > 0 {
                    x[base + off + sr - 1] = F::one();
                }
                off += ss * rr - 1;
                let st = s * tt + t;
                if st > 0 {
                    x[base + off + st - 1] = F::one();
                }
                off += ss * tt - 1;
                let rt = r * tt + t;
                if rt > 0 {
                    x[base + off + rt - 1] = F::one();
                }
                off += rr * tt - 1;
                if panel.d(s, r, t) {
                    x[base + off] = F::one();
                }
                row += 1;
            }
        }
    }
    // Normal equations A = X'X, b = X'y.
    let mut a = vec![F::zero(); p * p];
    let mut b = vec![F::zero(); p];
    let y = panel.y_slice();
    for i in 0..n {
        let xi = &x[i * p..(i + 1) * p];
        for j in 0..p {
            if xi[j] == F::zero() {
                continue;
            }
            for k in j..p {
                a[j * p + k] += xi[j] * xi[k];
            }
            b[j] += xi[j] * y[i];
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[j * p + k] = a[k * p + j];
        }
    }
    // Gauss-Jordan in fixed column order; near-zero pivots mark free columns
    // whose coefficients are pinned at zero.
    let max_diag = (0..p)
        .map(|j| a[j * p + j])
        .fold(F::zero(), |m, v| if v > m { v } else { m });
    let tol = F::from_f64_lossy(1e-10) * max_diag.max(F::one());
    let mut free = vec![false; p];
    for j in 0..p {
        let piv = a[j * p + j];
        if piv.abs() <= tol {
            free[j] = true;
            continue;
        }
        for i in 0..p {
            if i == j {
                continue;
            }
            let f = a[i * p + j] / piv;
            if f == F::zero() {
                continue;
            }
            for k in 0..p {
                let ajk = a[j * p + k];
                a[i * p + k] -= f * ajk;
            }
            let bj = b[j];
            b[i] -= f * bj;
        }
    }
    let d_col = p - 1;
    if free[d_col] {
        return Err(Error::SingularDesign(
            "treatment column is collinear with the fixed effects".into(),
        ));
    }
    Ok(b[d_col] / a[d_col * p + d_col])
}

/// Convergence controls for [`fit_three_way_fe`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions<F> {
    /// Stop when no fitted value moved by more than this in a full sweep.
    pub tolerance: F,
    /// Hard cap on alternating-projection sweeps.
    pub max_sweeps: usize,
}

impl<F: Scalar> Default for FitOptions<F> {
    fn default() -> Self {
        FitOptions { tolerance: F::from_f64_lossy(1e-10), max_sweeps: 10_000 }
    }
}

/// A converged three-way fixed-effects fit on a cell subset.
///
/// Fitted values are the least-squares projection of the (possibly
/// treatment-partialled) outcome onto the span of the three fixed-effect
/// groups over the subset. Individual group coefficients are an arbitrary
/// representation of that projection and are kept private; predictions for
/// out-of-subset cells are exposed through [`FeFit::predict`], which fails
/// per cell when a needed group never appears in the subset.
#[derive(Debug, Clone)]
pub struct FeFit<F> {
    a_sr: Vec<F>,
    b_st: Vec<F>,
    c_rt: Vec<F>,
    anch_sr: Vec<bool>,
    anch_st: Vec<bool>,
    anch_rt: Vec<bool>,
    r_count: usize,
    t_count: usize,
    /// Treatment coefficient, present when the fit included the dummy.
    pub tau: Option<F>,
    /// Alternating-projection sweeps used.
    pub sweeps: usize,
    /// Largest fitted-value change in the final sweep.
    pub final_change: F,
}

impl<F: Scalar> FeFit<F> {
    /// Fixed-effects fitted value at `(s, r, t)` (excludes any `tau * d`
    /// term), or [`Error::UnanchoredPrediction`] when one of the cell's
    /// groups has no subset anchor.
    pub fn predict(&self, s: usize, r: usize, t: usize) -> Result<F> {
        let (sr, st, rt) = (s * self.r_count + r, s * self.t_count + t, r * self.t_count + t);
        if !self.anch_sr[sr] || !self.anch_st[st] || !self.anch_rt[rt] {
            return Err(Error::UnanchoredPrediction { s, r, t });
        }
        Ok(self.a_sr[sr] + self.b_st[st] + self.c_rt[rt])
    }

    /// Whether all three groups of `(s, r, t)` are anchored in the subset.
    pub fn is_anchored(&self, s: usize, r: usize, t: usize) -> bool {
        self.anch_sr[s * self.r_count + r]
            && self.anch_st[s * self.t_count + t]
            && self.anch_rt[r * self.t_count + t]
    }
}

struct ApProblem<'a, F> {
    values: &'a [F],
    weights: &'a [F],
    active: &'a [bool],
    ss: usize,
    rr: usize,
    tt: usize,
}

/// Fitted components `(a_sr, b_st, c_rt)` plus sweep count and final change.
type ApSolution<F> = (Vec<F>, Vec<F>, Vec<F>, usize, F);

/// One alternating-projections solve of `values ~ a_sr + b_st + c_rt` over
/// the active cells, weighted. Returns components plus diagnostics.
fn alternating_projections<F: Scalar>(
    prob: &ApProblem<'_, F>,
    opts: &FitOptions<F>,
) -> Result<ApSolution<F>> {
    let (ss, rr, tt) = (prob.ss, prob.rr, prob.tt);
    let mut a = vec![F::zero(); ss * rr];
    let mut b = vec![F::zero(); ss * tt];
    let mut c = vec![F::zero(); rr * tt];
    let mut w_sr = vec![F::zero(); ss * rr];
    let mut w_st = vec![F::zero(); ss * tt];
    let mut w_rt = vec![F::zero(); rr * tt];
    for s in 0..ss {
        for r in 0..rr {
            for t in 0..tt {
                let i = (s * rr + r) * tt + t;
                if prob.active[i] {
                    w_sr[s * rr + r] += prob.weights[i];
                    w_st[s * tt + t] += prob.weights[i];
                    w_rt[r * tt + t] += prob.weights[i];
                }
            }
        }
    }
    let mut fitted = vec![F::zero(); ss * rr * tt];
    let mut sweeps = 0usize;
    let mut change = F::infinity();
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        // a update: weighted mean of (v - b - c) within each (s, r).
        for s in 0..ss {
            for r in 0..rr {
                let wg = w_sr[s * rr + r];
                if wg == F::zero() {
                    continue;
                }
                let mut acc = F::zero();
                for t in 0..tt {
                    let i = (s * rr + r) * tt + t;
                    if prob.active[i] {
                        acc += prob.weights[i]
                            * (prob.values[i] - b[s * tt + t] - c[r * tt + t]);
                    }
                }
                a[s * rr + r] = acc / wg;
            }
        }
        // b update.
        for s in 0..ss {
            for t in 0..tt {
                let wg = w_st[s * tt + t];
                if wg == F::zero() {
                    continue;
                }
                let mut acc = F::zero();
                for r in 0..rr {
                    let i = (s * rr + r) * tt + t;
                    if prob.active[i] {
                        acc += prob.weights[i]
                            * (prob.values[i] - a[s * rr + r] - c[r * tt + t]);
                    }
                }
                b[s * tt + t] = acc / wg;
            }
        }
        // c update.
        for r in 0..rr {
            for t in 0..tt {
                let wg = w_rt[r * tt + t];
                if wg == F::zero() {
                    continue;
                }
                let mut acc = F::zero();
                for s in 0..ss {
                    let i = (s * rr + r) * tt + t;
                    if prob.active[i] {
                        acc += prob.weights[i]
                            * (prob.values[i] - a[s * rr + r] - b[s * tt + t]);
                    }
                }
                c[r * tt + t] = acc / wg;
            }
        }
        change = F::zero();
        for s in 0..ss {
            for r in 0..rr {
                for t in 0..tt {
                    let i = (s * rr + r) * tt + t;
                    if !prob.active[i] {
                        continue;
                    }
                    let f = a[s * rr + r] + b[s * tt + t] + c[r * tt + t];
                    let delta = (f - fitted[i]).abs();
                    if delta > change {
                        change = delta;
                    }
                    fitted[i] = f;
                }
            }
        }
        if change < opts.tolerance {
            return Ok((a, b, c, sweeps, change));
        }
    }
    Err(Error::NonConvergence {
        sweeps,
        change: change.to_f64().unwrap_or(f64::NAN),
    })
}

/// Weighted least squares of the outcome on the three fixed-effect groups
/// (optionally plus the treatment dummy) over a cell subset.
///
/// `cell_weights` and `subset` are in storage order and default to all-ones
/// and all-present-cells respectively. With `include_treatment` the
/// coefficient is obtained by partialling both the outcome and the dummy on
/// the fixed effects (Frisch-Waugh-Lovell) and the returned components
/// describe `y - tau * d`.
pub fn fit_three_way_fe<F: Scalar>(
    panel: &PanelDataset<F>,
    cell_weights: Option<&[F]>,
    subset: Option<&[bool]>,
    include_treatment: bool,
    opts: &FitOptions<F>,
) -> Result<FeFit<F>> {
    let (ss, rr, tt) = (panel.s_count(), panel.r_count(), panel.t_count());
    let n = ss * rr * tt;
    let ones = vec![F::one(); n];
    let weights = cell_weights.unwrap_or(&ones);
    if weights.len() != n {
        return Err(Error::InvalidConfig(format!(
            "expected {} weights, got {}",
            n,
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < F::zero()) {
        return Err(Error::InvalidConfig(
            "cell weights must be finite and nonnegative".into(),
        ));
    }
    let mut active: Vec<bool> = panel.present_slice().to_vec();
    if let Some(mask) = subset {
        if mask.len() != n {
            return Err(Error::InvalidConfig(format!(
                "expected {} subset flags, got {}",
                n,
                mask.len()
            )));
        }
        for (a, &m) in active.iter_mut().zip(mask) {
            *a = *a && m;
        }
    }
    for (a, &w) in active.iter_mut().zip(weights) {
        *a = *a && w > F::zero();
    }
    if active.iter().all(|&a| !a) {
        return Err(Error::InvalidConfig("empty fitting subset".into()));
    }

    let solve = |values: &[F]| -> Result<ApSolution<F>> {
        alternating_projections(
            &ApProblem { values, weights, active: &active, ss, rr, tt },
            opts,
        )
    };

    let y = panel.y_slice();
    let mut tau = None;
    let mut target: Vec<F> = y.to_vec();
    let mut total_sweeps = 0usize;
    if include_treatment {
        let d = d_as_values(panel);
        let (ya, yb, yc, s1, _) = solve(y)?;
        let (da, db, dc, s2, _) = solve(&d)?;
        total_sweeps += s1 + s2;
        let mut num = F::zero();
        let mut den = F::zero();
        for s in 0..ss {
            for r in 0..rr {
                for t in 0..tt {
                    let i = (s * rr + r) * tt + t;
                    if !active[i] {
                        continue;
                    }
                    let yr = y[i] - ya[s * rr + r] - yb[s * tt + t] - yc[r * tt + t];
                    let dr = d[i] - da[s * rr + r] - db[s * tt + t] - dc[r * tt + t];
                    num += weights[i] * yr * dr;
                    den += weights[i] * dr * dr;
                }
            }
        }
        if den <= F::epsilon() * F::from_count(n) {
            return Err(Error::NoResidualTreatmentVariation(
                den.to_f64().unwrap_or(0.0),
            ));
        }
        let t_hat = num / den;
        tau = Some(t_hat);
        for (v, &di) in target.iter_mut().zip(&d) {
            *v -= t_hat * di;
        }
    }
    let (a, b, c, s3, change) = solve(&target)?;
    total_sweeps += s3;

    let mut anch_sr = vec![false; ss * rr];
    let mut anch_st = vec![false; ss * tt];
    let mut anch_rt = vec![false; rr * tt];
    for s in 0..ss {
        for r in 0..rr {
            for t in 0..tt {
                if active[(s * rr + r) * tt + t] {
                    anch_sr[s * rr + r] = true;
                    anch_st[s * tt + t] = true;
                    anch_rt[r * tt + t] = true;
                }
            }
        }
    }
    Ok(FeFit {
        a_sr: a,
        b_st: b,
        c_rt: c,
        anch_sr,
        anch_st,
        anch_rt,
        r_count: rr,
        t_count: tt,
        tau,
        sweeps: total_sweeps,
        final_change: change,
    })
}
