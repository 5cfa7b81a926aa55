//! Monte Carlo checks of the intermediate claims behind the log-determinant
//! CLT: distance moments, the conditional variance formula, projector
//! bounds, delocalization, singular-value counts and chi-square facts.
//!
//! Every check returns a [`LemmaReport`]. Pass/fail is decided from
//! `(observed, predicted, std_error)` and the recorded [`Criterion`] alone.
//! Checks whose constants are not pinned down are `ReportOnly`.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detcore::{decompose_rows, logdet_lu, OrthoBasis};
use crate::ensembles::{
    sample_matrix, split_point, tail_block_size, AtomDistribution, MatrixSample,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{par_map_trials, SeedSpec, TrialRng};
use crate::stats::{ks_two_sample, mean_and_se, median, KsReport};

/// Width of the two-sided Monte Carlo band, in standard errors.
pub const SE_BAND: f64 = 5.0;
/// Absolute slack added to SE bands so zero-variance cases compare exactly
/// up to rounding.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Criterion {
    /// `|observed - predicted| <= tolerance`
    Within { tolerance: f64 },
    /// `observed <= limit`
    AtMost { limit: f64 },
    /// `observed >= limit`
    AtLeast { limit: f64 },
    ReportOnly,
}

impl Criterion {
    pub fn evaluate(&self, observed: f64, predicted: f64) -> bool {
        match *self {
            Criterion::Within { tolerance } => (observed - predicted).abs() <= tolerance,
            Criterion::AtMost { limit } => observed <= limit,
            Criterion::AtLeast { limit } => observed >= limit,
            Criterion::ReportOnly => true,
        }
    }

    pub fn is_gate(&self) -> bool {
        !matches!(self, Criterion::ReportOnly)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Within { tolerance } => write!(f, "|obs-pred|<={tolerance:.6e}"),
            Criterion::AtMost { limit } => write!(f, "obs<={limit:.6e}"),
            Criterion::AtLeast { limit } => write!(f, "obs>={limit:.6e}"),
            Criterion::ReportOnly => write!(f, "report-only"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub n: usize,
    pub trials: usize,
    pub observed: f64,
    pub predicted: f64,
    pub std_error: f64,
    pub criterion: Criterion,
    pub pass: bool,
    pub extras: Vec<(String, f64)>,
    pub remarks: Vec<String>,
}

impl LemmaReport {
    pub fn new(
        lemma_id: impl Into<String>,
        n: usize,
        trials: usize,
        observed: f64,
        predicted: f64,
        std_error: f64,
        criterion: Criterion,
    ) -> Self {
        LemmaReport {
            lemma_id: lemma_id.into(),
            n,
            trials,
            observed,
            predicted,
            std_error: std_error.max(0.0),
            criterion,
            pass: criterion.evaluate(observed, predicted),
            extras: Vec::new(),
            remarks: Vec::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.push((key.to_string(), value));
        self
    }

    pub fn with_remark(mut self, remark: impl Into<String>) -> Self {
        self.remarks.push(remark.into());
        self
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Re-derives `pass` from the stored numbers.
    pub fn recheck(&self) -> bool {
        self.criterion.evaluate(self.observed, self.predicted)
    }

    /// Free-text notes column: criterion, extras, remarks; `;`-separated.
    pub fn notes(&self) -> String {
        let mut parts = vec![self.criterion.to_string()];
        parts.extend(self.extras.iter().map(|(k, v)| format!("{k}={v:.6e}")));
        parts.extend(self.remarks.iter().cloned());
        parts.join("; ")
    }
}

fn sample_rows(count: usize, n: usize, dist: &AtomDistribution, rng: &mut TrialRng) -> Matrix {
    let mut m = Matrix::zeros(count, n);
    for r in 0..count {
        for v in m.row_mut(r) {
            *v = dist.sample(rng);
        }
    }
    m
}

fn sample_vec(n: usize, dist: &AtomDistribution, rng: &mut TrialRng) -> Vec<f64> {
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn basis_of(rows: &Matrix) -> Result<OrthoBasis> {
    let mut basis = OrthoBasis::new(rows.cols());
    for r in 0..rows.rows() {
        if !basis.push(rows.row(r)).1 {
            return Err(Error::NotFullRank { row: r });
        }
    }
    Ok(basis)
}

// Stream families, so prefixes and resamples never share draws.
const PREFIX: u64 = 1;
const RESAMPLE: u64 = 2;
const MATRICES: u64 = 3;
const ARM_A: u64 = 4;
const ARM_B: u64 = 5;

fn prefix_rng(seed: u64) -> TrialRng {
    SeedSpec::new(SeedSpec::family(seed, PREFIX), 0).rng()
}

fn stream(seed: u64, family: u64, index: u64) -> SeedSpec {
    SeedSpec::new(SeedSpec::family(seed, family), index)
}

/// Fixes an `i`-row prefix, resamples row `i+1` and compares the mean of
/// `Delta^2` with `n - i`. Also reports how often `|Delta - sqrt(n-i)| >= t`
/// for `t = 2, 4`.
pub fn check_distance_moments(
    n: usize,
    i: usize,
    dist: &AtomDistribution,
    trials: usize,
    seed: u64,
) -> Result<LemmaReport> {
    if i + 4 > n {
        return Err(Error::config(format!("need i <= n - 4, got i={i}, n={n}")));
    }
    if trials < 100 {
        return Err(Error::config("distance moment check needs at least 100 trials"));
    }
    let basis = basis_of(&sample_rows(i, n, dist, &mut prefix_rng(seed)))?;
    let k = (n - i) as f64;
    let deltas = par_map_trials(trials, |j| {
        let mut rng = stream(seed, RESAMPLE, j).rng();
        basis.distance_sq(&sample_vec(n, dist, &mut rng))
    });
    let (mean, se) = mean_and_se(&deltas);
    let exceed = |t: f64| {
        deltas.iter().filter(|d| (d.sqrt() - k.sqrt()).abs() >= t).count() as f64 / trials as f64
    };
    Ok(LemmaReport::new(
        "distance_moments",
        n,
        trials,
        mean,
        k,
        se,
        Criterion::Within {
            tolerance: SE_BAND * se + ROUNDING_SLACK * k,
        },
    )
    .with_extra("i", i as f64)
    .with_extra("exceed_t2", exceed(2.0))
    .with_extra("exceed_t4", exceed(4.0))
    .with_remark(format!("dist={}", dist.name())))
}

/// Conditional second moment of `X = Delta^2/k - 1` given a fixed prefix,
/// against `2/k - sum_s q_ss^2 (3 - m4)`.
pub fn check_conditional_variance(
    n: usize,
    i: usize,
    dist: &AtomDistribution,
    resamples: usize,
    seed: u64,
) -> Result<LemmaReport> {
    if i >= n {
        return Err(Error::config(format!("prefix length {i} must be below n={n}")));
    }
    if resamples < 10_000 {
        return Err(Error::config("conditional variance check needs at least 10^4 resamples"));
    }
    let basis = basis_of(&sample_rows(i, n, dist, &mut prefix_rng(seed)))?;
    let k = (n - i) as f64;
    let qss_sq_sum: f64 = basis
        .projection_diagonal()
        .iter()
        .map(|p| (p / k) * (p / k))
        .sum();
    let formula = 2.0 / k - qss_sq_sum * (3.0 - dist.fourth_moment);
    let x_sq = par_map_trials(resamples, |j| {
        let mut rng = stream(seed, RESAMPLE, j).rng();
        let x = basis.distance_sq(&sample_vec(n, dist, &mut rng)) / k - 1.0;
        x * x
    });
    let (mean, se) = mean_and_se(&x_sq);
    Ok(LemmaReport::new(
        "conditional_variance",
        n,
        resamples,
        mean,
        formula,
        se,
        Criterion::Within {
            tolerance: SE_BAND * se + ROUNDING_SLACK,
        },
    )
    .with_extra("i", i as f64)
    .with_extra("qss_sq_sum", qss_sq_sum)
    .with_extra("m4", dist.fourth_moment)
    .with_remark(format!("dist={}", dist.name())))
}

fn harmonic_range(lo_k: usize, hi_k: usize) -> f64 {
    (lo_k..=hi_k).map(|k| 1.0 / k as f64).sum()
}

/// `S = sum_{i<n0} sum_s q_ss(i)^2` per trial, gated on the hard bound
/// `S <= sum_{i<n0} 1/k_i`.
pub fn sum_qss_diag(n: usize, dist: &AtomDistribution, trials: usize, seed: u64) -> Result<LemmaReport> {
    if trials < 20 {
        return Err(Error::config("sum_qss_diag needs at least 20 trials"));
    }
    let n0 = split_point(n);
    let per_trial = par_map_trials(trials, |t| {
        let s = sample_matrix(n, dist, 0, stream(seed, MATRICES, t)).expect("valid sizes");
        let trace = decompose_rows(&s, true);
        if trace.degenerate {
            return None;
        }
        let total: f64 = trace
            .steps
            .iter()
            .filter(|st| st.i < n0)
            .filter_map(|st| st.diag.map(|d| d.qss_sq_sum))
            .sum();
        Some((total, trace.projection_violations()))
    });
    let kept: Vec<f64> = per_trial.iter().flatten().map(|(s, _)| *s).collect();
    let violations: usize = per_trial.iter().flatten().map(|(_, v)| *v).sum();
    let skipped = trials - kept.len();
    if kept.is_empty() {
        return Err(Error::DegenerateTrace);
    }
    // i < n0  <=>  k = n - i ranges over n-n0+1 ..= n
    let bound = harmonic_range(n - n0 + 1, n);
    let n1 = crate::ensembles::delocalization_rows(n).min(n0.saturating_sub(1));
    let n1_part = harmonic_range(n - n1, n);
    let max_s = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(&kept);
    let lnln = (n as f64).ln().ln();
    Ok(LemmaReport::new(
        "sum_qss_diag",
        n,
        kept.len(),
        max_s,
        bound,
        0.0,
        Criterion::AtMost {
            limit: bound * (1.0 + ROUNDING_SLACK),
        },
    )
    .with_extra("median_s", med)
    .with_extra("n1_part", n1_part)
    .with_extra("median_over_lnln", med / lnln)
    .with_extra("degenerate_skipped", skipped as f64)
    .with_extra("projection_violations", violations as f64)
    .with_remark(format!("dist={}", dist.name())))
}

/// `sup { ||v||_inf : v unit, v orthogonal to every row of block }`.
///
/// Equals `max_s sqrt(p_ss)` for the projector onto the complement of the
/// row span; when the complement is a line this is the infinity norm of the
/// unit normal.
pub fn null_space_sup_norm(block: &Matrix) -> Result<f64> {
    if block.rows() >= block.cols() {
        return Err(Error::config("block must have fewer rows than columns"));
    }
    let basis = basis_of(block)?;
    Ok(basis
        .projection_diagonal()
        .iter()
        .map(|p| p.max(0.0).sqrt())
        .fold(0.0, f64::max))
}

/// Delocalization of null vectors of an `n1 x n` random block. Report-only.
pub fn null_vector_infnorm(
    n: usize,
    n1: usize,
    dist: &AtomDistribution,
    trials: usize,
    seed: u64,
) -> Result<LemmaReport> {
    if n1 >= n {
        return Err(Error::config(format!("n1 ({n1}) must be below n ({n})")));
    }
    if trials == 0 {
        return Err(Error::config("trials must be positive"));
    }
    let norms = par_map_trials(trials, |t| {
        let mut rng = stream(seed, MATRICES, t).rng();
        null_space_sup_norm(&sample_rows(n1, n, dist, &mut rng))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let med = median(&norms);
    Ok(
        LemmaReport::new("null_vector_infnorm", n, trials, med, 0.0, 0.0, Criterion::ReportOnly)
            .with_extra("n1", n1 as f64)
            .with_extra("min", norms.iter().copied().fold(f64::INFINITY, f64::min))
            .with_extra("max", norms.iter().copied().fold(0.0, f64::max))
            .with_remark(format!("dist={}", dist.name())),
    )
}

/// Ascending singular values.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv
}

/// Number of singular values in `[0, c k / sqrt(n)]`.
pub fn window_count(singular_values: &[f64], n: usize, k: usize, c: f64) -> usize {
    let edge = c * k as f64 / (n as f64).sqrt();
    singular_values.iter().filter(|&&s| s <= edge).count()
}

/// Fraction of trials with at least `2k` singular values in
/// `[0, c k / sqrt(n)]`; gated at 95%. Also reports the calibrated `c*`,
/// the smallest `c` for which 99% of these trials would qualify.
pub fn singular_window_count(
    n: usize,
    k: usize,
    dist: &AtomDistribution,
    trials: usize,
    c: f64,
    seed: u64,
) -> Result<LemmaReport> {
    let ln = (n as f64).ln();
    if (k as f64) < n as f64 / (ln * ln) || 2 * k > n {
        return Err(Error::config(format!(
            "k={k} outside [n/(ln n)^2, n/2] for n={n}"
        )));
    }
    if trials == 0 {
        return Err(Error::config("trials must be positive"));
    }
    let per_trial = par_map_trials(trials, |t| {
        let s = sample_matrix(n, dist, 0, stream(seed, MATRICES, t)).expect("valid sizes");
        let sv = singular_values(&s.entries);
        let count = window_count(&sv, n, k, c);
        // c needed for this trial: sigma_(2k) sqrt(n) / k
        let needed = sv[2 * k - 1] * (n as f64).sqrt() / k as f64;
        (count, needed)
    });
    let hits = per_trial.iter().filter(|(count, _)| *count >= 2 * k).count();
    let mut needed: Vec<f64> = per_trial.iter().map(|(_, c)| *c).collect();
    needed.sort_by(f64::total_cmp);
    let idx = ((0.99 * trials as f64).ceil() as usize).clamp(1, trials) - 1;
    let fraction = hits as f64 / trials as f64;
    let counts: Vec<f64> = per_trial.iter().map(|(c, _)| *c as f64).collect();
    Ok(LemmaReport::new(
        "singular_window_count",
        n,
        trials,
        fraction,
        1.0,
        (fraction * (1.0 - fraction) / trials as f64).sqrt(),
        Criterion::AtLeast { limit: 0.95 },
    )
    .with_extra("k", k as f64)
    .with_extra("c", c)
    .with_extra("c_star", needed[idx])
    .with_extra("median_count", median(&counts))
    .with_remark(format!("dist={}", dist.name())))
}

/// Frequency of `ln|det| <= -n ln n` (singular matrices included), gated at
/// `2/n + 5 SE`. Reports the smallest and median least singular value.
pub fn least_singular_value(n: usize, dist: &AtomDistribution, trials: usize, seed: u64) -> Result<LemmaReport> {
    if trials < 100 {
        return Err(Error::config("least singular value check needs at least 100 trials"));
    }
    let threshold = -(n as f64) * (n as f64).ln();
    let per_trial = par_map_trials(trials, |t| {
        let s = sample_matrix(n, dist, 0, stream(seed, MATRICES, t)).expect("valid sizes");
        let ld = logdet_lu(&s.entries);
        let sigma_min = singular_values(&s.entries)[0];
        (ld.is_singular(), ld.log_abs_det <= threshold, sigma_min)
    });
    let events = per_trial.iter().filter(|p| p.1).count();
    let singular = per_trial.iter().filter(|p| p.0).count();
    let sigmas: Vec<f64> = per_trial.iter().map(|p| p.2).collect();
    let freq = events as f64 / trials as f64;
    let p0 = 2.0 / n as f64;
    let se = (p0 * (1.0 - p0) / trials as f64).sqrt();
    Ok(LemmaReport::new(
        "least_singular_value",
        n,
        trials,
        freq,
        p0,
        se,
        Criterion::AtMost {
            limit: p0 + SE_BAND * se,
        },
    )
    .with_extra("min_sigma", sigmas.iter().copied().fold(f64::INFINITY, f64::min))
    .with_extra("median_sigma", median(&sigmas))
    .with_extra("singular_count", singular as f64)
    .with_remark(format!("dist={}", dist.name())))
}

/// Chi-square variable with `k` degrees of freedom as a sum of squared normals.
pub fn chi_square_by_squares(k: usize, rng: &mut TrialRng) -> f64 {
    (0..k).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum()
}

/// `E[1/chi^2_k] = 1/(k-2)`, checked by direct sampling. Requires `k >= 5`
/// so that the estimator has finite variance.
pub fn tail_last_rows(k: usize, samples: usize, seed: u64) -> Result<LemmaReport> {
    if k < 5 {
        return Err(Error::config(format!("inverse chi-square check needs k >= 5, got {k}")));
    }
    if samples < 2 {
        return Err(Error::config("need at least two samples"));
    }
    let inv = par_map_trials(samples, |j| {
        let mut rng = stream(seed, RESAMPLE, j).rng();
        1.0 / chi_square_by_squares(k, &mut rng)
    });
    let (mean, se) = mean_and_se(&inv);
    Ok(LemmaReport::new(
        "inverse_chi_square",
        k,
        samples,
        mean,
        1.0 / (k as f64 - 2.0),
        se,
        Criterion::Within {
            tolerance: SE_BAND * se,
        },
    ))
}

/// How often the trailing block of a hybrid matrix moves the normalized
/// statistic by at least `(ln n)^(-1/2 + 0.05)`. Report-only.
pub fn tail_block_deviation(n: usize, dist: &AtomDistribution, trials: usize, seed: u64) -> Result<LemmaReport> {
    if n < 3 || trials == 0 {
        return Err(Error::config("tail block deviation needs n >= 3 and trials >= 1"));
    }
    let tail = tail_block_size(n);
    let n0 = n - tail;
    let ln = (n as f64).ln();
    let threshold = ln.powf(-0.5 + 0.05);
    let devs = par_map_trials(trials, |t| {
        let s = sample_matrix(n, dist, tail, stream(seed, MATRICES, t)).expect("valid sizes");
        let trace = decompose_rows(&s, false);
        if trace.degenerate {
            return None;
        }
        let tail_sum: f64 = trace
            .steps
            .iter()
            .filter(|st| st.i >= n0)
            .map(|st| (st.delta_sq / st.k).ln())
            .sum();
        Some(tail_sum.abs() / (2.0 * ln).sqrt())
    });
    let kept: Vec<f64> = devs.into_iter().flatten().collect();
    let freq = kept.iter().filter(|&&d| d >= threshold).count() as f64 / kept.len().max(1) as f64;
    Ok(LemmaReport::new(
        "tail_block_deviation",
        n,
        kept.len(),
        freq,
        (-(ln.powf(0.025))).exp(),
        0.0,
        Criterion::ReportOnly,
    )
    .with_extra("tail_rows", tail as f64)
    .with_extra("threshold", threshold)
    .with_remark(format!("dist={}", dist.name())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseenReport {
    pub ks: KsReport,
    pub v_inf_norm: f64,
}

impl BerryEsseenReport {
    /// `D <= max(0.08, 3 ||v||_inf)`.
    pub fn within_scaling(&self) -> bool {
        self.ks.d <= self.scaling_limit()
    }

    pub fn scaling_limit(&self) -> f64 {
        (3.0 * self.v_inf_norm).max(0.08)
    }
}

/// Two-sample KS between `<v, a>` and `<v, b>` for a fixed unit vector `v`.
pub fn berry_esseen_gap_for(
    v: &[f64],
    dist_a: &AtomDistribution,
    dist_b: &AtomDistribution,
    trials: usize,
    seed: u64,
) -> Result<BerryEsseenReport> {
    let project = |family, dist: &AtomDistribution| {
        par_map_trials(trials, |j| {
            let mut rng = stream(seed, family, j).rng();
            v.iter().map(|vi| vi * dist.sample(&mut rng)).sum::<f64>()
        })
    };
    let a = project(ARM_A, dist_a);
    let b = project(ARM_B, dist_b);
    Ok(BerryEsseenReport {
        ks: ks_two_sample(&a, &b)?,
        v_inf_norm: v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    })
}

/// Freezes an `(n-1) x n` prefix drawn from `dist_a`, takes its unit normal
/// and compares the laws of `<v, a>` and `<v, b>`.
pub fn berry_esseen_gap(
    n: usize,
    dist_a: &AtomDistribution,
    dist_b: &AtomDistribution,
    trials: usize,
    seed: u64,
) -> Result<BerryEsseenReport> {
    if trials < 500 {
        return Err(Error::config("Berry-Esseen comparison needs at least 500 draws"));
    }
    if n < 2 {
        return Err(Error::config("n must be at least 2"));
    }
    let basis = basis_of(&sample_rows(n - 1, n, dist_a, &mut prefix_rng(seed)))?;
    let p = basis.projection_diagonal();
    let s_star = (0..n).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
    let mut e = vec![0.0; n];
    e[s_star] = 1.0;
    let r = basis.residual(&e);
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v: Vec<f64> = r.iter().map(|x| x / norm).collect();
    berry_esseen_gap_for(&v, dist_a, dist_b, trials, seed)
}

/// Aggregates projector-identity violations over diagnostics traces.
pub fn projection_identity_report(n: usize, traces: &[&crate::detcore::DecompositionTrace]) -> LemmaReport {
    let violations: usize = traces.iter().map(|t| t.projection_violations()).sum();
    let steps: usize = traces
        .iter()
        .map(|t| t.steps.iter().filter(|s| s.diag.is_some()).count())
        .sum();
    LemmaReport::new(
        "projection_identities",
        n,
        traces.len(),
        violations as f64,
        0.0,
        0.0,
        Criterion::AtMost { limit: 0.0 },
    )
    .with_extra("steps_checked", steps as f64)
}

/// Convenience for building matrices in tests and the `verify` command.
pub fn sample_for(n: usize, dist: &AtomDistribution, tail: usize, seed: u64, trial: u64) -> MatrixSample {
    sample_matrix(n, dist, tail, stream(seed, MATRICES, trial)).expect("valid sizes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{dkw_epsilon_two_sample, std_normal_cdf};

    #[test]
    fn criterion_rules() {
        assert!(Criterion::Within { tolerance: 0.1 }.evaluate(1.05, 1.0));
        assert!(!Criterion::Within { tolerance: 0.01 }.evaluate(1.05, 1.0));
        assert!(Criterion::AtMost { limit: 1.0 }.evaluate(1.0, 0.0));
        assert!(!Criterion::AtLeast { limit: 0.95 }.evaluate(0.9, 1.0));
        assert!(Criterion::ReportOnly.evaluate(f64::NAN, 0.0));
        let r = LemmaReport::new("x", 1, 1, 2.0, 1.0, 0.1, Criterion::Within { tolerance: 0.5 });
        assert!(!r.pass && !r.recheck());
        assert!(r.notes().starts_with("|obs-pred|<="));
    }

    #[test]
    fn bernoulli_first_row_has_constant_distance() {
        let r = check_distance_moments(16, 0, &AtomDistribution::bernoulli(), 100, 1).unwrap();
        assert_eq!(r.observed, 16.0);
        assert_eq!(r.std_error, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn distance_moments_gaussian_mid_prefix() {
        let r = check_distance_moments(64, 32, &AtomDistribution::gaussian(), 5000, 2).unwrap();
        // chi-square variance 2k gives SE = sqrt(2*32/5000)
        assert!((r.std_error - (64.0f64 / 5000.0).sqrt()).abs() < 0.02);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn distance_moments_preconditions() {
        let b = AtomDistribution::bernoulli();
        assert!(check_distance_moments(16, 13, &b, 100, 0).is_err());
        assert!(check_distance_moments(16, 2, &b, 99, 0).is_err());
    }

    #[test]
    fn conditional_variance_first_row() {
        let r = check_conditional_variance(20, 0, &AtomDistribution::bernoulli(), 10_000, 3).unwrap();
        assert_eq!(r.observed, 0.0);
        assert!(r.predicted.abs() < 1e-15);
        assert!(r.pass);
        let r = check_conditional_variance(20, 0, &AtomDistribution::gaussian(), 10_000, 3).unwrap();
        assert!((r.predicted - 0.1).abs() < 1e-15);
        assert!(r.pass, "{r:?}");
        assert!(check_conditional_variance(20, 0, &AtomDistribution::gaussian(), 9_999, 3).is_err());
    }

    #[test]
    fn conditional_variance_bernoulli_half_prefix() {
        let r = check_conditional_variance(50, 25, &AtomDistribution::bernoulli(), 50_000, 4).unwrap();
        let q = r.extra("qss_sq_sum").unwrap();
        assert!((r.predicted - (2.0 / 25.0 - 2.0 * q)).abs() < 1e-15);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn sum_qss_respects_hard_bound() {
        let r = sum_qss_diag(64, &AtomDistribution::bernoulli(), 20, 5).unwrap();
        assert!(r.pass);
        assert_eq!(r.extra("projection_violations"), Some(0.0));
        assert!(sum_qss_diag(64, &AtomDistribution::bernoulli(), 19, 5).is_err());
    }

    #[test]
    fn hard_bound_value_at_256() {
        let bound = harmonic_range(32, 256);
        assert!((bound - 2.097_099_767).abs() < 1e-8);
    }

    #[test]
    fn coordinate_null_space_is_localized() {
        let n = 5;
        let rows: Vec<Vec<f64>> = (0..n - 1)
            .map(|r| (0..n).map(|c| f64::from(u8::from(r == c))).collect())
            .collect();
        assert_eq!(null_space_sup_norm(&Matrix::from_rows(&rows)).unwrap(), 1.0);
    }

    #[test]
    fn null_vector_matches_eigen_oracle() {
        // Unit normal of a 31x32 block = eigenvector of B^T B for eigenvalue 0.
        let n = 32;
        let mut rng = SeedSpec::new(6, 0).rng();
        let block = sample_rows(n - 1, n, &AtomDistribution::gaussian(), &mut rng);
        let b = block.to_nalgebra();
        let eig = (b.transpose() * &b).symmetric_eigen();
        let idx = eig.eigenvalues.imin();
        let v = eig.eigenvectors.column(idx);
        let oracle = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let ours = null_space_sup_norm(&block).unwrap();
        assert!((ours - oracle).abs() < 1e-9, "{ours} vs {oracle}");
    }

    #[test]
    fn null_vector_rejects_square_block() {
        assert!(null_vector_infnorm(8, 8, &AtomDistribution::gaussian(), 3, 0).is_err());
    }

    #[test]
    fn identity_has_no_small_singular_values() {
        let sv = singular_values(&Matrix::identity(16));
        assert!(sv.iter().all(|s| (s - 1.0).abs() < 1e-12));
        // c k / sqrt(n) = 2 * 1 / 4 < 1
        assert_eq!(window_count(&sv, 16, 1, 2.0), 0);
    }

    #[test]
    fn window_count_range_checked() {
        assert!(singular_window_count(256, 4, &AtomDistribution::gaussian(), 1, 1.0, 0).is_err());
        assert!(singular_window_count(256, 129, &AtomDistribution::gaussian(), 1, 1.0, 0).is_err());
    }

    #[test]
    fn identity_least_singular_value() {
        assert!((singular_values(&Matrix::identity(7))[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_chi_square_small_k() {
        let r = tail_last_rows(10, 20_000, 9).unwrap();
        assert_eq!(r.predicted, 0.125);
        assert!(r.pass, "{r:?}");
        assert!(matches!(tail_last_rows(4, 100, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn berry_esseen_coordinate_vector() {
        let mut e1 = vec![0.0; 4];
        e1[0] = 1.0;
        let b = AtomDistribution::bernoulli();
        let same = berry_esseen_gap_for(&e1, &b, &b, 2000, 10).unwrap();
        assert!(same.ks.d <= dkw_epsilon_two_sample(2000, 2000, 1e-3));
        let diff = berry_esseen_gap_for(&e1, &b, &AtomDistribution::gaussian(), 2000, 10).unwrap();
        let exact = std_normal_cdf(1.0) - 0.5;
        assert!((exact - 0.3413).abs() < 1e-4);
        assert!((diff.ks.d - exact).abs() <= dkw_epsilon_two_sample(2000, 2000, 1e-3));
        assert_eq!(diff.v_inf_norm, 1.0);
    }
}
