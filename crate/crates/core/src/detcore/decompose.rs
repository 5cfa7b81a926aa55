use serde::{Deserialize, Serialize};

use super::basis::{compensated_sum, OrthoBasis};
use crate::ensembles::{split_point, MatrixSample};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Projector quantities at step `i`, computed before row `i+1` is added.
///
/// `q_ss = p_ss / k` where `p_ss` is the diagonal of the projector onto the
/// orthogonal complement of the first `i` rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub qss_sum: f64,
    pub qss_sq_sum: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// `-x^2/2 + 1/k - (1/2) sum_s q_ss^2 (3 - m4)`
    pub y: f64,
    /// `(1/2) sum_s q_ss^2 (3 - m4)`
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub i: usize,
    /// Codimension `n - i`.
    pub k: f64,
    pub delta_sq: f64,
    /// `delta_sq / k - 1`
    pub x: f64,
    /// `ln(1 + x) - (x - x^2/2)`
    pub r: f64,
    pub diag: Option<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTrace {
    pub n: usize,
    pub steps: Vec<StepRecord>,
    /// Set when some row fell numerically inside the span of its
    /// predecessors; the trace stops at that row.
    pub degenerate: bool,
}

/// Violation tolerances for the projector identities.
const QSS_SUM_TOL: f64 = 1e-8;
const P_RANGE_TOL: f64 = 1e-10;
/// `sum q_ss^2 <= 1/k` is tight at `i = 0`; allow rounding in the last bits.
const QSS_SQ_REL_TOL: f64 = 1e-12;

impl DecompositionTrace {
    pub fn sum_log_delta_sq(&self) -> f64 {
        self.steps.iter().map(|s| s.delta_sq.ln()).sum()
    }

    /// Half of `sum ln Delta^2`; `-inf` for a degenerate trace.
    pub fn log_abs_det(&self) -> f64 {
        if self.degenerate {
            f64::NEG_INFINITY
        } else {
            0.5 * self.sum_log_delta_sq()
        }
    }

    /// Number of steps breaking `sum q_ss = 1`, `sum q_ss^2 <= 1/k` or
    /// `p_ss in [0, 1]` (tolerances 1e-8, relative 1e-12, 1e-10).
    pub fn projection_violations(&self) -> usize {
        self.steps
            .iter()
            .filter_map(|s| s.diag.map(|d| (s.k, d)))
            .filter(|(k, d)| {
                (d.qss_sum - 1.0).abs() > QSS_SUM_TOL
                    || d.qss_sq_sum > (1.0 / k) * (1.0 + QSS_SQ_REL_TOL)
                    || d.p_min < -P_RANGE_TOL
                    || d.p_max > 1.0 + P_RANGE_TOL
            })
            .count()
    }
}

/// Row decomposition of a sample; `m4` for each row comes from the law that
/// generated it (Gaussian for hybrid tail rows).
pub fn decompose_rows(sample: &MatrixSample, with_diagnostics: bool) -> DecompositionTrace {
    decompose_matrix(&sample.entries, |r| sample.row_fourth_moment(r), with_diagnostics)
}

pub fn decompose_matrix<F: Fn(usize) -> f64>(
    m: &Matrix,
    row_fourth_moment: F,
    with_diagnostics: bool,
) -> DecompositionTrace {
    assert!(m.is_square(), "decomposition needs a square matrix");
    let n = m.rows();
    let mut basis = OrthoBasis::new(n);
    let mut steps = Vec::with_capacity(n);
    let mut degenerate = false;
    for i in 0..n {
        let k = (n - i) as f64;
        let pre = with_diagnostics.then(|| {
            let p = basis.projection_diagonal();
            let qss_sum = compensated_sum(p.iter().map(|v| v / k));
            let qss_sq_sum = compensated_sum(p.iter().map(|v| (v / k) * (v / k)));
            let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
            let p_max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (qss_sum, qss_sq_sum, p_min, p_max)
        });
        let (delta_sq, accepted) = basis.push(m.row(i));
        let x = delta_sq / k - 1.0;
        let r = x.ln_1p() - (x - 0.5 * x * x);
        let diag = pre.map(|(qss_sum, qss_sq_sum, p_min, p_max)| {
            let z = 0.5 * qss_sq_sum * (3.0 - row_fourth_moment(i));
            StepDiagnostics {
                qss_sum,
                qss_sq_sum,
                p_min,
                p_max,
                y: -0.5 * x * x + 1.0 / k - z,
                z,
            }
        });
        steps.push(StepRecord {
            i,
            k,
            delta_sq,
            x,
            r,
            diag,
        });
        if !accepted {
            degenerate = true;
            break;
        }
    }
    DecompositionTrace {
        n,
        steps,
        degenerate,
    }
}

/// Sums of the three pieces of `ln(Delta^2/k) = X - X^2/2 + R` over the
/// steps `i < n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorSums {
    pub n0: usize,
    pub sum_x: f64,
    pub sum_half_x_sq: f64,
    pub sum_r: f64,
    /// `sum ln(Delta^2 / k)` over the same steps.
    pub sum_log_ratio: f64,
}

/// Taylor split over `i < n0` with `n0 = n - ceil((ln n)^2)`.
pub fn taylor_split(trace: &DecompositionTrace) -> Result<TaylorSums> {
    taylor_split_until(trace, split_point(trace.n))
}

pub fn taylor_split_until(trace: &DecompositionTrace, n0: usize) -> Result<TaylorSums> {
    if trace.degenerate {
        return Err(Error::DegenerateTrace);
    }
    let head = trace.steps.iter().filter(|s| s.i < n0);
    let mut sums = TaylorSums {
        n0,
        sum_x: 0.0,
        sum_half_x_sq: 0.0,
        sum_r: 0.0,
        sum_log_ratio: 0.0,
    };
    for s in head {
        sums.sum_x += s.x;
        sums.sum_half_x_sq += 0.5 * s.x * s.x;
        sums.sum_r += s.r;
        sums.sum_log_ratio += (s.delta_sq / s.k).ln();
    }
    Ok(sums)
}

/// Diagonal `p_ss` of the projector onto the orthogonal complement of the
/// span of `rows`.
pub fn projection_diagonal(rows: &Matrix) -> Result<Vec<f64>> {
    let mut basis = OrthoBasis::new(rows.cols());
    for r in 0..rows.rows() {
        if !basis.push(rows.row(r)).1 {
            return Err(Error::NotFullRank { row: r });
        }
    }
    Ok(basis.projection_diagonal())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDiagnostics {
    /// Mean over traces of `sum_{i<n0} x_i^2`.
    pub s_sq: f64,
    /// Mean over traces of `sum_{i<n0} (2/k_i - sum_s q_ss^2 (3 - m4))`.
    pub v_sq: f64,
    /// `max |x_i|` over all pooled steps `i < n0`.
    pub gamma_max: f64,
    pub traces_used: usize,
}

/// Pools traces of one `(n, ensemble)`; degenerate traces are skipped.
/// Steps without diagnostics contribute `2/k` to `v_sq`.
pub fn martingale_diagnostics(traces: &[DecompositionTrace], n: usize) -> MartingaleDiagnostics {
    martingale_diagnostics_until(traces, split_point(n))
}

pub fn martingale_diagnostics_until(traces: &[DecompositionTrace], n0: usize) -> MartingaleDiagnostics {
    let mut s_total = 0.0;
    let mut v_total = 0.0;
    let mut gamma_max: f64 = 0.0;
    let mut used = 0usize;
    for t in traces.iter().filter(|t| !t.degenerate) {
        used += 1;
        for s in t.steps.iter().filter(|s| s.i < n0) {
            s_total += s.x * s.x;
            v_total += 2.0 / s.k - 2.0 * s.diag.map_or(0.0, |d| d.z);
            gamma_max = gamma_max.max(s.x.abs());
        }
    }
    let denom = used.max(1) as f64;
    MartingaleDiagnostics {
        s_sq: s_total / denom,
        v_sq: v_total / denom,
        gamma_max,
        traces_used: used,
    }
}
