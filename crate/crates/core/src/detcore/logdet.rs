use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetSign {
    Negative,
    Zero,
    Positive,
}

impl DetSign {
    pub fn as_i8(self) -> i8 {
        match self {
            DetSign::Negative => -1,
            DetSign::Zero => 0,
            DetSign::Positive => 1,
        }
    }

    fn flip(self) -> Self {
        match self {
            DetSign::Negative => DetSign::Positive,
            DetSign::Positive => DetSign::Negative,
            DetSign::Zero => DetSign::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogDetMethod {
    Lu,
    Qr,
}

/// `ln |det|` with its sign. A singular matrix carries `-inf` and `DetSign::Zero`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDetResult {
    pub log_abs_det: f64,
    pub sign: DetSign,
    pub method: LogDetMethod,
}

impl LogDetResult {
    fn singular(method: LogDetMethod) -> Self {
        LogDetResult {
            log_abs_det: f64::NEG_INFINITY,
            sign: DetSign::Zero,
            method,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.sign == DetSign::Zero
    }
}

fn singularity_tolerance(m: &Matrix) -> f64 {
    m.rows() as f64 * f64::EPSILON * m.max_row_norm()
}

/// Gaussian elimination with partial pivoting.
pub fn logdet_lu(m: &Matrix) -> LogDetResult {
    assert!(m.is_square(), "logdet of a non-square matrix");
    let n = m.rows();
    let tol = singularity_tolerance(m);
    let mut a = m.clone();
    let mut sign = DetSign::Positive;
    let mut log_abs = 0.0;
    for j in 0..n {
        let (p, pivot_abs) = (j..n)
            .map(|r| (r, a[(r, j)].abs()))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= tol {
            return LogDetResult::singular(LogDetMethod::Lu);
        }
        if p != j {
            a.swap_rows(p, j);
            sign = sign.flip();
        }
        let pivot = a[(j, j)];
        if pivot < 0.0 {
            sign = sign.flip();
        }
        log_abs += pivot_abs.ln();
        let pivot_row: Vec<f64> = a.row(j)[j + 1..].to_vec();
        for r in j + 1..n {
            let row = a.row_mut(r);
            let factor = row[j] / pivot;
            if factor != 0.0 {
                for (x, &u) in row[j + 1..].iter_mut().zip(&pivot_row) {
                    *x -= factor * u;
                }
            }
        }
    }
    LogDetResult {
        log_abs_det: log_abs,
        sign,
        method: LogDetMethod::Lu,
    }
}

/// Householder QR; `ln |det| = sum ln |R_jj|`, sign from the reflection count.
///
/// Works on the transpose so that each Householder column is a contiguous
/// row; `det A^T = det A`.
pub fn logdet_qr(m: &Matrix) -> LogDetResult {
    assert!(m.is_square(), "logdet of a non-square matrix");
    let n = m.rows();
    let tol = singularity_tolerance(m);
    // at.row(j) is column j of the original matrix.
    let mut at = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            at[(c, r)] = m[(r, c)];
        }
    }
    let mut sign = DetSign::Positive;
    let mut log_abs = 0.0;
    let mut v = vec![0.0; n];
    for j in 0..n {
        let col = &at.row(j)[j..];
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= tol {
            return LogDetResult::singular(LogDetMethod::Qr);
        }
        let x0 = col[0];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        // v = x - alpha e1
        let v = &mut v[..n - j];
        v.copy_from_slice(col);
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            sign = sign.flip();
            for c in j + 1..n {
                let target = &mut at.row_mut(c)[j..];
                let dot: f64 = target.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                let s = 2.0 * dot / vtv;
                for (t, &vi) in target.iter_mut().zip(v.iter()) {
                    *t -= s * vi;
                }
            }
        }
        let r_jj = if vtv > 0.0 { alpha } else { x0 };
        if r_jj < 0.0 {
            sign = sign.flip();
        }
        log_abs += r_jj.abs().ln();
    }
    LogDetResult {
        log_abs_det: log_abs,
        sign,
        method: LogDetMethod::Qr,
    }
}

/// `ln (n-1)! = sum_{k=1}^{n-1} ln k`, summed exactly term by term.
pub fn log_factorial(m: usize) -> f64 {
    (2..=m).map(|k| (k as f64).ln()).sum()
}

/// `(2 ln|det| - ln (n-1)!) / sqrt(2 ln n)`.
pub fn normalize_statistic(logdet: &LogDetResult, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::config("normalized statistic needs n >= 2"));
    }
    if logdet.is_singular() {
        return Err(Error::SingularStatistic);
    }
    Ok((2.0 * logdet.log_abs_det - log_factorial(n - 1)) / (2.0 * (n as f64).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_matrix, AtomDistribution};
    use crate::seed::SeedSpec;

    /// Cofactor expansion; exponential cost, used only for tiny matrices.
    fn det_by_cofactors(m: &Matrix) -> f64 {
        let n = m.rows();
        if n == 1 {
            return m[(0, 0)];
        }
        (0..n)
            .map(|c| {
                let minor_rows: Vec<Vec<f64>> = (1..n)
                    .map(|r| (0..n).filter(|&k| k != c).map(|k| m[(r, k)]).collect())
                    .collect();
                let sgn = if c % 2 == 0 { 1.0 } else { -1.0 };
                sgn * m[(0, c)] * det_by_cofactors(&Matrix::from_rows(&minor_rows))
            })
            .sum()
    }

    #[test]
    fn identity_and_diagonal() {
        for f in [logdet_lu, logdet_qr] {
            let r = f(&Matrix::identity(5));
            assert_eq!(r.log_abs_det.abs(), 0.0);
            assert_ne!(r.sign, DetSign::Zero);
            let r = f(&Matrix::diag(&[1.0, 2.0, 3.0]));
            assert!((r.log_abs_det - 6f64.ln()).abs() < 1e-14);
            assert!((r.log_abs_det - 1.791_759).abs() < 1e-6);
        }
        assert_eq!(logdet_lu(&Matrix::identity(5)).sign, DetSign::Positive);
    }

    #[test]
    fn rank_one_is_singular() {
        let m = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        for f in [logdet_lu, logdet_qr] {
            let r = f(&m);
            assert_eq!(r.sign, DetSign::Zero);
            assert_eq!(r.log_abs_det, f64::NEG_INFINITY);
        }
    }

    #[test]
    fn antidiagonal() {
        let m = Matrix::from_rows(&[[0.0, 2.0], [3.0, 0.0]]);
        for f in [logdet_lu, logdet_qr] {
            let r = f(&m);
            assert!((r.log_abs_det - 6f64.ln()).abs() < 1e-14);
            assert_eq!(r.sign, DetSign::Negative);
        }
    }

    #[test]
    fn signs_match_cofactor_expansion() {
        for t in 0..50 {
            let s = sample_matrix(5, &AtomDistribution::gaussian(), 0, SeedSpec::new(3, t)).unwrap();
            let det = det_by_cofactors(&s.entries);
            for f in [logdet_lu, logdet_qr] {
                let r = f(&s.entries);
                assert_eq!(r.sign.as_i8() as f64, det.signum());
                assert!((r.log_abs_det - det.abs().ln()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lu_and_qr_agree_on_gaussian_matrices() {
        let n = 100;
        for t in 0..200 {
            let s = sample_matrix(n, &AtomDistribution::gaussian(), 0, SeedSpec::new(8, t)).unwrap();
            let lu = logdet_lu(&s.entries);
            let qr = logdet_qr(&s.entries);
            assert!((lu.log_abs_det - qr.log_abs_det).abs() <= 1e-8 * n as f64);
            assert_eq!(lu.sign, qr.sign);
        }
    }

    #[test]
    fn normalization_examples() {
        let lu = logdet_lu(&Matrix::identity(2));
        assert_eq!(normalize_statistic(&lu, 2).unwrap(), 0.0);
        let r = LogDetResult {
            log_abs_det: 0.5,
            sign: DetSign::Positive,
            method: LogDetMethod::Lu,
        };
        let v = normalize_statistic(&r, 3).unwrap();
        let expected = (1.0 - 2f64.ln()) / (2.0 * 3f64.ln()).sqrt();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.207_011).abs() < 1e-6);
        let singular = LogDetResult::singular(LogDetMethod::Lu);
        assert!(matches!(normalize_statistic(&singular, 3), Err(Error::SingularStatistic)));
        assert!(normalize_statistic(&r, 1).is_err());
    }

    #[test]
    fn log_factorial_small() {
        assert_eq!(log_factorial(0), 0.0);
        assert_eq!(log_factorial(1), 0.0);
        assert!((log_factorial(5) - 120f64.ln()).abs() < 1e-14);
    }
}
