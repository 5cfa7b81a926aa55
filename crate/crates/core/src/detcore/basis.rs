/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of a growing row span, kept by modified Gram-Schmidt
/// with one reorthogonalization pass.
///
/// Also tracks the squared column norms `sum_j Q[j][s]^2`, so the diagonal of
/// the complementary projector is `p_ss = 1 - colsq[s]` without forming it.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    dim: usize,
    vectors: Vec<f64>,
    colsq: Vec<f64>,
}

impl OrthoBasis {
    pub fn new(dim: usize) -> Self {
        OrthoBasis {
            dim,
            vectors: Vec::new(),
            colsq: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }

    /// Component of `a` orthogonal to the span (two MGS passes).
    pub fn residual(&self, a: &[f64]) -> Vec<f64> {
        let mut r = a.to_vec();
        for _ in 0..2 {
            for q in self.vectors.chunks_exact(self.dim) {
                let c = dot(q, &r);
                for (x, &qi) in r.iter_mut().zip(q) {
                    *x -= c * qi;
                }
            }
        }
        r
    }

    /// `||a||^2 - ||Q a||^2`, clamped at zero. One classical projection pass;
    /// adequate for resampling against a fixed, well-conditioned prefix.
    pub fn distance_sq(&self, a: &[f64]) -> f64 {
        let norm = compensated_sum(a.iter().map(|x| x * x));
        let proj = compensated_sum(self.vectors.chunks_exact(self.dim).map(|q| {
            let c = dot(q, a);
            c * c
        }));
        (norm - proj).max(0.0)
    }

    /// Orthogonalizes `a` against the span and appends it.
    ///
    /// Returns the squared distance `Delta^2` and whether the row was
    /// accepted. A row with `Delta^2 <= dim * eps * ||a||^2` is numerically
    /// inside the span and is not added.
    pub fn push(&mut self, a: &[f64]) -> (f64, bool) {
        assert_eq!(a.len(), self.dim);
        let norm_sq = compensated_sum(a.iter().map(|x| x * x));
        let r = self.residual(a);
        let delta_sq = compensated_sum(r.iter().map(|x| x * x)).max(0.0);
        if delta_sq <= self.dim as f64 * f64::EPSILON * norm_sq || delta_sq == 0.0 {
            return (delta_sq, false);
        }
        let inv = 1.0 / delta_sq.sqrt();
        for (s, x) in r.iter().enumerate() {
            let q = x * inv;
            self.colsq[s] += q * q;
            self.vectors.push(q);
        }
        (delta_sq, true)
    }

    /// Diagonal `p_ss` of the projector onto the orthogonal complement.
    pub fn projection_diagonal(&self) -> Vec<f64> {
        self.colsq.iter().map(|c| 1.0 - c).collect()
    }

    pub fn column_norms_sq(&self) -> &[f64] {
        &self.colsq
    }
}
