//! Atom distributions, matrix sampling and the truncate/center/rescale and
//! smoothing transforms.

use std::f64::consts::{E, PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quadrature;
use crate::seed::SeedSpec;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Relative accuracy target for truncated moments.
const MOMENT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum AtomKind {
    /// Uniform on {-1, +1}.
    Bernoulli,
    /// Standard normal.
    Gaussian,
    /// Uniform on [-sqrt 3, sqrt 3].
    UniformScaled,
    /// `(a * 1{|a| <= level} - shift) / scale` for `a` drawn from `base`.
    Truncated {
        base: Box<AtomDistribution>,
        level: f64,
        shift: f64,
        scale: f64,
    },
    /// `sqrt(1 - eps^2) * a + eps * u` with `u` uniform on [-sqrt 3, sqrt 3].
    Smoothed { base: Box<AtomDistribution>, eps: f64 },
}

/// A zero-mean, unit-variance entry law with its analytic metadata.
///
/// `tail_c1` and `tail_c2` are the constants of the sub-exponential tail
/// condition `P(|a| >= t) <= c1 * exp(-t^c2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomDistribution {
    pub kind: AtomKind,
    pub mean: f64,
    pub variance: f64,
    pub fourth_moment: f64,
    pub tail_c1: f64,
    pub tail_c2: f64,
    /// Almost-sure absolute bound; `f64::INFINITY` when unbounded.
    pub bound: f64,
}

impl AtomDistribution {
    pub fn bernoulli() -> Self {
        AtomDistribution {
            kind: AtomKind::Bernoulli,
            mean: 0.0,
            variance: 1.0,
            fourth_moment: 1.0,
            tail_c1: E,
            tail_c2: 2.0,
            bound: 1.0,
        }
    }

    pub fn gaussian() -> Self {
        // 2 exp(-t^2/2) <= 2 sqrt(e) exp(-t) since t^2/2 >= t - 1/2.
        AtomDistribution {
            kind: AtomKind::Gaussian,
            mean: 0.0,
            variance: 1.0,
            fourth_moment: 3.0,
            tail_c1: 2.0 * E.sqrt(),
            tail_c2: 1.0,
            bound: f64::INFINITY,
        }
    }

    pub fn uniform_scaled() -> Self {
        AtomDistribution {
            kind: AtomKind::UniformScaled,
            mean: 0.0,
            variance: 1.0,
            fourth_moment: 9.0 / 5.0,
            tail_c1: (3.0f64).exp(),
            tail_c2: 2.0,
            bound: SQRT_3,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            AtomKind::Bernoulli => "bernoulli".into(),
            AtomKind::Gaussian => "gaussian".into(),
            AtomKind::UniformScaled => "uniform_scaled".into(),
            AtomKind::Truncated { base, level, .. } => format!("truncated({},{level})", base.name()),
            AtomKind::Smoothed { base, eps } => format!("smoothed({},{eps})", base.name()),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.bound.is_finite()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            AtomKind::Bernoulli => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            AtomKind::Gaussian => rng.sample(StandardNormal),
            AtomKind::UniformScaled => uniform_unit(rng),
            AtomKind::Truncated {
                base,
                level,
                shift,
                scale,
            } => {
                let a = base.sample(rng);
                let kept = if a.abs() <= *level { a } else { 0.0 };
                (kept - shift) / scale
            }
            AtomKind::Smoothed { base, eps } => {
                let a = base.sample(rng);
                (1.0 - eps * eps).sqrt() * a + eps * uniform_unit(rng)
            }
        }
    }

    /// Tail bound `c1 * exp(-t^c2)` declared for this law.
    pub fn tail_bound(&self, t: f64) -> f64 {
        self.tail_c1 * (-t.max(0.0).powf(self.tail_c2)).exp()
    }

    /// Finite-n truncation level `(ln n)^max(1, 3/c2)`.
    pub fn truncation_level(&self, n: usize) -> f64 {
        (n as f64).ln().powf((3.0 / self.tail_c2).max(1.0))
    }

    /// Moments of `a * 1{|a| <= level}`: entries are `E[a^p 1{|a| <= level}]`
    /// for `p = 1..=4` (index 0 holds `P(|a| <= level)`).
    fn restricted_moments(&self, level: f64) -> Result<[f64; 5]> {
        let mut out = [0.0; 5];
        match &self.kind {
            AtomKind::Bernoulli => {
                if level >= 1.0 {
                    out = [1.0, 0.0, 1.0, 0.0, 1.0];
                }
            }
            AtomKind::Gaussian => {
                // Beyond |x| = 40 the density underflows relative to any moment.
                let edge = level.min(40.0);
                let panels = (2.0 * edge).ceil() as usize;
                for (p, slot) in out.iter_mut().enumerate() {
                    *slot = quadrature::integrate_panels(
                        |x| x.powi(p as i32) * std_normal_pdf(x),
                        -edge,
                        edge,
                        panels,
                        MOMENT_TOL,
                    );
                }
            }
            AtomKind::UniformScaled => {
                let edge = level.min(SQRT_3);
                for (p, slot) in out.iter_mut().enumerate() {
                    *slot = quadrature::integrate(
                        |x| x.powi(p as i32) / (2.0 * SQRT_3),
                        -edge,
                        edge,
                        MOMENT_TOL,
                    );
                }
            }
            // Only reached when level cuts into the support; truncation is
            // applied to base laws before any smoothing.
            AtomKind::Truncated { .. } | AtomKind::Smoothed { .. } => {
                return Err(Error::config(format!(
                    "cannot truncate {} below its bound {}",
                    self.name(),
                    self.bound
                )));
            }
        }
        Ok(out)
    }
}

fn uniform_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    SQRT_3 * (2.0 * rng.random::<f64>() - 1.0)
}

/// Analytic second and fourth moments of an atom law.
pub fn atom_moments(dist: &AtomDistribution) -> (f64, f64) {
    (dist.variance, dist.fourth_moment)
}

/// Truncates at `level`, then re-centers and rescales to unit variance.
///
/// A law whose support already lies within `level` is returned unchanged.
pub fn truncate_center_rescale(dist: &AtomDistribution, level: f64) -> Result<AtomDistribution> {
    if !level.is_finite() || level <= 0.0 {
        return Err(Error::config(format!("truncation level must be positive and finite, got {level}")));
    }
    if dist.bound <= level {
        return Ok(dist.clone());
    }
    let m = dist.restricted_moments(level)?;
    let mu = m[1];
    let var = m[2] - mu * mu;
    let sigma = var.max(0.0).sqrt();
    if sigma < 1e-6 {
        return Err(Error::DegenerateDistribution { sigma });
    }
    // Central fourth moment of the truncated variable (mass outside sits at 0).
    let central4 = m[4] - 4.0 * mu * m[3] + 6.0 * mu * mu * m[2] - 3.0 * mu.powi(4);
    let bound = (level + mu.abs()) / sigma;
    Ok(AtomDistribution {
        kind: AtomKind::Truncated {
            base: Box::new(dist.clone()),
            level,
            shift: mu,
            scale: sigma,
        },
        mean: 0.0,
        variance: 1.0,
        fourth_moment: central4 / (sigma * sigma * sigma * sigma),
        tail_c1: (bound * bound).exp(),
        tail_c2: 2.0,
        bound,
    })
}

/// Mixes a small uniform perturbation into every entry so the law becomes
/// absolutely continuous. `eps = 0` returns the law unchanged.
pub fn epsilon_smooth(dist: &AtomDistribution, eps: f64) -> Result<AtomDistribution> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::config(format!("eps must lie in [0, 1), got {eps}")));
    }
    if eps == 0.0 {
        return Ok(dist.clone());
    }
    let w = 1.0 - eps * eps;
    let e2 = eps * eps;
    let m4 = w * w * dist.fourth_moment + 6.0 * w * e2 + e2 * e2 * 9.0 / 5.0;
    let shift = eps * SQRT_3;
    let (bound, c1, c2) = if dist.is_bounded() {
        let b = w.sqrt() * dist.bound + shift;
        (b, (b * b).exp(), 2.0)
    } else {
        // P(|sqrt(w) a + eps u| >= t) <= P(|a| >= t - shift) for w <= 1.
        (f64::INFINITY, dist.tail_c1 * shift.exp(), dist.tail_c2.min(1.0))
    };
    Ok(AtomDistribution {
        kind: AtomKind::Smoothed {
            base: Box::new(dist.clone()),
            eps,
        },
        mean: 0.0,
        variance: 1.0,
        fourth_moment: m4,
        tail_c1: c1,
        tail_c2: c2,
        bound,
    })
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (SQRT_2 * PI.sqrt())
}

/// Size of the trailing Gaussian block, `ceil((ln n)^2)` clamped to `n`.
pub fn tail_block_size(n: usize) -> usize {
    let ln = (n as f64).ln();
    ((ln * ln).ceil() as usize).min(n)
}

/// Split point `n0 = n - tail_block_size(n)`.
pub fn split_point(n: usize) -> usize {
    n - tail_block_size(n)
}

/// `n1 = n - ceil(n / (ln n)^4)`, the row count of the delocalization block.
pub fn delocalization_rows(n: usize) -> usize {
    let ln = (n as f64).ln();
    let cut = ((n as f64) / ln.powi(4)).ceil() as usize;
    n.saturating_sub(cut.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Bernoulli,
    Gaussian,
    UniformScaled,
}

impl BaseKind {
    pub fn atom(self) -> AtomDistribution {
        match self {
            BaseKind::Bernoulli => AtomDistribution::bernoulli(),
            BaseKind::Gaussian => AtomDistribution::gaussian(),
            BaseKind::UniformScaled => AtomDistribution::uniform_scaled(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "bernoulli" => Some(BaseKind::Bernoulli),
            "gaussian" => Some(BaseKind::Gaussian),
            "uniform_scaled" => Some(BaseKind::UniformScaled),
            _ => None,
        }
    }
}

/// Serialized ensemble descriptor:
/// `{"kind": "...", "level": ..., "eps": ..., "hybrid_tail_rows": ...}`.
///
/// The atom law is `kind`, truncated at `level` (if set), then smoothed by
/// `eps` (if set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: BaseKind,
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub hybrid_tail_rows: Option<usize>,
}

impl EnsembleSpec {
    pub fn new(kind: BaseKind) -> Self {
        EnsembleSpec {
            kind,
            level: None,
            eps: None,
            hybrid_tail_rows: None,
        }
    }

    pub fn atom(&self) -> Result<AtomDistribution> {
        let mut dist = self.kind.atom();
        if let Some(level) = self.level {
            dist = truncate_center_rescale(&dist, level)?;
        }
        if let Some(eps) = self.eps {
            dist = epsilon_smooth(&dist, eps)?;
        }
        Ok(dist)
    }
}

/// One sampled `n x n` matrix with its provenance.
#[derive(Debug, Clone)]
pub struct MatrixSample {
    pub n: usize,
    pub entries: Matrix,
    pub ensemble: AtomDistribution,
    pub hybrid_tail_rows: usize,
    pub seed: SeedSpec,
}

impl MatrixSample {
    /// Fourth moment of the law that generated row `r`.
    pub fn row_fourth_moment(&self, r: usize) -> f64 {
        if r >= self.n - self.hybrid_tail_rows {
            3.0
        } else {
            self.ensemble.fourth_moment
        }
    }

    /// Wraps an existing matrix, e.g. a deterministic test case.
    pub fn from_matrix(entries: Matrix, ensemble: AtomDistribution) -> Self {
        assert!(entries.is_square(), "matrix sample must be square");
        MatrixSample {
            n: entries.rows(),
            entries,
            ensemble,
            hybrid_tail_rows: 0,
            seed: SeedSpec::new(0, 0),
        }
    }
}

/// Samples an `n x n` matrix whose last `hybrid_tail_rows` rows are standard
/// Gaussian and whose other rows are i.i.d. draws of `dist`. Entries are drawn
/// row by row from the trial's stream.
pub fn sample_matrix(
    n: usize,
    dist: &AtomDistribution,
    hybrid_tail_rows: usize,
    seed: SeedSpec,
) -> Result<MatrixSample> {
    if n == 0 {
        return Err(Error::config("matrix size n must be at least 1"));
    }
    if hybrid_tail_rows > n {
        return Err(Error::config(format!(
            "hybrid_tail_rows ({hybrid_tail_rows}) exceeds n ({n})"
        )));
    }
    let mut rng = seed.rng();
    let gaussian = AtomDistribution::gaussian();
    let mut entries = Matrix::zeros(n, n);
    for r in 0..n {
        let law = if r >= n - hybrid_tail_rows { &gaussian } else { dist };
        for v in entries.row_mut(r) {
            *v = law.sample(&mut rng);
        }
    }
    Ok(MatrixSample {
        n,
        entries,
        ensemble: dist.clone(),
        hybrid_tail_rows,
        seed,
    })
}
