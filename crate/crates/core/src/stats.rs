//! Normal CDF, empirical CDFs, Kolmogorov-Smirnov statistics and DKW bounds.

use serde::{Deserialize, Serialize};

use crate::ensembles::std_normal_pdf;
use crate::error::{Error, Result};

/// Below this `|x|` the Taylor series of Marsaglia (2004) is used, above it
/// the Laplace continued fraction for the Mills ratio.
const SERIES_LIMIT: f64 = 5.0;
const CONTINUED_FRACTION_TERMS: u32 = 120;

/// `Phi(-t)` for `t >= 0`.
fn lower_tail(t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if t.is_infinite() {
        return 0.0;
    }
    if t <= SERIES_LIMIT {
        // Phi(t) = 1/2 + phi(t) * sum_k t^(2k+1) / (1*3*...*(2k+1))
        let t2 = t * t;
        let mut term = t;
        let mut sum = t;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= t2 / (2.0 * k + 1.0);
            sum += term;
            k += 1.0;
        }
        0.5 - std_normal_pdf(t) * sum
    } else {
        // Phi(-t) = phi(t) / (t + 1/(t + 2/(t + 3/(t + ...))))
        let mut f = t;
        for k in (1..=CONTINUED_FRACTION_TERMS).rev() {
            f = t + k as f64 / f;
        }
        std_normal_pdf(t) / f
    }
}

/// Standard normal CDF, absolute error below 1e-15 on the real line.
///
/// Evaluated through the lower tail so `Phi(-x) = 1 - Phi(x)` holds to
/// rounding and small tail probabilities keep full relative precision.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        lower_tail(-x)
    } else {
        1.0 - lower_tail(x)
    }
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted_values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(EmpiricalCdf {
            sorted_values: sorted_copy(samples),
        })
    }

    pub fn count(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    /// `#{values <= x} / count`.
    pub fn eval(&self, x: f64) -> f64 {
        let below = self.sorted_values.partition_point(|&v| v <= x);
        below as f64 / self.count() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsReference {
    StdNormal,
    TwoSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub d: f64,
    pub count_a: usize,
    pub count_b: Option<usize>,
    pub reference: KsReference,
}

impl KsReport {
    /// Half-width `eps` with `P(D > eps) <= delta` under the null.
    ///
    /// One sample: `sqrt(ln(2/delta) / (2T))`. Two samples of sizes `m`, `n`:
    /// `sqrt(ln(2/delta) (m+n) / (2mn))`.
    pub fn dkw_epsilon(&self, delta: f64) -> f64 {
        match self.count_b {
            None => dkw_epsilon(self.count_a, delta),
            Some(b) => dkw_epsilon_two_sample(self.count_a, b, delta),
        }
    }
}

pub fn dkw_epsilon(count: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * count as f64)).sqrt()
}

pub fn dkw_epsilon_two_sample(m: usize, n: usize, delta: f64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    ((2.0 / delta).ln() * (m + n) / (2.0 * m * n)).sqrt()
}

/// Exact one-sample Kolmogorov-Smirnov distance to the standard normal.
pub fn ks_one_sample(samples: &[f64]) -> Result<KsReport> {
    ks_one_sample_against(samples, std_normal_cdf)
}

/// One-sample distance against an arbitrary continuous CDF.
pub fn ks_one_sample_against<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsReport> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("KS input must be finite; drop singular sentinels first"));
    }
    let sorted = sorted_copy(samples);
    let t = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i as f64 + 1.0) / t - f;
            let below = f - i as f64 / t;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(KsReport {
        d: d.clamp(0.0, 1.0),
        count_a: sorted.len(),
        count_b: None,
        reference: KsReference::StdNormal,
    })
}

/// Exact two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let a = sorted_copy(a);
    let b = sorted_copy(b);
    let (m, n) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    // Once one side is exhausted the gap only shrinks toward zero.
    Ok(KsReport {
        d,
        count_a: a.len(),
        count_b: Some(b.len()),
        reference: KsReference::TwoSample,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Unbiased (n - 1) variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Moment summary. Skewness and kurtosis use the population central
/// moments and are reported as 0 for a constant sample.
pub fn ecdf_summary(samples: &[f64]) -> Result<Summary> {
    if samples.len() < 2 {
        return Err(Error::EmptySample);
    }
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / t;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (t - 1.0);
    let (m2, m3, m4) = (m2 / t, m3 / t, m4 / t);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(Summary {
        mean,
        variance,
        skewness,
        excess_kurtosis,
    })
}

/// Mean and standard error of the mean.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / t;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Median of a nonempty slice (average of the middle pair for even length).
pub fn median(samples: &[f64]) -> f64 {
    let v = sorted_copy(samples);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use crate::seed::SeedSpec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_draws(count: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeedSpec::new(seed, 0).rng();
        (0..count).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn cdf_at_zero_and_one() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        let oracle = 0.5 + quadrature::integrate(std_normal_pdf, 0.0, 1.0, 1e-16);
        assert!((oracle - 0.841_344_746).abs() < 1e-9);
        assert!((std_normal_cdf(1.0) - oracle).abs() < 1e-13);
    }

    #[test]
    fn cdf_matches_quadrature_across_range() {
        for i in -70..=70 {
            let x = i as f64 * 0.1;
            let oracle = 0.5 + quadrature::integrate(std_normal_pdf, 0.0, x, 1e-16);
            assert!((std_normal_cdf(x) - oracle).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn deep_tail() {
        let p = std_normal_cdf(-8.0);
        // Mills ratio bounds: phi(t)(1/t - 1/t^3) <= Phi(-t) <= phi(t)/t.
        let t = 8.0;
        let upper = std_normal_pdf(t) / t;
        let lower = std_normal_pdf(t) * (1.0 / t - 1.0 / t.powi(3));
        assert!(p <= 1e-14);
        assert!(p <= upper && p >= lower);
        assert!((std_normal_cdf(5.0) - (1.0 - std_normal_cdf(-5.0))).abs() < 1e-15);
        // Both evaluation paths agree at the switch point.
        let t = SERIES_LIMIT;
        let mut f = t;
        for k in (1..=CONTINUED_FRACTION_TERMS).rev() {
            f = t + k as f64 / f;
        }
        assert!((std_normal_pdf(t) / f - lower_tail(t)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn cdf_symmetry_and_monotonicity(x in -12.0f64..12.0, dx in 0.0f64..1.0) {
            prop_assert!((std_normal_cdf(-x) - (1.0 - std_normal_cdf(x))).abs() <= 1e-15);
            prop_assert!(std_normal_cdf(x + dx) >= std_normal_cdf(x));
        }

        #[test]
        fn ks_is_permutation_invariant_and_two_sample_symmetric(
            mut a in prop::collection::vec(-5.0f64..5.0, 1..40),
            b in prop::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let d1 = ks_one_sample(&a).unwrap().d;
            let d2 = ks_two_sample(&a, &b).unwrap().d;
            prop_assert_eq!(d2, ks_two_sample(&b, &a).unwrap().d);
            prop_assert_eq!(ks_two_sample(&a, &a).unwrap().d, 0.0);
            a.reverse();
            prop_assert_eq!(d1, ks_one_sample(&a).unwrap().d);
            prop_assert_eq!(d2, ks_two_sample(&a, &b).unwrap().d);
            prop_assert!((0.0..=1.0).contains(&d1));
        }

        #[test]
        fn two_sample_matches_brute_force(
            a in prop::collection::vec(-3i32..3, 1..20),
            b in prop::collection::vec(-3i32..3, 1..20),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let fa = EmpiricalCdf::new(&a).unwrap();
            let fb = EmpiricalCdf::new(&b).unwrap();
            let brute = a.iter().chain(&b)
                .map(|&x| (fa.eval(x) - fb.eval(x)).abs())
                .fold(0.0, f64::max);
            prop_assert!((ks_two_sample(&a, &b).unwrap().d - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn one_sample_small_cases() {
        assert_eq!(ks_one_sample(&[0.0]).unwrap().d, 0.5);
        let d = ks_one_sample(&[-1.0, 0.0, 1.0]).unwrap().d;
        let expected = 1.0 / 3.0 - std_normal_cdf(-1.0);
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.174_678).abs() < 1e-5, "{d}");
        assert!(matches!(ks_one_sample(&[]), Err(Error::EmptySample)));
        assert!(ks_one_sample(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn one_sample_normal_draws_within_dkw() {
        let r = ks_one_sample(&normal_draws(100_000, 17)).unwrap();
        assert!(r.d <= r.dkw_epsilon(1e-3), "d = {}", r.d);
        assert!((r.dkw_epsilon(1e-3) - 0.006_16).abs() < 1e-4);
    }

    #[test]
    fn two_sample_small_cases() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().d, 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap().d, 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn two_sample_chi_square_constructions_agree() {
        use rand_distr::{ChiSquared, Distribution};
        let mut rng = SeedSpec::new(99, 0).rng();
        let a: Vec<f64> = (0..2000)
            .map(|_| (0..10).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum())
            .collect();
        let chi = ChiSquared::new(10.0).unwrap();
        let b: Vec<f64> = (0..2000).map(|_| chi.sample(&mut rng)).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        let eps = r.dkw_epsilon(1e-3);
        assert!((eps - 0.0617).abs() < 1e-3);
        assert!(r.d <= eps, "d = {}", r.d);
    }

    #[test]
    fn ecdf_evaluation() {
        let f = EmpiricalCdf::new(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(1.0), 0.25);
        assert_eq!(f.eval(2.0), 0.75);
        assert_eq!(f.eval(10.0), 1.0);
        assert!(EmpiricalCdf::new(&[]).is_err());
    }

    #[test]
    fn summaries() {
        let s = ecdf_summary(&[-1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.variance), (0.0, 2.0));
        assert_eq!(ecdf_summary(&[1.0, 1.0, 1.0]).unwrap().variance, 0.0);
        assert!(ecdf_summary(&[1.0]).is_err());

        let draws = normal_draws(100_000, 5);
        let s = ecdf_summary(&draws).unwrap();
        let t = draws.len() as f64;
        assert!(s.skewness.abs() <= 5.0 * (6.0 / t).sqrt());
        assert!(s.excess_kurtosis.abs() <= 5.0 * (24.0 / t).sqrt());
        assert!(s.skewness.abs() <= 0.04 && s.excess_kurtosis.abs() <= 0.08);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
