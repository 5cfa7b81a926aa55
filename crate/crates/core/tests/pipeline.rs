use detlab_core::diagnostics::Criterion;
use detlab_core::experiments::{self, Experiment, ExperimentConfig};
use detlab_core::report::{emit_csv, format_float};
use detlab_core::stats::{dkw_epsilon_two_sample, ks_two_sample};
use detlab_core::{BaseKind, EnsembleSpec, SeedSpec};
use rand::Rng;
use rand_distr::StandardNormal;

fn cfg(exp: Experiment, kind: BaseKind, n: Vec<usize>, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        ensemble: EnsembleSpec::new(kind),
        n_values: n,
        trials,
        ..ExperimentConfig::defaults(exp)
    }
}

#[test]
fn two_by_two_matches_direct_determinant() {
    let c = cfg(Experiment::Clt, BaseKind::Gaussian, vec![2], 10_000);
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        output_dir: Some(dir.path().to_path_buf()),
        ..c
    };
    let r = experiments::run_clt(&c).unwrap();
    let mut reader = csv::Reader::from_path(r.per_n[0].trial_csv.as_ref().unwrap()).unwrap();
    let from_pipeline: Vec<f64> = reader
        .records()
        .map(|rec| rec.unwrap()[2].parse::<f64>().unwrap())
        .filter(|s| s.is_finite())
        .collect();
    assert_eq!(from_pipeline.len(), 10_000);

    // ln(det^2) / sqrt(2 ln 2) with det = a d - b c sampled directly.
    let norm = (2.0 * 2f64.ln()).sqrt();
    let mut rng = SeedSpec::new(777, 0).rng();
    let direct: Vec<f64> = (0..100_000)
        .map(|_| {
            let [a, b, c, d]: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            ((a * d - b * c).powi(2)).ln() / norm
        })
        .collect();
    let ks = ks_two_sample(&from_pipeline, &direct).unwrap();
    assert!(ks.d <= 0.02, "KS = {}", ks.d);
}

#[test]
fn all_gaussian_tail_matches_gaussian_ensemble() {
    let n = 12;
    let mut hybrid = cfg(Experiment::Hybrid, BaseKind::Bernoulli, vec![n], 2000);
    hybrid.tail_block_override = Some(n);
    let h = experiments::run_hybrid(&hybrid).unwrap();
    let g = experiments::sample_trials(n, &BaseKind::Gaussian.atom(), 0, 99, 2000).unwrap();
    let h_trials = experiments::sample_trials(n, &BaseKind::Bernoulli.atom(), n, 98, 2000).unwrap();
    let ks = ks_two_sample(
        &experiments::retained_statistics(&g),
        &experiments::retained_statistics(&h_trials),
    )
    .unwrap();
    assert!(ks.d <= dkw_epsilon_two_sample(2000, 2000, 1e-3), "KS = {}", ks.d);
    assert_eq!(h.per_n[0].singular_count, 0);
}

#[test]
fn gaussian_replacement_is_identical_in_law() {
    let r = experiments::run_replacement(&cfg(Experiment::Replace, BaseKind::Gaussian, vec![24], 600)).unwrap();
    let check = &r.checks[0];
    assert!(check.observed <= dkw_epsilon_two_sample(600, 600, 1e-3));
    assert!(r.passed);
    for p in &r.per_n {
        assert_eq!(p.retained + p.singular_count, p.trials);
    }
}

#[test]
fn reports_do_not_depend_on_workers() {
    let mut a = cfg(Experiment::Hybrid, BaseKind::UniformScaled, vec![20], 60);
    a.workers = 1;
    let mut b = a.clone();
    b.workers = 4;
    let (ra, rb) = (experiments::run_hybrid(&a).unwrap(), experiments::run_hybrid(&b).unwrap());
    assert_eq!(ra.per_n, rb.per_n);
    assert_eq!(ra.checks, rb.checks);
}

#[test]
fn gaussian_only_suite_uses_chi_square_moments() {
    let c = cfg(Experiment::Lemmas, BaseKind::Gaussian, vec![16], 40);
    let r = experiments::run_lemma_suite_with(&c, &[BaseKind::Gaussian]).unwrap();
    let cv: Vec<_> = r.checks.iter().filter(|c| c.lemma_id == "conditional_variance").collect();
    assert_eq!(cv.len(), 3);
    for c in cv {
        assert_eq!(c.extra("m4"), Some(3.0));
        // With m4 = 3 the formula collapses to 2/k.
        let k = 16.0 - c.extra("i").unwrap();
        assert!((c.predicted - 2.0 / k).abs() < 1e-15);
    }
    for c in &r.checks {
        assert_eq!(c.pass, c.recheck(), "{}", c.lemma_id);
        if matches!(c.criterion, Criterion::ReportOnly) {
            assert!(c.pass);
        }
    }
    assert!(r.passed, "{:?}", r.failed_checks().collect::<Vec<_>>());
}

#[test]
fn csv_round_trips_statistics() {
    let recs = experiments::sample_trials(7, &BaseKind::UniformScaled.atom(), 2, 5, 30).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    emit_csv(&recs, &path).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    for (rec, orig) in reader.records().zip(&recs) {
        let rec = rec.unwrap();
        assert_eq!(&rec[2], format_float(orig.statistic));
        assert_eq!(rec[2].parse::<f64>().unwrap(), orig.statistic);
        assert_eq!(rec[3].parse::<f64>().unwrap(), orig.log_abs_det);
    }
}

#[test]
fn decompose_trace_is_exact() {
    let c = cfg(Experiment::Decompose, BaseKind::Bernoulli, vec![30], 1);
    let c = ExperimentConfig {
        ensemble: EnsembleSpec {
            eps: Some(0.2),
            ..c.ensemble.clone()
        },
        ..c
    };
    let trace = experiments::run_decompose(&c).unwrap();
    assert_eq!(trace.steps.len(), 30);
    assert!(!trace.degenerate);
    assert_eq!(trace.projection_violations(), 0);
    assert!(trace.steps.iter().all(|s| s.diag.is_some()));
}
