//! Numerical laboratory for the central limit theorem of `log |det A_n|`.
//!
//! The crate is split the same way the experiments are run:
//!
//! * [`ensembles`]: atom distributions, matrix sampling, truncation and smoothing.
//! * [`detcore`]: stable log-determinants and the row-by-row distance decomposition.
//! * [`diagnostics`]: Monte Carlo checks of the intermediate identities and bounds.
//! * [`stats`]: normal CDF, empirical CDFs, Kolmogorov-Smirnov and DKW bounds.
//! * [`experiments`]: orchestration, determinism and parallel scheduling.
//! * [`report`]: CSV and SVG output.

pub mod detcore;
pub mod diagnostics;
pub mod ensembles;
mod error;
pub mod experiments;
pub mod matrix;
pub mod quadrature;
pub mod report;
pub mod seed;
pub mod stats;

pub use detcore::{
    decompose_rows, logdet_lu, logdet_qr, martingale_diagnostics, normalize_statistic,
    projection_diagonal, taylor_split, DecompositionTrace, DetSign, LogDetResult,
    MartingaleDiagnostics, StepRecord, TaylorSums,
};

pub use diagnostics::{Criterion, LemmaReport};
pub use ensembles::{AtomDistribution, AtomKind, BaseKind, EnsembleSpec, MatrixSample};
pub use error::{Error, Result};
pub use experiments::{Experiment, ExperimentConfig, NReport, RunReport, TrialRecord};

pub use matrix::Matrix;
pub use seed::SeedSpec;
pub use stats::{EmpiricalCdf, KsReference, KsReport};
