//! Log-determinants and the row-by-row distance decomposition
//! `log det A^2 = sum_i log Delta_{i+1}^2`.

mod basis;
mod decompose;
mod logdet;

pub use basis::OrthoBasis;
pub use decompose::{
    decompose_matrix, decompose_rows, martingale_diagnostics, martingale_diagnostics_until, projection_diagonal, taylor_split,
    taylor_split_until, DecompositionTrace, MartingaleDiagnostics, StepDiagnostics, StepRecord,
    TaylorSums,
};
pub use logdet::{log_factorial, logdet_lu, logdet_qr, normalize_statistic, DetSign, LogDetMethod, LogDetResult};
