//! Binary kernel SVMs trained by SMO, with stratified k-fold grid search.

mod grid;
mod kernel;
mod metrics;
mod model;
mod smo;

use thiserror::Error;

use crate::error::ErrorKind;

pub use grid::{
    grid_search, stratified_kfold, CvRow, DecisionMode, GridCell, GridOutcome, InnerProducts,
    ParamGrid,
};
pub use kernel::{
    gram_matrix, kernel_eval, pooled_variance, resolve_gamma, GammaMode, KernelConfig, KernelKind,
    ResolvedKernel,
};
pub use metrics::{evaluate, EvalResult};
pub use model::{fit_classifier, Classifier, SvmModel};
pub use smo::{smo_solve, smo_train, DenseKernel, DualSolution, KernelRows, LazyKernel, SmoParams};

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training set contains a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("pooled feature variance is zero; gamma=scale is undefined")]
    ZeroVariance,
    #[error("SMO did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("cross-validation: {0}")]
    Folds(String),
    #[error("every grid cell failed to train")]
    AllCellsFailed,
}

impl SvmError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SvmError::NotConverged { .. } | SvmError::AllCellsFailed => ErrorKind::Convergence,
            SvmError::Dimension { .. } => ErrorKind::Data,
            _ => ErrorKind::Config,
        }
    }
}
