use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::model::Classifier;
use super::SvmError;
use crate::corpus::VowelClass;
use crate::scalar::Real;

/// Test-set accuracy and confusion counts (`[true][predicted]`, Front first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub confusion: [[usize; 2]; 2],
}

impl EvalResult {
    pub fn from_predictions(truth: &[VowelClass], predicted: &[VowelClass]) -> Self {
        let mut confusion = [[0usize; 2]; 2];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct = confusion[0][0] + confusion[1][1];
        let accuracy = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        EvalResult {
            accuracy,
            confusion,
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

pub fn evaluate<T: Real>(
    model: &Classifier<T>,
    x: ArrayView2<'_, T>,
    y: &[VowelClass],
) -> Result<EvalResult, SvmError> {
    if x.nrows() == 0 {
        return Err(SvmError::Param("empty test set".into()));
    }
    if x.nrows() != y.len() {
        return Err(SvmError::Dimension {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let pred = model.predict_rows(x)?;
    Ok(EvalResult::from_predictions(y, &pred))
}
