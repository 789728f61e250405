use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::scalar::Real;

/// Per-column affine map onto [0, 1], fitted on training rows only.
/// Constant columns map to 0; values outside the fitted range are not clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Real> MinMaxScaler<T> {
    pub fn fit(rows: ArrayView2<'_, T>) -> Result<Self, SignalError> {
        if rows.nrows() == 0 {
            return Err(SignalError::Argument(
                "cannot fit a scaler on zero rows".into(),
            ));
        }
        let fold = |init: T, pick: fn(T, T) -> T| {
            rows.fold_axis(Axis(0), init, |&acc, &v| pick(acc, v))
                .to_vec()
        };
        let min = fold(T::infinity(), T::min);
        let max = fold(T::neg_infinity(), T::max);
        Ok(MinMaxScaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn check(&self, rows: &ArrayView2<'_, T>) -> Result<(), SignalError> {
        if rows.ncols() != self.dim() {
            return Err(SignalError::Argument(format!(
                "scaler fitted on {} columns, got {}",
                self.dim(),
                rows.ncols()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, rows: ArrayView2<'_, T>) -> Result<Array2<T>, SignalError> {
        self.check(&rows)?;
        let mut out = rows.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let range = self.max[j] - self.min[j];
            let lo = self.min[j];
            if range > T::zero() {
                col.mapv_inplace(|v| (v - lo) / range);
            } else {
                col.fill(T::zero());
            }
        }
        Ok(out)
    }

    /// Undoes [`transform`](Self::transform) for non-constant columns; constant
    /// columns come back as their fitted value.
    pub fn inverse_transform(&self, rows: ArrayView2<'_, T>) -> Result<Array2<T>, SignalError> {
        self.check(&rows)?;
        let mut out = rows.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let range = self.max[j] - self.min[j];
            let lo = self.min[j];
            col.mapv_inplace(|v| v * range + lo);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn affine_and_degenerate_columns() {
        let x = array![[2.0f64, 5.0], [4.0, 5.0], [6.0, 5.0]];
        let s = MinMaxScaler::fit(x.view()).unwrap();
        let y = s.transform(x.view()).unwrap();
        assert_eq!(y.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(y.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        let test = s.transform(array![[8.0, 5.0]].view()).unwrap();
        assert_eq!(test[[0, 0]], 1.5);
    }

    #[test]
    fn dimension_checks() {
        assert!(MinMaxScaler::<f64>::fit(Array2::zeros((0, 3)).view()).is_err());
        let s = MinMaxScaler::fit(array![[1.0f32, 2.0]].view()).unwrap();
        assert!(s.transform(array![[1.0f32, 2.0, 3.0]].view()).is_err());
    }
}
