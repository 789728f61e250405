use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::grid::DecisionMode;
use super::kernel::{KernelConfig, ResolvedKernel};
use super::smo::{smo_train, DualSolution, SmoParams};
use super::SvmError;
use crate::corpus::VowelClass;
use crate::scalar::Real;

/// Trained binary machine. Only rows with nonzero multipliers are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel<T> {
    pub support_vectors: Array2<T>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<T>,
    pub bias: T,
    pub kernel: ResolvedKernel<T>,
    pub c: T,
    /// Class for which the decision value is positive.
    pub positive: VowelClass,
    pub iterations: usize,
}

impl<T: Real> SvmModel<T> {
    pub(crate) fn from_solution(
        x: ArrayView2<'_, T>,
        y: &[i8],
        sol: &DualSolution<T>,
        kernel: ResolvedKernel<T>,
        c: T,
    ) -> Self {
        let sv: Vec<usize> = (0..sol.alpha.len())
            .filter(|&i| sol.alpha[i] > T::zero())
            .collect();
        let support_vectors = x.select(ndarray::Axis(0), &sv);
        let dual_coefs = sv
            .iter()
            .map(|&i| {
                if y[i] > 0 {
                    sol.alpha[i]
                } else {
                    -sol.alpha[i]
                }
            })
            .collect();
        SvmModel {
            support_vectors,
            dual_coefs,
            bias: sol.bias,
            kernel,
            c,
            positive: VowelClass::Front,
            iterations: sol.iterations,
        }
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    pub fn n_support(&self) -> usize {
        self.dual_coefs.len()
    }

    fn decision_row(&self, x: ArrayView1<'_, T>) -> T {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(&self.dual_coefs)
            .map(|(sv, &coef)| coef * self.kernel.eval_unchecked(sv, x))
            .sum::<T>()
            + self.bias
    }

    pub fn decision_value(&self, x: &[T]) -> Result<T, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.decision_row(ArrayView1::from(x)))
    }

    pub fn decision_values(&self, x: ArrayView2<'_, T>) -> Result<Vec<T>, SvmError> {
        if x.ncols() != self.dim() {
            return Err(SvmError::Dimension {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        Ok(x.rows().into_iter().map(|r| self.decision_row(r)).collect())
    }

    /// Sign of the decision value; exactly zero goes to the positive class.
    pub fn predict(&self, x: &[T]) -> Result<VowelClass, SvmError> {
        let v = self.decision_value(x)?;
        Ok(self.class_of(v))
    }

    fn class_of(&self, v: T) -> VowelClass {
        if v >= T::zero() {
            self.positive
        } else {
            other(self.positive)
        }
    }
}

fn other(c: VowelClass) -> VowelClass {
    match c {
        VowelClass::Front => VowelClass::Back,
        VowelClass::Back => VowelClass::Front,
    }
}

/// A two-class decision rule built from binary machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classifier<T> {
    /// The single pairwise machine (Front positive).
    Ovo(SvmModel<T>),
    /// One machine per class against the rest; the larger score wins.
    Ovr {
        front: SvmModel<T>,
        back: SvmModel<T>,
    },
}

impl<T: Real> Classifier<T> {
    pub fn mode(&self) -> DecisionMode {
        match self {
            Classifier::Ovo(_) => DecisionMode::Ovo,
            Classifier::Ovr { .. } => DecisionMode::Ovr,
        }
    }

    pub fn predict(&self, x: &[T]) -> Result<VowelClass, SvmError> {
        match self {
            Classifier::Ovo(m) => m.predict(x),
            Classifier::Ovr { front, back } => {
                let (f, b) = (front.decision_value(x)?, back.decision_value(x)?);
                Ok(if f >= b {
                    VowelClass::Front
                } else {
                    VowelClass::Back
                })
            }
        }
    }

    pub fn predict_rows(&self, x: ArrayView2<'_, T>) -> Result<Vec<VowelClass>, SvmError> {
        Ok(match self {
            Classifier::Ovo(m) => m
                .decision_values(x)?
                .into_iter()
                .map(|v| m.class_of(v))
                .collect(),
            Classifier::Ovr { front, back } => front
                .decision_values(x)?
                .into_iter()
                .zip(back.decision_values(x)?)
                .map(|(f, b)| {
                    if f >= b {
                        VowelClass::Front
                    } else {
                        VowelClass::Back
                    }
                })
                .collect(),
        })
    }
}

pub(crate) fn signs_for(y: &[VowelClass], positive: VowelClass) -> Vec<i8> {
    y.iter()
        .map(|&c| if c == positive { 1 } else { -1 })
        .collect()
}

/// Fits a classifier of the requested decision mode.
pub fn fit_classifier<T: Real>(
    x: ArrayView2<'_, T>,
    y: &[VowelClass],
    kernel: &KernelConfig,
    mode: DecisionMode,
    params: &SmoParams,
) -> Result<Classifier<T>, SvmError> {
    let front = smo_train(x, &signs_for(y, VowelClass::Front), kernel, params)?;
    Ok(match mode {
        DecisionMode::Ovo => Classifier::Ovo(front),
        DecisionMode::Ovr => {
            let mut back = smo_train(x, &signs_for(y, VowelClass::Back), kernel, params)?;
            back.positive = VowelClass::Back;
            Classifier::Ovr { front, back }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svmkit::{GammaMode, KernelKind};
    use ndarray::array;

    #[test]
    fn zero_decision_goes_to_front() {
        let x = array![[-1.0f64, 0.0], [1.0, 0.0]];
        let y = [VowelClass::Back, VowelClass::Front];
        let k = KernelConfig::new(KernelKind::Linear, GammaMode::Auto);
        let c = fit_classifier(x.view(), &y, &k, DecisionMode::Ovo, &SmoParams::default()).unwrap();
        let Classifier::Ovo(m) = &c else {
            unreachable!()
        };
        assert_eq!(m.decision_value(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(c.predict(&[0.0, 0.0]).unwrap(), VowelClass::Front);
        assert!(c.predict(&[0.0]).is_err());
    }

    #[test]
    fn ovr_machines_mirror() {
        let x = array![[-1.0f64, 0.2], [1.0, -0.1], [-0.7, -0.5], [0.9, 0.4]];
        let y = [
            VowelClass::Back,
            VowelClass::Front,
            VowelClass::Back,
            VowelClass::Front,
        ];
        let k = KernelConfig::new(KernelKind::Rbf, GammaMode::Scale);
        let c = fit_classifier(x.view(), &y, &k, DecisionMode::Ovr, &SmoParams::default()).unwrap();
        let Classifier::Ovr { front, back } = &c else {
            unreachable!()
        };
        for p in [[0.3, 0.3], [-0.2, 0.9], [2.0, -2.0]] {
            let f = front.decision_value(&p).unwrap();
            let b = back.decision_value(&p).unwrap();
            assert!((f + b).abs() < 1e-9);
        }
    }
}
