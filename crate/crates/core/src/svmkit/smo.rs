//! SMO for the C-SVC dual
//!
//! ```text
//! min  1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= C,   Q_ij = y_i y_j K_ij
//! ```
//!
//! Working pairs are the maximal violating pair; ties go to the lowest index.

use std::collections::{HashMap, VecDeque};

use ndarray::{Array2, ArrayView2};

use super::kernel::{KernelConfig, ResolvedKernel};
use super::model::SvmModel;
use super::SvmError;
use crate::scalar::Real;

/// Iteration ceiling regardless of `max_passes`.
pub const HARD_ITER_CEILING: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    /// Stop once the maximal KKT violation `m(a) - M(a)` drops below this.
    pub tol: f64,
    /// Sweeps of `n` iterations allowed; `None` means `10 n`.
    pub max_passes: Option<usize>,
    /// Kernel cache budget; the Gram matrix is precomputed when it fits.
    pub cache_mb: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 1.0,
            tol: 1e-3,
            max_passes: None,
            cache_mb: 300,
        }
    }
}

impl SmoParams {
    pub fn with_c(c: f64) -> Self {
        SmoParams {
            c,
            ..Self::default()
        }
    }

    pub fn iteration_limit(&self, n: usize) -> usize {
        let passes = self.max_passes.unwrap_or(10 * n);
        passes.saturating_mul(n).clamp(1, HARD_ITER_CEILING)
    }
}

/// Row access to a kernel matrix.
pub trait KernelRows<T> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn diag(&self, i: usize) -> T;

    /// Calls `f` with rows `i` and `j`.
    fn with_rows<R>(&mut self, i: usize, j: usize, f: impl FnOnce(&[T], &[T]) -> R) -> R;
}

/// Precomputed Gram matrix.
#[derive(Debug, Clone)]
pub struct DenseKernel<'a, T> {
    gram: ArrayView2<'a, T>,
}

impl<'a, T: Real> DenseKernel<'a, T> {
    pub fn new(gram: ArrayView2<'a, T>) -> Self {
        assert_eq!(gram.nrows(), gram.ncols(), "Gram matrix must be square");
        assert!(gram.is_standard_layout(), "Gram matrix must be row-major");
        DenseKernel { gram }
    }
}

impl<T: Real> KernelRows<T> for DenseKernel<'_, T> {
    fn len(&self) -> usize {
        self.gram.nrows()
    }

    fn diag(&self, i: usize) -> T {
        self.gram[[i, i]]
    }

    fn with_rows<R>(&mut self, i: usize, j: usize, f: impl FnOnce(&[T], &[T]) -> R) -> R {
        let n = self.gram.ncols();
        let all = self.gram.as_slice().expect("standard layout");
        f(&all[i * n..(i + 1) * n], &all[j * n..(j + 1) * n])
    }
}

/// Rows computed on demand and kept in a bounded FIFO cache.
#[derive(Debug)]
pub struct LazyKernel<'a, T> {
    x: ArrayView2<'a, T>,
    kernel: ResolvedKernel<T>,
    diag: Vec<T>,
    cache: HashMap<usize, Vec<T>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a, T: Real> LazyKernel<'a, T> {
    pub fn new(x: ArrayView2<'a, T>, kernel: ResolvedKernel<T>, cache_bytes: usize) -> Self {
        let n = x.nrows();
        let row_bytes = n.max(1) * std::mem::size_of::<T>();
        let capacity = (cache_bytes / row_bytes).max(2);
        let diag = (0..n)
            .map(|i| kernel.eval_unchecked(x.row(i), x.row(i)))
            .collect();
        LazyKernel {
            x,
            kernel,
            diag,
            cache: HashMap::new(),
            order: VecDeque::new(),
            capacity,
        }
    }

    fn ensure(&mut self, i: usize, keep: usize) {
        if self.cache.contains_key(&i) {
            return;
        }
        while self.cache.len() >= self.capacity {
            let Some(old) = self.order.pop_front() else {
                break;
            };
            if old == keep {
                self.order.push_back(old);
                continue;
            }
            self.cache.remove(&old);
        }
        let row = self.x.row(i);
        let values = self
            .x
            .rows()
            .into_iter()
            .map(|r| self.kernel.eval_unchecked(row, r))
            .collect();
        self.cache.insert(i, values);
        self.order.push_back(i);
    }
}

impl<T: Real> KernelRows<T> for LazyKernel<'_, T> {
    fn len(&self) -> usize {
        self.x.nrows()
    }

    fn diag(&self, i: usize) -> T {
        self.diag[i]
    }

    fn with_rows<R>(&mut self, i: usize, j: usize, f: impl FnOnce(&[T], &[T]) -> R) -> R {
        self.ensure(i, i);
        self.ensure(j, i);
        f(&self.cache[&i], &self.cache[&j])
    }
}

/// Optimal multipliers and offset: `f(x) = sum_i alpha_i y_i K(x_i, x) + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution<T> {
    pub alpha: Vec<T>,
    pub bias: T,
    pub iterations: usize,
    /// `sum(alpha) - 1/2 a'Qa` at termination.
    pub objective: T,
    /// Maximal KKT violation at termination.
    pub violation: T,
}

#[inline]
fn in_up<T: Real>(y: i8, a: T, c: T) -> bool {
    (y > 0 && a < c) || (y < 0 && a > T::zero())
}

#[inline]
fn in_low<T: Real>(y: i8, a: T, c: T) -> bool {
    (y > 0 && a > T::zero()) || (y < 0 && a < c)
}

/// Solves the dual over a kernel matrix for labels in {-1, +1}.
pub fn smo_solve<T: Real, K: KernelRows<T>>(
    kernel: &mut K,
    y: &[i8],
    c: T,
    tol: T,
    max_iter: usize,
) -> Result<DualSolution<T>, SvmError> {
    let n = kernel.len();
    if y.len() != n {
        return Err(SvmError::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(SvmError::Param("labels must be +1 or -1".into()));
    }
    if !y.iter().any(|&v| v > 0) || !y.iter().any(|&v| v < 0) {
        return Err(SvmError::SingleClass);
    }
    if !(c > T::zero()) || !(tol > T::zero()) {
        return Err(SvmError::Param(format!(
            "need C > 0 and tol > 0 (C={c}, tol={tol})"
        )));
    }
    let tau = T::lit(1e-12);
    let yf: Vec<T> = y
        .iter()
        .map(|&v| if v > 0 { T::one() } else { -T::one() })
        .collect();
    let mut alpha = vec![T::zero(); n];
    let mut grad = vec![-T::one(); n];
    let mut iterations = 0usize;
    let violation = loop {
        // maximal violating pair
        let mut i = usize::MAX;
        let mut g_max = T::neg_infinity();
        let mut j = usize::MAX;
        let mut g_min = T::infinity();
        for t in 0..n {
            let v = -yf[t] * grad[t];
            if in_up(y[t], alpha[t], c) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(y[t], alpha[t], c) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        let gap = g_max - g_min;
        if i == usize::MAX || j == usize::MAX || gap < tol {
            break gap.max(T::zero());
        }
        if iterations >= max_iter {
            return Err(SvmError::NotConverged { iterations });
        }
        iterations += 1;

        let (qii, qjj) = (kernel.diag(i), kernel.diag(j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        kernel.with_rows(i, j, |ki, kj| {
            let kij = ki[j];
            if y[i] != y[j] {
                let mut quad = qii + qjj - T::lit(2.0) * kij;
                if quad <= T::zero() {
                    quad = tau;
                }
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = ai - aj;
                ai = ai + delta;
                aj = aj + delta;
                if diff > T::zero() {
                    if aj < T::zero() {
                        aj = T::zero();
                        ai = diff;
                    }
                } else if ai < T::zero() {
                    ai = T::zero();
                    aj = -diff;
                }
                if diff > T::zero() {
                    if ai > c {
                        ai = c;
                        aj = c - diff;
                    }
                } else if aj > c {
                    aj = c;
                    ai = c + diff;
                }
            } else {
                let mut quad = qii + qjj - T::lit(2.0) * kij;
                if quad <= T::zero() {
                    quad = tau;
                }
                let delta = (grad[i] - grad[j]) / quad;
                let sum = ai + aj;
                ai = ai - delta;
                aj = aj + delta;
                if sum > c {
                    if ai > c {
                        ai = c;
                        aj = sum - c;
                    }
                } else if aj < T::zero() {
                    aj = T::zero();
                    ai = sum;
                }
                if sum > c {
                    if aj > c {
                        aj = c;
                        ai = sum - c;
                    }
                } else if ai < T::zero() {
                    ai = T::zero();
                    aj = sum;
                }
            }
            let di = ai - old_i;
            let dj = aj - old_j;
            // Q_ti = y_t y_i K_ti
            let (si, sj) = (yf[i] * di, yf[j] * dj);
            for t in 0..n {
                grad[t] = grad[t] + yf[t] * (ki[t] * si + kj[t] * sj);
            }
        });
        alpha[i] = ai;
        alpha[j] = aj;
    };

    let bias = -offset(&alpha, &grad, &yf, c);
    let objective = alpha
        .iter()
        .zip(&grad)
        .map(|(&a, &g)| a - T::lit(0.5) * a * (g + T::one()))
        .sum();
    Ok(DualSolution {
        alpha,
        bias,
        iterations,
        objective,
        violation,
    })
}

/// `rho` of the decision function `sum a_i y_i K - rho`: the mean of
/// `y_i G_i` over free multipliers, else the midpoint of the feasible interval.
fn offset<T: Real>(alpha: &[T], grad: &[T], yf: &[T], c: T) -> T {
    let mut ub = T::infinity();
    let mut lb = T::neg_infinity();
    let mut free_sum = T::zero();
    let mut free = 0usize;
    for ((&a, &g), &y) in alpha.iter().zip(grad).zip(yf) {
        let yg = y * g;
        let positive = y > T::zero();
        if a >= c {
            if positive {
                lb = lb.max(yg);
            } else {
                ub = ub.min(yg);
            }
        } else if a <= T::zero() {
            if positive {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum = free_sum + yg;
        }
    }
    if free > 0 {
        free_sum / T::from_usize_lossy(free)
    } else {
        (ub + lb) / T::lit(2.0)
    }
}

/// Trains a binary machine on rows of `x` with labels in {-1, +1}.
/// Gamma is resolved from `x` itself.
pub fn smo_train<T: Real>(
    x: ArrayView2<'_, T>,
    y: &[i8],
    kernel: &KernelConfig,
    params: &SmoParams,
) -> Result<SvmModel<T>, SvmError> {
    if x.nrows() != y.len() {
        return Err(SvmError::Dimension {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let resolved = kernel.resolve(x)?;
    let n = x.nrows();
    let c = T::lit(params.c);
    let tol = T::lit(params.tol);
    let limit = params.iteration_limit(n);
    let gram_bytes = n.saturating_mul(n).saturating_mul(std::mem::size_of::<T>());
    let sol = if gram_bytes <= params.cache_mb.saturating_mul(1 << 20) {
        let x = x.as_standard_layout();
        let gram: Array2<T> = super::kernel::gram_matrix(&resolved, x.view(), x.view())?;
        smo_solve(&mut DenseKernel::new(gram.view()), y, c, tol, limit)?
    } else {
        let mut lazy = LazyKernel::new(x, resolved, params.cache_mb << 20);
        smo_solve(&mut lazy, y, c, tol, limit)?
    };
    Ok(SvmModel::from_solution(x, y, &sol, resolved, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    use crate::svmkit::{GammaMode, KernelKind};

    #[test]
    fn two_point_max_margin() {
        let x = array![[-1.0f64], [1.0]];
        let y = [-1i8, 1];
        let k = KernelConfig::new(KernelKind::Linear, GammaMode::Auto);
        let m = smo_train(x.view(), &y, &k, &SmoParams::with_c(1.0)).unwrap();
        assert_abs_diff_eq!(m.bias, 0.0, epsilon = 1e-12);
        assert_eq!(m.support_vectors.nrows(), 2);
        for &coef in &m.dual_coefs {
            assert_abs_diff_eq!(coef.abs(), 0.5, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.decision_value(&[3.0]).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0f64], [1.0]];
        let k = KernelConfig::new(KernelKind::Linear, GammaMode::Auto);
        assert!(matches!(
            smo_train(x.view(), &[1, 1], &k, &SmoParams::default()),
            Err(SvmError::SingleClass)
        ));
        assert!(matches!(
            smo_train(x.view(), &[1, -1], &k, &SmoParams::with_c(0.0)),
            Err(SvmError::Param(_))
        ));
    }

    #[test]
    fn iteration_ceiling_reports_non_convergence() {
        let x = array![
            [0.0f64, 0.1],
            [1.0, 0.3],
            [0.2, 0.9],
            [0.8, 0.8],
            [0.5, 0.4]
        ];
        let y = [1i8, -1, 1, -1, 1];
        let k = KernelConfig::new(KernelKind::Rbf, GammaMode::Scale);
        let p = SmoParams {
            max_passes: Some(0),
            ..SmoParams::with_c(5.0)
        };
        assert!(matches!(
            smo_train(x.view(), &y, &k, &p),
            Err(SvmError::NotConverged { .. })
        ));
    }

    #[test]
    fn lazy_and_dense_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_fn((40, 3), |_| rng.random::<f64>());
        let y: Vec<i8> = (0..40)
            .map(|i| {
                if x[[i, 0]] + 0.3 * x[[i, 1]] > 0.6 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let k = KernelConfig::new(KernelKind::Rbf, GammaMode::Scale);
        let dense = smo_train(x.view(), &y, &k, &SmoParams::default()).unwrap();
        let lazy = smo_train(
            x.view(),
            &y,
            &k,
            &SmoParams {
                cache_mb: 0,
                ..SmoParams::default()
            },
        )
        .unwrap();
        let fd = dense.decision_values(x.view()).unwrap();
        let fl = lazy.decision_values(x.view()).unwrap();
        for (a, b) in fd.iter().zip(&fl) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-3);
        }
    }
}
