use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::SvmError;
use crate::scalar::Real;

/// Kernel family. Declaration order is the grid-search tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Linear, KernelKind::Poly, KernelKind::Rbf];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Poly => "poly",
            KernelKind::Rbf => "rbf",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "poly" | "polynomial" => Ok(KernelKind::Poly),
            "rbf" => Ok(KernelKind::Rbf),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

/// How gamma is derived from the training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    /// `1 / (d * var(X))`, variance pooled over all entries.
    Scale,
    /// `1 / d`.
    Auto,
}

impl GammaMode {
    pub const ALL: [GammaMode; 2] = [GammaMode::Scale, GammaMode::Auto];

    pub fn as_str(self) -> &'static str {
        match self {
            GammaMode::Scale => "scale",
            GammaMode::Auto => "auto",
        }
    }
}

impl fmt::Display for GammaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GammaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scale" => Ok(GammaMode::Scale),
            "auto" => Ok(GammaMode::Auto),
            other => Err(format!("unknown gamma mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma_mode: GammaMode,
    pub degree: u32,
    pub coef0: f64,
}

impl KernelConfig {
    pub fn new(kind: KernelKind, gamma_mode: GammaMode) -> Self {
        KernelConfig {
            kind,
            gamma_mode,
            degree: 3,
            coef0: 0.0,
        }
    }

    pub fn resolve<T: Real>(&self, x: ArrayView2<'_, T>) -> Result<ResolvedKernel<T>, SvmError> {
        let gamma = resolve_gamma(self.gamma_mode, x)?;
        self.with_gamma(gamma)
    }

    pub fn with_gamma<T: Real>(&self, gamma: T) -> Result<ResolvedKernel<T>, SvmError> {
        if self.degree < 1 {
            return Err(SvmError::Param("polynomial degree must be >= 1".into()));
        }
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(SvmError::Param(format!(
                "gamma {gamma} must be positive and finite"
            )));
        }
        Ok(ResolvedKernel {
            kind: self.kind,
            gamma,
            degree: self.degree,
            coef0: T::lit(self.coef0),
        })
    }
}

/// A kernel with its numeric gamma fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedKernel<T> {
    pub kind: KernelKind,
    pub gamma: T,
    pub degree: u32,
    pub coef0: T,
}

impl<T: Real> ResolvedKernel<T> {
    /// Kernel value from an inner product and the two squared norms.
    #[inline]
    pub fn from_dot(&self, dot: T, sq_x: T, sq_z: T) -> T {
        match self.kind {
            KernelKind::Linear => dot,
            KernelKind::Poly => (self.gamma * dot + self.coef0).powi(self.degree as i32),
            KernelKind::Rbf => {
                let d2 = (sq_x + sq_z - T::lit(2.0) * dot).max(T::zero());
                (-self.gamma * d2).exp()
            }
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: ArrayView1<'_, T>, z: ArrayView1<'_, T>) -> T {
        match self.kind {
            KernelKind::Rbf => {
                let d2: T = x
                    .iter()
                    .zip(z.iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                (-self.gamma * d2).exp()
            }
            _ => self.from_dot(x.dot(&z), T::zero(), T::zero()),
        }
    }
}

/// Variance of every entry of `x` taken as one population.
pub fn pooled_variance<T: Real>(x: ArrayView2<'_, T>) -> T {
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
}

pub fn resolve_gamma<T: Real>(mode: GammaMode, x: ArrayView2<'_, T>) -> Result<T, SvmError> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(SvmError::Param(
            "cannot resolve gamma on an empty matrix".into(),
        ));
    }
    let d = T::from_usize_lossy(x.ncols());
    match mode {
        GammaMode::Auto => Ok(T::one() / d),
        GammaMode::Scale => {
            let var = pooled_variance(x);
            if var > T::zero() {
                Ok(T::one() / (d * var))
            } else {
                Err(SvmError::ZeroVariance)
            }
        }
    }
}

pub fn kernel_eval<T: Real>(k: &ResolvedKernel<T>, x: &[T], z: &[T]) -> Result<T, SvmError> {
    if x.len() != z.len() {
        return Err(SvmError::Dimension {
            expected: x.len(),
            got: z.len(),
        });
    }
    Ok(k.eval_unchecked(ArrayView1::from(x), ArrayView1::from(z)))
}

/// Full `rows(a) x rows(b)` kernel matrix.
pub fn gram_matrix<T: Real>(
    k: &ResolvedKernel<T>,
    a: ArrayView2<'_, T>,
    b: ArrayView2<'_, T>,
) -> Result<Array2<T>, SvmError> {
    if a.ncols() != b.ncols() {
        return Err(SvmError::Dimension {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    let dot = a.dot(&b.t());
    let sq = |m: ArrayView2<'_, T>| m.rows().into_iter().map(|r| r.dot(&r)).collect::<Vec<T>>();
    let (sa, sb) = (sq(a), sq(b));
    Ok(Array2::from_shape_fn(dot.dim(), |(i, j)| {
        k.from_dot(dot[[i, j]], sa[i], sb[j])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn gamma_resolution() {
        let x = array![[0.0f64, 1.0], [1.0, 0.0]];
        assert_abs_diff_eq!(
            resolve_gamma(GammaMode::Scale, x.view()).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let x13 = Array2::<f64>::from_shape_fn((3, 13), |(i, j)| (i * j) as f64);
        assert_abs_diff_eq!(
            resolve_gamma(GammaMode::Auto, x13.view()).unwrap(),
            1.0 / 13.0
        );
        let c = Array2::<f64>::from_elem((4, 3), 7.0);
        assert!(matches!(
            resolve_gamma(GammaMode::Scale, c.view()),
            Err(SvmError::ZeroVariance)
        ));
    }

    #[test]
    fn kernel_values() {
        let lin = KernelConfig::new(KernelKind::Linear, GammaMode::Auto)
            .with_gamma(1.0)
            .unwrap();
        assert_eq!(kernel_eval(&lin, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let rbf = KernelConfig::new(KernelKind::Rbf, GammaMode::Auto)
            .with_gamma(0.7)
            .unwrap();
        assert_eq!(kernel_eval(&rbf, &[1.0, -2.0], &[1.0, -2.0]).unwrap(), 1.0);
        let poly = KernelConfig::new(KernelKind::Poly, GammaMode::Auto)
            .with_gamma(1.0)
            .unwrap();
        assert_eq!(kernel_eval(&poly, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 8.0);
        assert!(kernel_eval(&poly, &[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn gram_agrees_with_pointwise() {
        let a = array![[0.1f64, 0.5, -0.3], [1.0, 0.2, 0.0]];
        let b = array![[0.3f64, -0.5, 0.9], [0.0, 0.0, 1.0], [0.4, 0.4, 0.4]];
        for kind in KernelKind::ALL {
            let k = KernelConfig::new(kind, GammaMode::Auto)
                .with_gamma(0.4)
                .unwrap();
            let g = gram_matrix(&k, a.view(), b.view()).unwrap();
            for i in 0..2 {
                for j in 0..3 {
                    let v = kernel_eval(
                        &k,
                        a.row(i).as_slice().unwrap(),
                        b.row(j).as_slice().unwrap(),
                    )
                    .unwrap();
                    assert_abs_diff_eq!(g[[i, j]], v, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn rbf_rescaling_identity() {
        // k(a x, a z) with gamma / a^2 equals k(x, z) with gamma
        let x = [0.3f64, -1.2, 2.0];
        let z = [1.1f64, 0.4, -0.7];
        let a = 3.7;
        let k = KernelConfig::new(KernelKind::Rbf, GammaMode::Scale)
            .with_gamma(0.25)
            .unwrap();
        let ks = KernelConfig::new(KernelKind::Rbf, GammaMode::Scale)
            .with_gamma(0.25 / (a * a))
            .unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
        let zs: Vec<f64> = z.iter().map(|v| v * a).collect();
        assert_abs_diff_eq!(
            kernel_eval(&ks, &xs, &zs).unwrap(),
            kernel_eval(&k, &x, &z).unwrap(),
            epsilon = 1e-14
        );
    }
}
