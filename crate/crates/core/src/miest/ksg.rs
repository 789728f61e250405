use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::digamma::digamma;
use super::knn::{count_sorted_open, KdTree};
use super::MiError;
use crate::convenc::fnv1a64;
use crate::scalar::{total_cmp, Real};

/// Relative magnitude of the tie-breaking noise.
pub const JITTER: f64 = 1e-10;

fn column_seed<T: Real>(values: &[T], seed: u64) -> u64 {
    let bytes: Vec<u8> = values
        .iter()
        .flat_map(|v| v.to_f64_lossy().to_le_bytes())
        .collect();
    let h = fnv1a64(&bytes);
    // splitmix64 finaliser over seed and content
    let mut z = seed ^ h.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scales a column to unit standard deviation (constant columns are left
/// as is) and adds uniform noise of relative size [`JITTER`]. The noise
/// depends only on `seed` and the column values.
pub fn prepare_column<T: Real>(values: &[T], seed: u64) -> Vec<T> {
    let n = T::from_usize_lossy(values.len().max(1));
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let sd = var.sqrt();
    let scaled: Vec<T> = if sd > T::zero() {
        values.iter().map(|&v| v / sd).collect()
    } else {
        values.to_vec()
    };
    let mag = scaled.iter().map(|v| v.abs()).sum::<T>() / n;
    let amp = T::lit(JITTER) * mag.max(T::one());
    let mut rng = ChaCha8Rng::seed_from_u64(column_seed(values, seed));
    scaled
        .into_iter()
        .map(|v| v + amp * T::lit(rng.random_range(-1.0..=1.0)))
        .collect()
}

#[derive(Debug, Clone)]
enum Marginal<T> {
    Sorted(Vec<T>),
    Tree(KdTree<T>),
}

/// One side of an MI estimate: prepared columns plus a structure for
/// counting marginal neighbours.
#[derive(Debug, Clone)]
pub struct Variable<T> {
    cols: Vec<Vec<T>>,
    marginal: Marginal<T>,
}

impl<T: Real> Variable<T> {
    /// Builds from already prepared columns of equal length.
    pub fn from_prepared(cols: Vec<Vec<T>>) -> Self {
        assert!(!cols.is_empty(), "variable needs at least one column");
        let marginal = if cols.len() == 1 {
            let mut s = cols[0].clone();
            s.sort_unstable_by(total_cmp);
            Marginal::Sorted(s)
        } else {
            Marginal::Tree(KdTree::new(interleave(&cols), cols.len()))
        };
        Variable { cols, marginal }
    }

    /// Prepares every column of `x` (rows are samples) with [`prepare_column`].
    pub fn new(x: ArrayView2<'_, T>, seed: u64) -> Self {
        let cols = x
            .columns()
            .into_iter()
            .map(|c| prepare_column(&c.to_vec(), seed))
            .collect();
        Self::from_prepared(cols)
    }

    pub fn len(&self) -> usize {
        self.cols[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    fn row(&self, i: usize) -> Vec<T> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    /// Other samples strictly within `r` of sample `i`.
    fn count_open(&self, i: usize, r: T) -> usize {
        if r <= T::zero() {
            return 0;
        }
        match &self.marginal {
            Marginal::Sorted(s) => count_sorted_open(s, self.cols[0][i], r) - 1,
            Marginal::Tree(t) => t.count_within(i, r),
        }
    }

    fn tree(&self) -> KdTree<T> {
        match &self.marginal {
            Marginal::Tree(t) => t.clone(),
            Marginal::Sorted(_) => KdTree::new(self.cols[0].clone(), 1),
        }
    }
}

fn interleave<T: Real>(cols: &[Vec<T>]) -> Vec<T> {
    let n = cols[0].len();
    let mut buf = Vec::with_capacity(n * cols.len());
    for i in 0..n {
        buf.extend(cols.iter().map(|c| c[i]));
    }
    buf
}

/// KSG (variant 1) estimate in nats between two prepared variables.
pub fn ksg_between<T: Real>(x: &Variable<T>, y: &Variable<T>, k: usize) -> Result<T, MiError> {
    let n = x.len();
    if y.len() != n {
        return Err(MiError::RowMismatch {
            left: n,
            right: y.len(),
        });
    }
    if k == 0 || n <= k {
        return Err(MiError::Argument(format!(
            "need more than k={k} samples, got {n}"
        )));
    }
    let mut joint_cols = x.cols.clone();
    joint_cols.extend(y.cols.iter().cloned());
    let joint = KdTree::new(interleave(&joint_cols), joint_cols.len());
    let mut acc = T::zero();
    for i in 0..n {
        let eps = joint.kth_distance(i, k);
        let nx = x.count_open(i, eps);
        let ny = y.count_open(i, eps);
        acc = acc + (digamma(T::from_usize_lossy(nx + 1)) + digamma(T::from_usize_lossy(ny + 1)));
    }
    let nt = T::from_usize_lossy(n);
    let mi = digamma(T::from_usize_lossy(k)) + digamma(nt) - acc / nt;
    Ok(mi.max(T::zero()))
}

fn check_finite<T: Real>(x: ArrayView2<'_, T>, what: &str) -> Result<(), MiError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MiError::Argument(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}

/// KSG mutual information between row-aligned samples `x` and `y` with
/// `k` neighbours, after standardising and jittering each column.
pub fn ksg_mi<T: Real>(
    x: ArrayView2<'_, T>,
    y: ArrayView2<'_, T>,
    k: usize,
    seed: u64,
) -> Result<T, MiError> {
    if x.nrows() != y.nrows() {
        return Err(MiError::RowMismatch {
            left: x.nrows(),
            right: y.nrows(),
        });
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(MiError::Argument(
            "variables need at least one column".into(),
        ));
    }
    if k == 0 || x.nrows() <= k {
        return Err(MiError::Argument(format!(
            "need more than k={k} samples, got {}",
            x.nrows()
        )));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    ksg_between(&Variable::new(x, seed), &Variable::new(y, seed), k)
}

/// Scalar convenience wrapper over [`ksg_mi`].
pub fn ksg_mi_1d<T: Real>(x: &[T], y: &[T], k: usize, seed: u64) -> Result<T, MiError> {
    let xv = ArrayView2::from_shape((x.len(), 1), x).expect("column view");
    let yv = ArrayView2::from_shape((y.len(), 1), y).expect("column view");
    ksg_mi(xv, yv, k, seed)
}

/// Nearest-neighbour MI between a continuous variable and discrete labels
/// (Ross' estimator). Labels seen only once are ignored.
pub fn mi_discrete<T: Real>(x: &Variable<T>, labels: &[usize], k: usize) -> Result<T, MiError> {
    let n = x.len();
    if labels.len() != n {
        return Err(MiError::RowMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if k == 0 {
        return Err(MiError::Argument("k must be at least 1".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let full = x.tree();
    let mut kept = 0usize;
    let (mut s_k, mut s_nc, mut s_m) = (T::zero(), T::zero(), T::zero());
    for &c in &classes {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if idx.len() < 2 {
            continue;
        }
        let kc = k.min(idx.len() - 1);
        let sub: Vec<Vec<T>> = x
            .cols
            .iter()
            .map(|col| idx.iter().map(|&i| col[i]).collect())
            .collect();
        let tree = KdTree::new(interleave(&sub), sub.len());
        for (local, &i) in idx.iter().enumerate() {
            let d = tree.kth_distance(local, kc);
            let m = full.count_closed(&x.row(i), d) - 1;
            s_k = s_k + digamma(T::from_usize_lossy(kc));
            s_nc = s_nc + digamma(T::from_usize_lossy(idx.len()));
            s_m = s_m + digamma(T::from_usize_lossy(m.max(1)));
            kept += 1;
        }
    }
    if kept <= k {
        return Err(MiError::Argument(format!(
            "need more than k={k} labelled samples, got {kept}"
        )));
    }
    let nk = T::from_usize_lossy(kept);
    let mi = digamma(nk) + (s_k - s_nc - s_m) / nk;
    Ok(mi.max(T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn jitter_is_tiny_and_content_seeded() {
        let x = vec![0.0f64; 50];
        let a = prepare_column(&x, 1);
        assert!(a.iter().all(|v| v.abs() <= 1e-10));
        assert_eq!(a, prepare_column(&x, 1));
        assert_ne!(a, prepare_column(&x, 2));
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b = prepare_column(&y, 1);
        let sd = (y.iter().map(|v| (v - 24.5).powi(2)).sum::<f64>() / 50.0).sqrt();
        for (p, v) in b.iter().zip(&y) {
            assert!((p - v / sd).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_variables_give_large_mi() {
        let x = lcg(5, 2000);
        let mi = ksg_mi_1d(&x, &x, 10, 0).unwrap();
        // psi(n) - psi(k) for exact copies
        assert!(mi > 3.0, "{mi}");
    }

    #[test]
    fn symmetric_and_argument_errors() {
        let x = lcg(1, 500);
        let y: Vec<f64> = x
            .iter()
            .zip(lcg(2, 500))
            .map(|(a, b)| a + 0.3 * b)
            .collect();
        let a = ksg_mi_1d(&x, &y, 5, 9).unwrap();
        let b = ksg_mi_1d(&y, &x, 5, 9).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.3);
        assert!(matches!(
            ksg_mi_1d(&x[..5], &y[..5], 5, 0),
            Err(MiError::Argument(_))
        ));
        assert!(matches!(
            ksg_mi_1d(&x[..6], &y[..7], 5, 0),
            Err(MiError::RowMismatch { .. })
        ));
        assert!(ksg_mi_1d(&[f64::NAN; 20], &y[..20], 3, 0).is_err());
    }

    #[test]
    fn multi_column_variables() {
        let n = 800;
        let u = lcg(3, n);
        let v = lcg(4, n);
        let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { u[i] } else { v[i] });
        let dep = Array2::from_shape_fn((n, 1), |(i, _)| u[i] + v[i]);
        let w = lcg(7, n);
        let ind = Array2::from_shape_fn((n, 1), |(i, _)| w[i]);
        let hi = ksg_mi(x.view(), dep.view(), 5, 0).unwrap();
        let lo = ksg_mi(x.view(), ind.view(), 5, 0).unwrap();
        assert!(hi > 1.0 && lo < 0.1, "{hi} {lo}");
    }

    #[test]
    fn discrete_labels() {
        let n = 600;
        let noise = lcg(8, n);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let sep: Vec<f64> = (0..n).map(|i| labels[i] as f64 * 10.0 + noise[i]).collect();
        let x = Variable::from_prepared(vec![prepare_column(&sep, 0)]);
        let mi = mi_discrete(&x, &labels, 5).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 0.05, "{mi}");
        let flat = Variable::from_prepared(vec![prepare_column(&noise, 0)]);
        assert!(mi_discrete(&flat, &labels, 5).unwrap() < 0.05);
    }
}
