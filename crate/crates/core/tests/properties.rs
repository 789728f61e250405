use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vowelprobe::corpus::{split_dataset, VowelClass};
use vowelprobe::miest::{digamma, ksg_mi_1d};
use vowelprobe::signal::{power_spectrum, MinMaxScaler};
use vowelprobe::svmkit::{
    grid_search, stratified_kfold, GammaMode, KernelKind, ParamGrid, SmoParams,
};

fn classes(front: usize, back: usize, seed: u64) -> Vec<VowelClass> {
    let mut v: Vec<VowelClass> = std::iter::repeat_n(VowelClass::Front, front)
        .chain(std::iter::repeat_n(VowelClass::Back, back))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..v.len()).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    v
}

proptest! {
    #[test]
    fn minmax_inverse_round_trips(rows in 2usize..20, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-100.0..100.0));
        let s = MinMaxScaler::<f64>::fit(x.view()).unwrap();
        let t = s.transform(x.view()).unwrap();
        prop_assert!(t.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
        let back = s.inverse_transform(t.view()).unwrap();
        for (a, b) in x.iter().zip(back.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn power_spectrum_obeys_parseval(len in 1usize..=512, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = 512;
        let p = power_spectrum(&x, n).unwrap();
        prop_assert_eq!(p.len(), n / 2 + 1);
        let spectral = (p[0] + p[n / 2] + 2.0 * p[1..n / 2].iter().sum::<f64>()) / n as f64;
        let energy: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!((spectral - energy).abs() <= 1e-10 * energy.max(1.0));
    }

    #[test]
    fn digamma_recurrence(x in 1e-3f64..1e4) {
        let lhs = digamma(x + 1.0);
        let rhs = digamma(x) + 1.0 / x;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn ksg_is_symmetric(n in 20usize..200, seed in any::<u64>(), mix in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| mix * v + (1.0 - mix) * rng.random_range(-1.0..1.0)).collect();
        let a = ksg_mi_1d(&x, &y, 5, 3).unwrap();
        let b = ksg_mi_1d(&y, &x, 5, 3).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn split_is_stratified_partition(front in 2usize..80, back in 2usize..80, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let y = classes(front, back, seed);
        let s = split_dataset(&y, frac, seed).unwrap();
        let train: BTreeSet<usize> = s.train.iter().copied().collect();
        let test: BTreeSet<usize> = s.test.iter().copied().collect();
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.len() + test.len(), y.len());
        for (class, total) in [(VowelClass::Front, front), (VowelClass::Back, back)] {
            let in_test = s.test.iter().filter(|&&i| y[i] == class).count();
            let want = ((total as f64 * frac).round() as usize).clamp(1, total - 1);
            prop_assert_eq!(in_test, want);
        }
        prop_assert_eq!(s, split_dataset(&y, frac, seed).unwrap());
    }

    #[test]
    fn folds_are_balanced(front in 5usize..60, back in 5usize..60, k in 2usize..=5, seed in any::<u64>()) {
        let y = classes(front, back, seed);
        let folds = stratified_kfold(&y, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..y.len()).collect::<Vec<_>>());
        for class in VowelClass::ALL {
            let sizes: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| y[i] == class).count()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}

#[test]
fn digamma_matches_harmonic_numbers() {
    // psi(n) = -gamma + H_{n-1}, with H accumulated by compensated summation
    const EULER: f64 = 0.577_215_664_901_532_9;
    let (mut h, mut comp) = (0.0f64, 0.0f64);
    let mut worst = 0.0f64;
    for n in 1..=1_000_000u64 {
        worst = worst.max((digamma(n as f64) - (h - EULER)).abs());
        let term = 1.0 / n as f64 - comp;
        let t = h + term;
        comp = (t - h) - term;
        h = t;
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn grid_result_ignores_listing_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = classes(20, 20, seed);
        let x = Array2::from_shape_fn((40, 3), |(i, j)| {
            let shift = if y[i] == VowelClass::Front { 0.6 } else { -0.6 };
            rng.random_range(-1.0..1.0) + if j == 0 { shift } else { 0.0 }
        });
        let base = ParamGrid {
            c_values: vec![0.1, 1.0, 10.0],
            kernels: vec![KernelKind::Linear, KernelKind::Rbf],
            gamma_modes: GammaMode::ALL.to_vec(),
            ..ParamGrid::default()
        };
        let mut shuffled = base.clone();
        shuffled.c_values.reverse();
        shuffled.kernels.reverse();
        shuffled.gamma_modes.reverse();
        shuffled.decision_modes.reverse();
        let params = SmoParams::default();
        let a = grid_search(x.view(), &y, &base, 3, seed, true, &params).unwrap();
        let b = grid_search(x.view(), &y, &shuffled, 3, seed, true, &params).unwrap();
        prop_assert_eq!(a.best, b.best);
        prop_assert_eq!(a.best_cv_accuracy, b.best_cv_accuracy);
        let key = |o: &vowelprobe::svmkit::GridOutcome<f64>| {
            let mut rows: Vec<String> = o.cv_table.iter().map(|r| format!("{} {} {}", r.cell, r.fold, r.accuracy)).collect();
            rows.sort();
            rows
        };
        prop_assert_eq!(key(&a), key(&b));
    }
}
