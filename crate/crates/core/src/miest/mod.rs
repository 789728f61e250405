//! k-nearest-neighbour mutual information between MFCCs and encoder
//! activations.

mod digamma;
mod knn;
mod ksg;

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::VowelClass;
use crate::error::ErrorKind;
use crate::scalar::Real;

pub use digamma::digamma;
pub use knn::{chebyshev, KdTree};
pub use ksg::{ksg_between, ksg_mi, ksg_mi_1d, mi_discrete, prepare_column, Variable, JITTER};

#[derive(Debug, Error)]
pub enum MiError {
    #[error("invalid MI argument: {0}")]
    Argument(String),
    #[error("row count mismatch: {left} vs {right}")]
    RowMismatch { left: usize, right: usize },
}

impl MiError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            MiError::Argument(_) => ErrorKind::Config,
            MiError::RowMismatch { .. } => ErrorKind::Data,
        }
    }
}

/// How per-pair estimates collapse to one number per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    MeanPairs,
    MaxPairs,
}

impl Reduction {
    pub fn as_str(self) -> &'static str {
        match self {
            Reduction::MeanPairs => "mean",
            Reduction::MaxPairs => "max",
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reduction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "meanpairs" | "mean_pairs" => Ok(Reduction::MeanPairs),
            "max" | "maxpairs" | "max_pairs" => Ok(Reduction::MaxPairs),
            other => Err(format!("unknown reduction `{other}`")),
        }
    }
}

/// What activations are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiTarget {
    /// Every (MFCC coefficient, activation channel) pair.
    Mfcc,
    /// Each activation channel against the vowel class.
    Label,
}

impl fmt::Display for MiTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiTarget::Mfcc => "mfcc",
            MiTarget::Label => "label",
        })
    }
}

impl FromStr for MiTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfcc" => Ok(MiTarget::Mfcc),
            "label" | "labels" | "class" => Ok(MiTarget::Label),
            other => Err(format!("unknown MI target `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiConfig {
    pub k_neighbors: usize,
    /// Rows are subsampled (seeded) above this count.
    pub max_samples: usize,
    /// Random subset of variable pairs per layer; `None` uses all of them.
    pub max_pairs: Option<usize>,
    pub seed: u64,
    pub reduction: Reduction,
    pub target: MiTarget,
}

impl Default for MiConfig {
    fn default() -> Self {
        MiConfig {
            k_neighbors: 10,
            max_samples: 2000,
            max_pairs: Some(2000),
            seed: 0,
            reduction: Reduction::MeanPairs,
            target: MiTarget::Mfcc,
        }
    }
}

impl MiConfig {
    pub fn validate(&self) -> Result<(), MiError> {
        if self.k_neighbors == 0 {
            return Err(MiError::Argument("k_neighbors must be at least 1".into()));
        }
        if self.max_samples <= self.k_neighbors {
            return Err(MiError::Argument(format!(
                "max_samples ({}) must exceed k_neighbors ({})",
                self.max_samples, self.k_neighbors
            )));
        }
        if self.max_pairs == Some(0) {
            return Err(MiError::Argument("max_pairs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMi {
    pub layer: usize,
    pub mi_nats: f64,
    pub pairs: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub per_layer: Vec<LayerMi>,
    pub pairs_computed: usize,
    pub samples: usize,
    pub config: MiConfig,
}

fn row_subset(n: usize, cfg: &MiConfig) -> Vec<usize> {
    if n <= cfg.max_samples {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cfg.max_samples).into_vec();
    idx.sort_unstable();
    idx
}

fn pair_subset(total: usize, cfg: &MiConfig) -> Vec<usize> {
    match cfg.max_pairs {
        Some(m) if m < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
            let mut idx = rand::seq::index::sample(&mut rng, total, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    }
}

fn prepare_all<T: Real>(
    x: ArrayView2<'_, T>,
    cols: &[usize],
    seed: u64,
) -> Vec<Option<Variable<T>>> {
    let mut out: Vec<Option<Variable<T>>> = vec![None; x.ncols()];
    let made: Vec<(usize, Variable<T>)> = cols
        .par_iter()
        .map(|&j| {
            (
                j,
                Variable::from_prepared(vec![prepare_column(&x.column(j).to_vec(), seed)]),
            )
        })
        .collect();
    for (j, v) in made {
        out[j] = Some(v);
    }
    out
}

fn reduce<T: Real>(values: &[T], how: Reduction) -> f64 {
    let v: Vec<f64> = values.iter().map(|x| x.to_f64_lossy()).collect();
    match how {
        Reduction::MeanPairs => v.iter().sum::<f64>() / v.len() as f64,
        Reduction::MaxPairs => v.iter().copied().fold(0.0, f64::max),
    }
}

fn check_rows<T: Real>(a: ArrayView2<'_, T>, b: usize) -> Result<(), MiError> {
    if a.nrows() != b {
        return Err(MiError::RowMismatch {
            left: a.nrows(),
            right: b,
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(MiError::Argument("non-finite feature values".into()));
    }
    Ok(())
}

/// One layer's MI against MFCCs: KSG over (MFCC column, activation column)
/// pairs, reduced by `cfg.reduction`.
pub fn mi_layer<T: Real>(
    mfcc: ArrayView2<'_, T>,
    acts: ArrayView2<'_, T>,
    cfg: &MiConfig,
) -> Result<LayerMi, MiError> {
    cfg.validate()?;
    check_rows(acts, mfcc.nrows())?;
    check_rows(mfcc, acts.nrows())?;
    let rows = row_subset(mfcc.nrows(), cfg);
    if rows.len() <= cfg.k_neighbors {
        return Err(MiError::Argument(format!(
            "need more than k={} samples, got {}",
            cfg.k_neighbors,
            rows.len()
        )));
    }
    let m = mfcc.select(Axis(0), &rows);
    let a = acts.select(Axis(0), &rows);
    let mvars = prepare_all(m.view(), &(0..m.ncols()).collect::<Vec<_>>(), cfg.seed);
    layer_from_prepared(&mvars, a.view(), cfg, 0)
}

fn layer_from_prepared<T: Real>(
    mvars: &[Option<Variable<T>>],
    acts: ArrayView2<'_, T>,
    cfg: &MiConfig,
    layer: usize,
) -> Result<LayerMi, MiError> {
    let (dm, da) = (mvars.len(), acts.ncols());
    if dm == 0 || da == 0 {
        return Err(MiError::Argument("empty feature matrix".into()));
    }
    let pairs = pair_subset(dm * da, cfg);
    let mut acols: Vec<usize> = pairs.iter().map(|p| p % da).collect();
    acols.sort_unstable();
    acols.dedup();
    let avars = prepare_all(acts, &acols, cfg.seed);
    let values: Vec<T> = pairs
        .par_iter()
        .map(|&p| {
            let x = mvars[p / da].as_ref().expect("mfcc column prepared");
            let y = avars[p % da].as_ref().expect("activation column prepared");
            ksg_between(x, y, cfg.k_neighbors)
        })
        .collect::<Result<_, _>>()?;
    Ok(LayerMi {
        layer,
        mi_nats: reduce(&values, cfg.reduction),
        pairs: pairs.len(),
        samples: acts.nrows(),
    })
}

/// One layer's MI against vowel labels, per activation channel.
pub fn mi_layer_labels<T: Real>(
    acts: ArrayView2<'_, T>,
    labels: &[VowelClass],
    cfg: &MiConfig,
) -> Result<LayerMi, MiError> {
    cfg.validate()?;
    check_rows(acts, labels.len())?;
    let rows = row_subset(acts.nrows(), cfg);
    let a = acts.select(Axis(0), &rows);
    let lab: Vec<usize> = rows.iter().map(|&i| labels[i].index()).collect();
    labels_from_subset(a.view(), &lab, cfg, 0)
}

fn labels_from_subset<T: Real>(
    acts: ArrayView2<'_, T>,
    lab: &[usize],
    cfg: &MiConfig,
    layer: usize,
) -> Result<LayerMi, MiError> {
    let cols = pair_subset(acts.ncols(), cfg);
    let avars = prepare_all(acts, &cols, cfg.seed);
    let values: Vec<T> = cols
        .par_iter()
        .map(|&j| mi_discrete(avars[j].as_ref().expect("prepared"), lab, cfg.k_neighbors))
        .collect::<Result<_, _>>()?;
    Ok(LayerMi {
        layer,
        mi_nats: reduce(&values, cfg.reduction),
        pairs: cols.len(),
        samples: acts.nrows(),
    })
}

/// MI for every layer. The row subsample and pair subset are shared by
/// all layers.
pub fn mi_report<T: Real>(
    mfcc: ArrayView2<'_, T>,
    layers: &[ArrayView2<'_, T>],
    labels: &[VowelClass],
    cfg: &MiConfig,
) -> Result<MiReport, MiError> {
    cfg.validate()?;
    let n = labels.len();
    for l in layers {
        check_rows(*l, n)?;
    }
    let rows = row_subset(n, cfg);
    if rows.len() <= cfg.k_neighbors {
        return Err(MiError::Argument(format!(
            "need more than k={} samples, got {}",
            cfg.k_neighbors,
            rows.len()
        )));
    }
    let mut per_layer = Vec::with_capacity(layers.len());
    match cfg.target {
        MiTarget::Mfcc => {
            check_rows(mfcc, n)?;
            let m = mfcc.select(Axis(0), &rows);
            let mvars = prepare_all(m.view(), &(0..m.ncols()).collect::<Vec<_>>(), cfg.seed);
            for (k, l) in layers.iter().enumerate() {
                let a = l.select(Axis(0), &rows);
                let r = layer_from_prepared(&mvars, a.view(), cfg, k)?;
                log::info!("layer {k}: MI {:.4} nats over {} pairs", r.mi_nats, r.pairs);
                per_layer.push(r);
            }
        }
        MiTarget::Label => {
            let lab: Vec<usize> = rows.iter().map(|&i| labels[i].index()).collect();
            for (k, l) in layers.iter().enumerate() {
                let a = l.select(Axis(0), &rows);
                let r = labels_from_subset(a.view(), &lab, cfg, k)?;
                log::info!(
                    "layer {k}: MI {:.4} nats over {} channels",
                    r.mi_nats,
                    r.pairs
                );
                per_layer.push(r);
            }
        }
    }
    Ok(MiReport {
        pairs_computed: per_layer.iter().map(|l| l.pairs).sum(),
        samples: rows.len(),
        per_layer,
        config: cfg.clone(),
    })
}
