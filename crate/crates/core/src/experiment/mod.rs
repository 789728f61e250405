//! End-to-end pipeline: corpus -> features -> grid search -> held-out
//! evaluation -> MI, with reports.

mod config;
mod report;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convenc::WeightStore;
use crate::corpus::{load_corpus, split_dataset, SegmentCounts, VowelClass};
use crate::error::{Error, Result, Stage, StageExt};
use crate::features::{
    build_feature_sets, save_features, FeatureBundle, FeatureConfig, FeatureMatrix, FeatureSetId,
};
use crate::miest::{mi_report, MiConfig, MiReport};
use crate::svmkit::{evaluate, grid_search, CvRow, GridCell, ParamGrid, SmoParams};
use crate::Scalar;

pub use config::{ExperimentConfig, WeightsSource};
pub use report::{bar_chart_svg, emit_report, load_report, write_json};

/// Held-out split expressed as segment ids, so it applies to every set.
#[derive(Debug, Clone, PartialEq)]
pub struct IdSplit {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub summary: SplitSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub test_fraction: f64,
    pub train: usize,
    pub test: usize,
    pub train_front: usize,
    pub test_front: usize,
}

/// Stratified split of the reference set's rows.
pub fn split_ids(
    reference: &FeatureMatrix<Scalar>,
    test_fraction: f64,
    seed: u64,
) -> Result<IdSplit> {
    let s = split_dataset(&reference.classes, test_fraction, seed)?;
    let front = |idx: &[usize]| {
        idx.iter()
            .filter(|&&i| reference.classes[i] == VowelClass::Front)
            .count()
    };
    let summary = SplitSummary {
        seed,
        test_fraction,
        train: s.train.len(),
        test: s.test.len(),
        train_front: front(&s.train),
        test_front: front(&s.test),
    };
    Ok(IdSplit {
        train: s.train.iter().map(|&i| reference.ids[i].clone()).collect(),
        test: s.test.iter().map(|&i| reference.ids[i].clone()).collect(),
        summary,
    })
}

/// Grid-search settings shared by every feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub grid: ParamGrid,
    pub folds: usize,
    pub seed: u64,
    pub params: SmoParams,
}

impl TrainSettings {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        TrainSettings {
            grid: c.grid.clone(),
            folds: c.folds,
            seed: c.seed,
            params: c.smo_params(),
        }
    }
}

/// Outcome for one feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetResult {
    pub set: FeatureSetId,
    pub name: String,
    pub dim: usize,
    pub scaled: bool,
    pub train_rows: usize,
    pub test_rows: usize,
    pub best: GridCell,
    pub cv_accuracy: f64,
    pub test_accuracy: f64,
    /// Rows are the true class (front, back), columns the prediction.
    pub confusion: [[usize; 2]; 2],
    pub cells_evaluated: usize,
    pub failed_cells: usize,
    pub cv: Vec<CvRow>,
}

/// Grid search on the training ids, refit, and evaluation on the test ids.
/// MFCC-based sets are min-max scaled with statistics from training rows only.
pub fn train_feature_set(
    m: &FeatureMatrix<Scalar>,
    split: &IdSplit,
    s: &TrainSettings,
) -> Result<SetResult> {
    let train_rows: Vec<usize> = (0..m.n_rows())
        .filter(|&i| split.train.contains(&m.ids[i]))
        .collect();
    let test_rows: Vec<usize> = (0..m.n_rows())
        .filter(|&i| split.test.contains(&m.ids[i]))
        .collect();
    let train = m.select(&train_rows);
    let test = m.select(&test_rows);
    debug_assert!(
        train.ids.iter().all(|id| !split.test.contains(id)),
        "test row leaked into training"
    );
    if test.n_rows() == 0 {
        return Err(Error::Config(format!("{}: no test rows", m.set)));
    }
    log::info!(
        "{}: grid search over {} cells on {} rows ({} dims)",
        m.set,
        s.grid.len(),
        train.n_rows(),
        m.dim()
    );
    let outcome = grid_search(
        train.data.view(),
        &train.classes,
        &s.grid,
        s.folds,
        s.seed,
        m.set.scaled(),
        &s.params,
    )?;
    let x_test = outcome.prepare(test.data.view())?;
    let eval = evaluate(&outcome.model, x_test.view(), &test.classes)?;
    log::info!(
        "{}: best {} cv {:.4} test {:.4}",
        m.set,
        outcome.best,
        outcome.best_cv_accuracy,
        eval.accuracy
    );
    Ok(SetResult {
        set: m.set,
        name: m.set.display_name(),
        dim: m.dim(),
        scaled: m.set.scaled(),
        train_rows: train.n_rows(),
        test_rows: test.n_rows(),
        best: outcome.best,
        cv_accuracy: outcome.best_cv_accuracy,
        test_accuracy: eval.accuracy,
        confusion: eval.confusion,
        cells_evaluated: outcome.cells_evaluated,
        failed_cells: outcome.failed_cells,
        cv: outcome.cv_table,
    })
}

/// Trains the requested sets in report order.
pub fn train_sets(
    bundle: &FeatureBundle<Scalar>,
    sets: &[FeatureSetId],
    split: &IdSplit,
    s: &TrainSettings,
) -> Result<Vec<SetResult>> {
    let mut out = Vec::new();
    for id in FeatureSetId::ALL.into_iter().filter(|id| sets.contains(id)) {
        let m = bundle
            .get(id)
            .ok_or_else(|| Error::Config(format!("feature set {id} unavailable")))?;
        out.push(train_feature_set(m, split, s)?);
    }
    Ok(out)
}

/// MI between pooled MFCCs (or labels) and every encoder layer.
pub fn run_mi(bundle: &FeatureBundle<Scalar>, cfg: &MiConfig) -> Result<MiReport> {
    let mfcc = bundle
        .get(FeatureSetId::Mfcc)
        .ok_or_else(|| Error::Config("MI needs the mfcc feature set".into()))?;
    let mut layers = Vec::new();
    for k in 0..7 {
        let id = FeatureSetId::layer(k).expect("seven layers");
        let m = bundle
            .get(id)
            .ok_or_else(|| Error::Config(format!("MI needs feature set {id}")))?;
        if m.ids != mfcc.ids {
            return Err(Error::malformed(id.as_str(), "rows not aligned with mfcc"));
        }
        layers.push(m.data.view());
    }
    Ok(mi_report(mfcc.data.view(), &layers, &mfcc.classes, cfg)?)
}

pub fn load_weights(
    source: &WeightsSource,
    arch: &crate::convenc::EncoderArch,
) -> Result<WeightStore<f32>> {
    match source {
        WeightsSource::Random { seed } => Ok(WeightStore::random(arch, *seed)),
        WeightsSource::File { path } => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            WeightStore::load(&bytes, arch).map_err(|e| Error::malformed(path, e.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub weights: String,
    pub segments: SegmentCounts,
    pub split: SplitSummary,
    pub formant_failures: usize,
    /// In report order.
    pub results: Vec<SetResult>,
    pub grid_cells_total: usize,
    /// Cross-validation fits: cells x folds, summed over sets.
    pub fold_fits: usize,
    pub refits: usize,
    pub mi: Option<MiReport>,
}

impl ExperimentReport {
    pub fn result(&self, id: FeatureSetId) -> Option<&SetResult> {
        self.results.iter().find(|r| r.set == id)
    }
}

/// Runs every stage. With `out`, stage artifacts (counts, feature cache)
/// are written as they complete, and on failure whatever finished is
/// flushed to `partial.json` before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut partial = serde_json::Map::new();
    let res = run_stages(cfg, out, &mut partial);
    if let (Err(e), Some(dir)) = (&res, out) {
        partial.insert("error".into(), serde_json::Value::String(e.to_string()));
        let _ = write_json(
            &dir.join("partial.json"),
            &serde_json::Value::Object(partial),
        );
    }
    res
}

fn run_stages(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    partial: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<ExperimentReport> {
    let corpus = cfg
        .corpus
        .as_deref()
        .ok_or_else(|| Error::Config("no corpus directory given".into()))?;
    let source = cfg.weights.clone().ok_or_else(|| {
        Error::Config("no weights given (use a weight container or random weights)".into())
    })?;
    let arch = cfg.encoder_arch()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    log::info!("corpus: scanning {}", corpus.display());
    let segments = load_corpus::<Scalar>(corpus, cfg.partition, &cfg.rules).stage(Stage::Corpus)?;
    let counts = SegmentCounts::of(&segments);
    log::info!(
        "corpus: {} front, {} back segments",
        counts.front,
        counts.back
    );
    partial.insert(
        "segments".into(),
        serde_json::to_value(&counts).expect("serializable"),
    );
    if let Some(dir) = out {
        write_json(&dir.join("counts.json"), &counts).stage(Stage::Corpus)?;
    }

    let store = load_weights(&source, &arch).stage(Stage::Features)?;
    let fcfg = FeatureConfig {
        pooling: cfg.pooling,
        ..FeatureConfig::default()
    };
    let bundle = build_feature_sets(&segments, &store, &fcfg).stage(Stage::Features)?;
    drop(segments);
    if let Some(dir) = out {
        save_features(&bundle, &source.describe(), &dir.join("features")).stage(Stage::Features)?;
    }

    let reference = bundle.get(FeatureSetId::Mfcc).expect("mfcc always built");
    let split = split_ids(reference, cfg.test_fraction, cfg.seed).stage(Stage::Grid)?;
    partial.insert(
        "split".into(),
        serde_json::to_value(&split.summary).expect("serializable"),
    );
    let settings = TrainSettings::from_config(cfg);
    let mut results = Vec::new();
    for id in FeatureSetId::ALL
        .into_iter()
        .filter(|id| cfg.sets.contains(id))
    {
        let m = bundle
            .get(id)
            .ok_or_else(|| Error::Config(format!("feature set {id} has no rows")))
            .stage(Stage::Grid)?;
        let r = train_feature_set(m, &split, &settings).stage(Stage::Grid)?;
        results.push(r);
        partial.insert(
            "results".into(),
            serde_json::to_value(&results).expect("serializable"),
        );
    }

    let mi = match &cfg.mi {
        Some(mc) => Some(run_mi(&bundle, mc).stage(Stage::Mi)?),
        None => None,
    };

    let folds = settings.folds;
    Ok(ExperimentReport {
        config: cfg.clone(),
        weights: source.describe(),
        segments: counts,
        split: split.summary,
        formant_failures: bundle.formant_failures.len(),
        grid_cells_total: results.iter().map(|r| r.cells_evaluated).sum(),
        fold_fits: results.iter().map(|r| r.cells_evaluated * folds).sum(),
        refits: results.len(),
        results,
        mi,
    })
}
