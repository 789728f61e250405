use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convenc::EncoderArch;
use crate::corpus::{Partition, SegmentRules};
use crate::error::{Error, Result};
use crate::features::{parse_set_list, FeatureSetId};
use crate::miest::MiConfig;
use crate::signal::PoolMode;
use crate::svmkit::{ParamGrid, SmoParams};

/// Where encoder weights come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum WeightsSource {
    File { path: PathBuf },
    Random { seed: u64 },
}

impl WeightsSource {
    pub fn describe(&self) -> String {
        match self {
            WeightsSource::File { path } => path.display().to_string(),
            WeightsSource::Random { seed } => format!("random:{seed}"),
        }
    }
}

/// Every knob of a run. Read from a flat `key = value` file; command-line
/// flags are applied on top with [`ExperimentConfig::set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub partition: Partition,
    pub rules: SegmentRules,
    pub test_fraction: f64,
    pub seed: u64,
    pub folds: usize,
    pub pooling: PoolMode,
    pub sets: Vec<FeatureSetId>,
    pub grid: ParamGrid,
    pub tol: f64,
    pub max_passes: Option<usize>,
    pub cache_mb: usize,
    pub weights: Option<WeightsSource>,
    pub arch: String,
    /// `None` skips the MI stage.
    pub mi: Option<MiConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: None,
            partition: Partition::All,
            rules: SegmentRules::default(),
            test_fraction: 0.2,
            seed: 42,
            folds: 5,
            pooling: PoolMode::Mean,
            sets: FeatureSetId::ALL.to_vec(),
            grid: ParamGrid::default(),
            tol: 1e-3,
            max_passes: None,
            cache_mb: 300,
            weights: None,
            arch: EncoderArch::default().to_string(),
            mi: Some(MiConfig {
                seed: 42,
                ..MiConfig::default()
            }),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!(
            "{key} = {other}: expected a boolean"
        ))),
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "corpus",
        "partition",
        "min_len",
        "max_len",
        "pad_to",
        "test_fraction",
        "seed",
        "folds",
        "pooling",
        "sets",
        "c_values",
        "kernels",
        "gamma_modes",
        "decision_modes",
        "poly_degree",
        "coef0",
        "tol",
        "max_passes",
        "cache_mb",
        "weights",
        "random_weights",
        "weights_seed",
        "arch",
        "mi",
        "mi_k",
        "mi_samples",
        "mi_pairs",
        "mi_seed",
        "mi_reduction",
        "mi_target",
    ];

    fn mi_mut(&mut self) -> &mut MiConfig {
        let seed = self.seed;
        self.mi.get_or_insert_with(|| MiConfig {
            seed,
            ..MiConfig::default()
        })
    }

    /// Applies one setting. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_").to_ascii_lowercase();
        let k = key.as_str();
        match k {
            "corpus" => self.corpus = Some(PathBuf::from(value.trim())),
            "partition" => self.partition = parse(k, value)?,
            "min_len" | "min" => self.rules.min_len = parse(k, value)?,
            "max_len" | "max" => self.rules.max_len = parse(k, value)?,
            "pad_to" | "pad" => self.rules.pad_to = parse(k, value)?,
            "test_fraction" => self.test_fraction = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "folds" => self.folds = parse(k, value)?,
            "pooling" => self.pooling = parse(k, value)?,
            "sets" | "set" => {
                self.sets = parse_set_list(value).map_err(|e| Error::Config(format!("{k}: {e}")))?
            }
            "c_values" => self.grid.c_values = parse_list(k, value)?,
            "kernels" => self.grid.kernels = parse_list(k, value)?,
            "gamma_modes" => self.grid.gamma_modes = parse_list(k, value)?,
            "decision_modes" => self.grid.decision_modes = parse_list(k, value)?,
            "poly_degree" => self.grid.poly_degree = parse(k, value)?,
            "coef0" => self.grid.coef0 = parse(k, value)?,
            "tol" => self.tol = parse(k, value)?,
            "max_passes" => {
                self.max_passes = match value.trim() {
                    "" | "auto" | "default" => None,
                    v => Some(parse(k, v)?),
                }
            }
            "cache_mb" => self.cache_mb = parse(k, value)?,
            "weights" => {
                self.weights = Some(WeightsSource::File {
                    path: PathBuf::from(value.trim()),
                })
            }
            "random_weights" => {
                if parse_bool(k, value)? {
                    let seed = match self.weights {
                        Some(WeightsSource::Random { seed }) => seed,
                        _ => 0,
                    };
                    self.weights = Some(WeightsSource::Random { seed });
                } else if matches!(self.weights, Some(WeightsSource::Random { .. })) {
                    self.weights = None;
                }
            }
            "weights_seed" => {
                let seed = parse(k, value)?;
                if let Some(WeightsSource::Random { seed: s }) = &mut self.weights {
                    *s = seed;
                } else {
                    self.weights = Some(WeightsSource::Random { seed });
                }
            }
            "arch" => {
                value
                    .trim()
                    .parse::<EncoderArch>()
                    .map_err(|e| Error::Config(format!("arch: {e}")))?;
                self.arch = value.trim().to_string();
            }
            "mi" => {
                if parse_bool(k, value)? {
                    self.mi_mut();
                } else {
                    self.mi = None;
                }
            }
            "mi_k" => self.mi_mut().k_neighbors = parse(k, value)?,
            "mi_samples" => self.mi_mut().max_samples = parse(k, value)?,
            "mi_pairs" => {
                self.mi_mut().max_pairs = match value.trim() {
                    "all" => None,
                    v => Some(parse(k, v)?),
                }
            }
            "mi_seed" => self.mi_mut().seed = parse(k, value)?,
            "mi_reduction" => self.mi_mut().reduction = parse(k, value)?,
            "mi_target" => self.mi_mut().target = parse(k, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    n + 1
                ))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::default();
        c.apply_text(&text)?;
        Ok(c)
    }

    pub fn smo_params(&self) -> SmoParams {
        SmoParams {
            c: 1.0,
            tol: self.tol,
            max_passes: self.max_passes,
            cache_mb: self.cache_mb,
        }
    }

    pub fn encoder_arch(&self) -> Result<EncoderArch> {
        self.arch
            .parse()
            .map_err(|e| Error::Config(format!("arch: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.rules.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.sets.is_empty() {
            return Err(Error::Config("no feature sets selected".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("empty hyperparameter grid".into()));
        }
        self.encoder_arch()?;
        if let Some(mi) = &self.mi {
            mi.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miest::{MiTarget, Reduction};
    use crate::svmkit::KernelKind;

    #[test]
    fn parses_file_text() {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "# comment\ncorpus = /data/timit\nmin = 1400 \npooling=flatten\nsets = mfcc, layer5\n\
             c_values = 1,2\nkernels = rbf\nrandom-weights = yes\nweights_seed = 9\nmi_pairs = all\nmi_target = label\n",
        )
        .unwrap();
        assert_eq!(c.corpus, Some(PathBuf::from("/data/timit")));
        assert_eq!(c.rules.min_len, 1400);
        assert_eq!(c.pooling, PoolMode::Flatten);
        assert_eq!(c.sets, vec![FeatureSetId::Layer5, FeatureSetId::Mfcc]);
        assert_eq!(c.grid.c_values, vec![1.0, 2.0]);
        assert_eq!(c.grid.kernels, vec![KernelKind::Rbf]);
        assert_eq!(c.weights, Some(WeightsSource::Random { seed: 9 }));
        let mi = c.mi.as_ref().unwrap();
        assert_eq!(mi.max_pairs, None);
        assert_eq!(mi.target, MiTarget::Label);
        assert_eq!(mi.reduction, Reduction::MeanPairs);
        c.validate().unwrap();
    }

    #[test]
    fn flags_override_file() {
        let mut c = ExperimentConfig::default();
        c.apply_text("folds = 3\nweights = a.w2cv").unwrap();
        c.set("folds", "4").unwrap();
        assert_eq!(c.folds, 4);
        c.set("mi", "off").unwrap();
        assert!(c.mi.is_none());
        c.set("mi_k", "5").unwrap();
        assert_eq!(c.mi.as_ref().unwrap().k_neighbors, 5);
    }

    #[test]
    fn errors_are_config_errors() {
        let mut c = ExperimentConfig::default();
        for bad in [
            "nonsense = 1",
            "folds = x",
            "just text",
            "pooling = max",
            "arch = 3:x",
        ] {
            let e = c.apply_text(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}");
        }
        c.test_fraction = 1.0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }
}
