//! The nine feature sets compared by the experiment, and their on-disk
//! cache (one CSV per set plus a checksummed manifest).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convenc::{extract_activations, fnv1a64, pool_time, WeightStore};
use crate::corpus::{AudioSegment, VowelClass};
use crate::error::{Error, Result};
use crate::formant::{estimate_f1f2, FormantConfig};
use crate::scalar::Real;
use crate::signal::{pool_frames, MfccConfig, MfccExtractor, PoolMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSetId {
    Layer0,
    Layer1,
    Layer2,
    Layer3,
    Layer4,
    Layer5,
    Layer6,
    Mfcc,
    MfccF1F2,
}

impl FeatureSetId {
    /// Report row order.
    pub const ALL: [FeatureSetId; 9] = [
        FeatureSetId::Layer0,
        FeatureSetId::Layer1,
        FeatureSetId::Layer2,
        FeatureSetId::Layer3,
        FeatureSetId::Layer4,
        FeatureSetId::Layer5,
        FeatureSetId::Layer6,
        FeatureSetId::Mfcc,
        FeatureSetId::MfccF1F2,
    ];

    pub fn layer(k: usize) -> Option<Self> {
        Self::ALL
            .get(k)
            .copied()
            .filter(|s| s.layer_index().is_some())
    }

    pub fn layer_index(self) -> Option<usize> {
        let i = self as usize;
        (i < 7).then_some(i)
    }

    /// MFCC-based sets are min-max scaled before training; activations are not.
    pub fn scaled(self) -> bool {
        matches!(self, FeatureSetId::Mfcc | FeatureSetId::MfccF1F2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSetId::Layer0 => "layer0",
            FeatureSetId::Layer1 => "layer1",
            FeatureSetId::Layer2 => "layer2",
            FeatureSetId::Layer3 => "layer3",
            FeatureSetId::Layer4 => "layer4",
            FeatureSetId::Layer5 => "layer5",
            FeatureSetId::Layer6 => "layer6",
            FeatureSetId::Mfcc => "mfcc",
            FeatureSetId::MfccF1F2 => "mfcc_f1f2",
        }
    }

    pub fn display_name(self) -> String {
        match self {
            FeatureSetId::Mfcc => "MFCC".into(),
            FeatureSetId::MfccF1F2 => "MFCC + F1 + F2".into(),
            l => format!("Layer {}", l as usize),
        }
    }
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSetId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == t || (t == "mfcc+f1+f2" && *id == FeatureSetId::MfccF1F2))
            .ok_or_else(|| format!("unknown feature set `{s}`"))
    }
}

/// Parses `all` or a comma-separated list of set ids.
pub fn parse_set_list(s: &str) -> std::result::Result<Vec<FeatureSetId>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(FeatureSetId::ALL.to_vec());
    }
    let mut v: Vec<FeatureSetId> = s
        .split(',')
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

/// Rows are segments (by id), columns are feature dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub set: FeatureSetId,
    pub ids: Vec<String>,
    pub classes: Vec<VowelClass>,
    pub data: Array2<T>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix<T> {
        FeatureMatrix {
            set: self.set,
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            classes: rows.iter().map(|&i| self.classes[i]).collect(),
            data: self.data.select(Axis(0), rows),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,class");
        for j in 0..self.dim() {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for (i, row) in self.data.rows().into_iter().enumerate() {
            out.push_str(&self.ids[i]);
            out.push(',');
            out.push_str(self.classes[i].as_str());
            for v in row {
                out.push(',');
                out.push_str(&format!("{}", v.to_f64_lossy()));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(set: FeatureSetId, text: &str) -> std::result::Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let dim = rdr
            .headers()
            .map_err(|e| e.to_string())?
            .len()
            .checked_sub(2)
            .ok_or("missing columns")?;
        let mut ids = Vec::new();
        let mut classes = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != dim + 2 {
                return Err(format!(
                    "row {}: expected {} fields, got {}",
                    line + 1,
                    dim + 2,
                    rec.len()
                ));
            }
            ids.push(rec[0].to_string());
            classes.push(
                rec[1]
                    .parse::<VowelClass>()
                    .map_err(|e| format!("row {}: {e}", line + 1))?,
            );
            for f in rec.iter().skip(2) {
                let v: f64 = f
                    .parse()
                    .map_err(|_| format!("row {}: bad number `{f}`", line + 1))?;
                data.push(T::lit(v));
            }
        }
        let data = Array2::from_shape_vec((ids.len(), dim), data).map_err(|e| e.to_string())?;
        Ok(FeatureMatrix {
            set,
            ids,
            classes,
            data,
        })
    }
}

/// All feature sets built from one segment list.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle<T> {
    pub sets: BTreeMap<FeatureSetId, FeatureMatrix<T>>,
    pub pooling: PoolMode,
    /// Ids of segments whose formants could not be estimated.
    pub formant_failures: Vec<String>,
}

impl<T: Real> FeatureBundle<T> {
    pub fn get(&self, id: FeatureSetId) -> Option<&FeatureMatrix<T>> {
        self.sets.get(&id)
    }

    /// The set with every segment (MFCC), which fixes ids and classes.
    pub fn reference(&self) -> Option<&FeatureMatrix<T>> {
        self.get(FeatureSetId::Mfcc)
            .or_else(|| self.sets.values().find(|m| m.set != FeatureSetId::MfccF1F2))
    }
}

/// Feature-extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FeatureConfig {
    pub pooling: PoolMode,
    pub mfcc: MfccConfig,
    pub formant: FormantConfig,
}

/// Builds MFCC, MFCC+F1+F2 and the seven pooled encoder layers. The
/// encoder runs in `f32`. Segments whose formants fail are left out of
/// MFCC+F1+F2 only.
pub fn build_feature_sets<T: Real>(
    segments: &[AudioSegment<T>],
    store: &WeightStore<f32>,
    cfg: &FeatureConfig,
) -> Result<FeatureBundle<T>> {
    if segments.is_empty() {
        return Err(Error::Config("no segments to featurize".into()));
    }
    let extractor = MfccExtractor::<T>::new(cfg.mfcc.clone())?;
    let sample_rate = cfg.mfcc.sample_rate;
    let n_layers = store.arch.n_layers();
    if n_layers != 7 {
        return Err(Error::Config(format!(
            "expected a 7-layer encoder, got {n_layers}"
        )));
    }

    struct Row<T> {
        mfcc: Vec<T>,
        formants: Option<(T, T)>,
        layers: Vec<Vec<T>>,
    }
    let rows: Vec<Row<T>> = segments
        .par_iter()
        .map(|seg| -> Result<Row<T>> {
            let m = extractor.extract(&seg.samples)?;
            let mfcc = pool_frames(&m, cfg.pooling)?;
            let formants = match estimate_f1f2(seg.voiced(), sample_rate, &cfg.formant) {
                Ok(e) => Some((e.pair.f1, e.pair.f2)),
                Err(e) => {
                    log::debug!("{}: formants unavailable: {e}", seg.id());
                    None
                }
            };
            let wave: Vec<f32> = seg
                .samples
                .iter()
                .map(|v| v.to_f64_lossy() as f32)
                .collect();
            let acts = extract_activations(store, &wave)?;
            let layers = (0..n_layers)
                .map(|k| {
                    pool_time(&acts, k, cfg.pooling)
                        .map(|v| v.into_iter().map(|x| T::lit(x as f64)).collect())
                })
                .collect::<std::result::Result<Vec<Vec<T>>, _>>()?;
            Ok(Row {
                mfcc,
                formants,
                layers,
            })
        })
        .collect::<Result<_>>()?;

    let ids: Vec<String> = segments.iter().map(AudioSegment::id).collect();
    let classes: Vec<VowelClass> = segments.iter().map(|s| s.vclass).collect();
    let stack = |vecs: Vec<&Vec<T>>| -> Array2<T> {
        let d = vecs[0].len();
        Array2::from_shape_vec(
            (vecs.len(), d),
            vecs.into_iter().flatten().copied().collect(),
        )
        .expect("equal row lengths")
    };
    let mut sets = BTreeMap::new();
    sets.insert(
        FeatureSetId::Mfcc,
        FeatureMatrix {
            set: FeatureSetId::Mfcc,
            ids: ids.clone(),
            classes: classes.clone(),
            data: stack(rows.iter().map(|r| &r.mfcc).collect()),
        },
    );
    let keep: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].formants.is_some())
        .collect();
    let failures: Vec<String> = (0..rows.len())
        .filter(|&i| rows[i].formants.is_none())
        .map(|i| ids[i].clone())
        .collect();
    if !failures.is_empty() {
        log::warn!(
            "formant estimation failed for {} of {} segments; dropped from mfcc_f1f2",
            failures.len(),
            rows.len()
        );
    }
    if !keep.is_empty() {
        let with: Vec<Vec<T>> = keep
            .iter()
            .map(|&i| {
                let (f1, f2) = rows[i].formants.expect("kept");
                let mut v = rows[i].mfcc.clone();
                v.extend([f1, f2]);
                v
            })
            .collect();
        sets.insert(
            FeatureSetId::MfccF1F2,
            FeatureMatrix {
                set: FeatureSetId::MfccF1F2,
                ids: keep.iter().map(|&i| ids[i].clone()).collect(),
                classes: keep.iter().map(|&i| classes[i]).collect(),
                data: stack(with.iter().collect()),
            },
        );
    }
    for k in 0..n_layers {
        let id = FeatureSetId::layer(k).expect("seven layers");
        sets.insert(
            id,
            FeatureMatrix {
                set: id,
                ids: ids.clone(),
                classes: classes.clone(),
                data: stack(rows.iter().map(|r| &r.layers[k]).collect()),
            },
        );
    }
    Ok(FeatureBundle {
        sets,
        pooling: cfg.pooling,
        formant_failures: failures,
    })
}

/// Manifest of a feature cache directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub pooling: PoolMode,
    /// Where the encoder weights came from.
    pub weights: String,
    pub sets: Vec<FeatureFileEntry>,
    pub formant_failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFileEntry {
    pub set: FeatureSetId,
    pub file: String,
    pub rows: usize,
    pub dim: usize,
    /// FNV-1a of the CSV bytes, hex.
    pub checksum: String,
}

pub const FEATURE_MANIFEST: &str = "features.json";

/// Writes `<set>.csv` per set and `features.json`.
pub fn save_features<T: Real>(
    bundle: &FeatureBundle<T>,
    weights: &str,
    dir: &Path,
) -> Result<FeatureManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (id, m) in &bundle.sets {
        let csv = m.to_csv();
        let file = format!("{id}.csv");
        let path = dir.join(&file);
        fs::write(&path, csv.as_bytes()).map_err(|e| Error::io(&path, e))?;
        entries.push(FeatureFileEntry {
            set: *id,
            file,
            rows: m.n_rows(),
            dim: m.dim(),
            checksum: format!("{:016x}", fnv1a64(csv.as_bytes())),
        });
    }
    let manifest = FeatureManifest {
        pooling: bundle.pooling,
        weights: weights.to_string(),
        sets: entries,
        formant_failures: bundle.formant_failures.clone(),
    };
    let path = dir.join(FEATURE_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_feature_manifest(dir: &Path) -> Result<FeatureManifest> {
    let path = dir.join(FEATURE_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(&path, e.to_string()))
}

/// Loads the requested sets (all listed ones when `only` is `None`),
/// verifying checksums and shapes.
pub fn load_features<T: Real>(
    dir: &Path,
    only: Option<&[FeatureSetId]>,
) -> Result<(FeatureManifest, FeatureBundle<T>)> {
    let manifest = read_feature_manifest(dir)?;
    let mut sets = BTreeMap::new();
    for e in &manifest.sets {
        if only.is_some_and(|o| !o.contains(&e.set)) {
            continue;
        }
        let path = dir.join(&e.file);
        let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
        let sum = format!("{:016x}", fnv1a64(&bytes));
        if sum != e.checksum {
            return Err(Error::malformed(
                &path,
                format!("checksum {sum} does not match manifest {}", e.checksum),
            ));
        }
        let text =
            String::from_utf8(bytes).map_err(|err| Error::malformed(&path, err.to_string()))?;
        let m = FeatureMatrix::<T>::from_csv(e.set, &text)
            .map_err(|msg| Error::malformed(&path, msg))?;
        if m.n_rows() != e.rows || m.dim() != e.dim {
            return Err(Error::malformed(
                &path,
                format!(
                    "shape {}x{} differs from manifest {}x{}",
                    m.n_rows(),
                    m.dim(),
                    e.rows,
                    e.dim
                ),
            ));
        }
        sets.insert(e.set, m);
    }
    if let Some(o) = only {
        if let Some(missing) = o.iter().find(|s| !sets.contains_key(s)) {
            return Err(Error::Config(format!(
                "feature set {missing} not present in {}",
                dir.display()
            )));
        }
    }
    let bundle = FeatureBundle {
        sets,
        pooling: manifest.pooling,
        formant_failures: manifest.formant_failures.clone(),
    };
    Ok((manifest, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convenc::EncoderArch;
    use crate::corpus::{select_segments, PhoneInterval, SegmentRules};
    use crate::synth::{synthesize_vowel, VoiceParams, SAMPLE_RATE};
    use rand::SeedableRng;

    fn segments() -> Vec<AudioSegment<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut audio = Vec::new();
        let mut ivs = Vec::new();
        for (i, phone) in ["iy", "aa", "ae", "uw"].iter().enumerate() {
            let p = VoiceParams::vowel(phone, 110.0 + 5.0 * i as f64).unwrap();
            let start = audio.len();
            audio.extend(synthesize_vowel(&p, 1600 + 100 * i, SAMPLE_RATE, &mut rng));
            ivs.push(PhoneInterval {
                start,
                end: audio.len(),
                label: phone.to_string(),
            });
        }
        // silence gives no formants
        let start = audio.len();
        audio.extend(vec![0.0; 1700]);
        ivs.push(PhoneInterval {
            start,
            end: audio.len(),
            label: "eh".into(),
        });
        select_segments(&ivs, &audio, &SegmentRules::default(), "u1", "s1").unwrap()
    }

    #[test]
    fn ids_parse_and_order() {
        assert_eq!(FeatureSetId::ALL.len(), 9);
        for id in FeatureSetId::ALL {
            assert_eq!(id.as_str().parse::<FeatureSetId>().unwrap(), id);
        }
        assert_eq!(FeatureSetId::Layer3.display_name(), "Layer 3");
        assert_eq!(FeatureSetId::MfccF1F2.display_name(), "MFCC + F1 + F2");
        assert_eq!(FeatureSetId::layer(7), None);
        assert_eq!(
            parse_set_list("mfcc,layer2,mfcc").unwrap(),
            vec![FeatureSetId::Layer2, FeatureSetId::Mfcc]
        );
        assert_eq!(parse_set_list("all").unwrap().len(), 9);
        assert!(parse_set_list("layer9").is_err());
    }

    #[test]
    fn builds_aligned_sets() {
        let segs = segments();
        let store = WeightStore::<f32>::random(&EncoderArch::default(), 1);
        let b = build_feature_sets(&segs, &store, &FeatureConfig::default()).unwrap();
        assert_eq!(b.sets.len(), 9);
        assert_eq!(b.get(FeatureSetId::Mfcc).unwrap().dim(), 13);
        assert_eq!(b.get(FeatureSetId::MfccF1F2).unwrap().dim(), 15);
        assert_eq!(b.get(FeatureSetId::Layer5).unwrap().dim(), 512);
        assert_eq!(b.formant_failures, vec!["u1@7000".to_string()]);
        let all = &b.get(FeatureSetId::Mfcc).unwrap().ids;
        assert_eq!(all.len(), 5);
        for m in b.sets.values() {
            if m.set == FeatureSetId::MfccF1F2 {
                assert_eq!(m.ids, all[..4].to_vec());
            } else {
                assert_eq!(&m.ids, all);
            }
        }
        let f = b.get(FeatureSetId::MfccF1F2).unwrap();
        assert!(f.data[[0, 13]] < 400.0 && f.data[[0, 14]] > 2000.0);
    }

    #[test]
    fn csv_cache_round_trip_and_checksum() {
        let segs = segments();
        let store = WeightStore::<f32>::random(&EncoderArch::default(), 1);
        let cfg = FeatureConfig::default();
        let b = build_feature_sets(&segs, &store, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_features(&b, "random:1", dir.path()).unwrap();
        let (manifest, back) = load_features::<f64>(dir.path(), None).unwrap();
        assert_eq!(manifest.weights, "random:1");
        assert_eq!(back, b);
        let only = load_features::<f64>(dir.path(), Some(&[FeatureSetId::Layer1]))
            .unwrap()
            .1;
        assert_eq!(only.sets.len(), 1);
        let p = dir.path().join("mfcc.csv");
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("x@1,front");
        text.push_str(&",0".repeat(13));
        text.push('\n');
        fs::write(&p, text).unwrap();
        let err = load_features::<f64>(dir.path(), None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
