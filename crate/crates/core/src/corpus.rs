//! TIMIT-style corpus access: `.PHN` alignments, vowel selection, padding
//! and the stratified train/test split.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorKind;
use crate::scalar::Real;
use crate::signal::{decode_audio, AudioError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: interval end {end} must exceed start {start}")]
    EmptyInterval {
        line: usize,
        start: usize,
        end: usize,
    },
    #[error("interval {start}..{end} ({label}) exceeds audio length {len}")]
    OutOfRange {
        start: usize,
        end: usize,
        label: String,
        len: usize,
    },
    #[error("invalid segment rules: {0}")]
    Rules(String),
    #[error("split: {0}")]
    Split(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        source: Box<CorpusError>,
    },
    #[error("{}: {source}", path.display())]
    Audio { path: PathBuf, source: AudioError },
    #[error("{}: sample rate {found} Hz, expected {expected} Hz", path.display())]
    SampleRate {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
}

impl CorpusError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CorpusError::Rules(_) | CorpusError::Split(_) => ErrorKind::Config,
            CorpusError::InFile { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}

/// One aligned phone, in sample units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInterval {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl PhoneInterval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Parses the `start end label` line format of TIMIT `.PHN` files.
pub fn parse_phn(text: &str) -> Result<Vec<PhoneInterval>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CorpusError::Parse {
                line,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| CorpusError::Parse {
                line,
                msg: format!("{what} `{s}` is not a non-negative integer"),
            })
        };
        let start = parse(fields[0], "start")?;
        let end = parse(fields[1], "end")?;
        if end <= start {
            return Err(CorpusError::EmptyInterval { line, start, end });
        }
        out.push(PhoneInterval {
            start,
            end,
            label: fields[2].to_string(),
        });
    }
    Ok(out)
}

/// Tongue-position class of a monophthong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VowelClass {
    Front,
    Back,
}

impl VowelClass {
    pub const ALL: [VowelClass; 2] = [VowelClass::Front, VowelClass::Back];

    /// Row/column index in confusion matrices.
    pub fn index(self) -> usize {
        match self {
            VowelClass::Front => 0,
            VowelClass::Back => 1,
        }
    }

    /// Binary SVM label: Front is the positive class.
    pub fn sign(self) -> i8 {
        match self {
            VowelClass::Front => 1,
            VowelClass::Back => -1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VowelClass::Front => "front",
            VowelClass::Back => "back",
        }
    }
}

impl fmt::Display for VowelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VowelClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "front" => Ok(VowelClass::Front),
            "back" => Ok(VowelClass::Back),
            other => Err(format!("unknown vowel class `{other}`")),
        }
    }
}

/// Corpus phone codes of the nine selected monophthongs, front vowels first.
pub const SELECTED_PHONES: [&str; 9] = ["iy", "ih", "eh", "ae", "aa", "ao", "ow", "uh", "uw"];

/// Maps a corpus phone code to its front/back class; `None` for everything
/// outside the nine selected monophthongs.
pub fn label_vowel(phone: &str) -> Option<VowelClass> {
    match phone {
        "iy" | "ih" | "eh" | "ae" => Some(VowelClass::Front),
        "aa" | "ao" | "ow" | "uh" | "uw" => Some(VowelClass::Back),
        _ => None,
    }
}

/// Duration window and padded length applied by [`select_segments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRules {
    pub min_len: usize,
    pub max_len: usize,
    pub pad_to: usize,
}

impl Default for SegmentRules {
    fn default() -> Self {
        SegmentRules {
            min_len: 1500,
            max_len: 2000,
            pad_to: 2000,
        }
    }
}

impl SegmentRules {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(CorpusError::Rules(format!(
                "need 0 < min ({}) <= max ({})",
                self.min_len, self.max_len
            )));
        }
        if self.pad_to < self.max_len {
            return Err(CorpusError::Rules(format!(
                "pad length {} shorter than max duration {}",
                self.pad_to, self.max_len
            )));
        }
        Ok(())
    }
}

/// A labelled vowel waveform, zero-padded to a fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment<T> {
    pub samples: Vec<T>,
    pub original_length: usize,
    pub phone: String,
    pub vclass: VowelClass,
    pub source: String,
    pub speaker: String,
    /// Interval bounds in the source utterance.
    pub start: usize,
    pub end: usize,
}

impl<T> AudioSegment<T> {
    /// Stable identifier used to align rows across feature sets.
    pub fn id(&self) -> String {
        format!("{}@{}", self.source, self.start)
    }

    /// The unpadded part of the waveform.
    pub fn voiced(&self) -> &[T] {
        &self.samples[..self.original_length]
    }
}

/// Cuts every selected vowel whose duration lies inside the rule window and
/// zero-pads it to `rules.pad_to`.
pub fn select_segments<T: Real>(
    intervals: &[PhoneInterval],
    audio: &[T],
    rules: &SegmentRules,
    source: &str,
    speaker: &str,
) -> Result<Vec<AudioSegment<T>>, CorpusError> {
    rules.validate()?;
    let mut out = Vec::new();
    for iv in intervals {
        if iv.end > audio.len() {
            return Err(CorpusError::OutOfRange {
                start: iv.start,
                end: iv.end,
                label: iv.label.clone(),
                len: audio.len(),
            });
        }
        let Some(vclass) = label_vowel(&iv.label) else {
            continue;
        };
        let d = iv.len();
        if d < rules.min_len || d > rules.max_len {
            continue;
        }
        let mut samples = vec![T::zero(); rules.pad_to];
        samples[..d].copy_from_slice(&audio[iv.start..iv.end]);
        out.push(AudioSegment {
            samples,
            original_length: d,
            phone: iv.label.clone(),
            vclass,
            source: source.to_string(),
            speaker: speaker.to_string(),
            start: iv.start,
            end: iv.end,
        });
    }
    Ok(out)
}

/// Which half of the corpus to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    #[default]
    All,
    Train,
    Test,
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(Partition::All),
            "train" => Ok(Partition::Train),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition `{other}` (all|train|test)")),
        }
    }
}

/// An utterance: its alignment file and the matching audio file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub phn: PathBuf,
    pub audio: PathBuf,
    /// Path relative to the corpus root, without extension.
    pub source: String,
    pub speaker: String,
}

fn collect_phn(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            collect_phn(&path, out)?;
        } else if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("phn"))
        {
            out.push(path);
        }
    }
    Ok(())
}

fn audio_for(phn: &Path) -> Option<PathBuf> {
    let stem = phn.file_stem()?.to_str()?;
    let dir = phn.parent()?;
    let candidates = [
        format!("{stem}.WAV"),
        format!("{stem}.wav"),
        format!("{stem}.WAV.wav"),
        format!("{stem}.SPH"),
        format!("{stem}.sph"),
    ];
    candidates.iter().map(|c| dir.join(c)).find(|p| p.is_file())
}

/// Lists paired utterances under `root` in lexicographic path order.
pub fn scan_corpus(root: &Path, partition: Partition) -> Result<Vec<Utterance>, CorpusError> {
    let mut phns = Vec::new();
    collect_phn(root, &mut phns)?;
    phns.sort();
    let mut out = Vec::new();
    for phn in phns {
        let rel = phn.strip_prefix(root).unwrap_or(&phn);
        let first = rel
            .components()
            .next()
            .and_then(|c| c.as_os_str().to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let keep = match partition {
            Partition::All => true,
            Partition::Train => first == "train",
            Partition::Test => first == "test",
        };
        if !keep {
            continue;
        }
        let Some(audio) = audio_for(&phn) else {
            log::warn!("no audio next to {}", phn.display());
            continue;
        };
        let source = rel.with_extension("").to_string_lossy().replace('\\', "/");
        let speaker = rel
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or("")
            .to_string();
        out.push(Utterance {
            phn,
            audio,
            source,
            speaker,
        });
    }
    Ok(out)
}

/// Reads one utterance and selects its vowel segments.
pub fn load_utterance<T: Real>(
    utt: &Utterance,
    rules: &SegmentRules,
    sample_rate: u32,
) -> Result<Vec<AudioSegment<T>>, CorpusError> {
    let text = fs::read_to_string(&utt.phn).map_err(|source| CorpusError::Io {
        path: utt.phn.clone(),
        source,
    })?;
    let intervals = parse_phn(&text).map_err(|e| CorpusError::InFile {
        path: utt.phn.clone(),
        source: Box::new(e),
    })?;
    let bytes = fs::read(&utt.audio).map_err(|source| CorpusError::Io {
        path: utt.audio.clone(),
        source,
    })?;
    let wave = decode_audio::<T>(&bytes).map_err(|source| CorpusError::Audio {
        path: utt.audio.clone(),
        source,
    })?;
    if wave.sample_rate != sample_rate {
        return Err(CorpusError::SampleRate {
            path: utt.audio.clone(),
            found: wave.sample_rate,
            expected: sample_rate,
        });
    }
    select_segments(&intervals, &wave.samples, rules, &utt.source, &utt.speaker).map_err(|e| {
        CorpusError::InFile {
            path: utt.phn.clone(),
            source: Box::new(e),
        }
    })
}

/// Scans the corpus and returns every selected segment, ordered by file path
/// then by position within the utterance.
pub fn load_corpus<T: Real>(
    root: &Path,
    partition: Partition,
    rules: &SegmentRules,
) -> Result<Vec<AudioSegment<T>>, CorpusError> {
    rules.validate()?;
    let utts = scan_corpus(root, partition)?;
    let per_file: Vec<Vec<AudioSegment<T>>> = utts
        .par_iter()
        .map(|u| load_utterance(u, rules, 16_000))
        .collect::<Result<_, _>>()?;
    Ok(per_file.into_iter().flatten().collect())
}

/// Per-phone and per-class tallies of a segment list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub front: usize,
    pub back: usize,
    pub per_phone: Vec<(String, usize)>,
}

impl SegmentCounts {
    pub fn of<T>(segments: &[AudioSegment<T>]) -> Self {
        let mut per_phone: Vec<(String, usize)> =
            SELECTED_PHONES.iter().map(|p| (p.to_string(), 0)).collect();
        let mut counts = SegmentCounts::default();
        for s in segments {
            match s.vclass {
                VowelClass::Front => counts.front += 1,
                VowelClass::Back => counts.back += 1,
            }
            if let Some(slot) = per_phone.iter_mut().find(|(p, _)| *p == s.phone) {
                slot.1 += 1;
            }
        }
        counts.per_phone = per_phone;
        counts
    }

    pub fn total(&self) -> usize {
        self.front + self.back
    }
}

/// Held-out split over segment indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub test_fraction: f64,
}

/// Stratified, seed-deterministic split. Each class contributes
/// `round(n_class * test_fraction)` test items, clamped to `1..n_class`.
pub fn split_dataset(
    classes: &[VowelClass],
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::Split(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in VowelClass::ALL {
        let mut idx: Vec<usize> = classes
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == class)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < 2 {
            return Err(CorpusError::Split(format!(
                "class {class} has {} segment(s), need at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        train,
        test,
        seed,
        test_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_phn_lines() {
        let iv = parse_phn("0 1200 h#\n1200 2900 iy\n").unwrap();
        assert_eq!(
            iv,
            vec![
                PhoneInterval {
                    start: 0,
                    end: 1200,
                    label: "h#".into()
                },
                PhoneInterval {
                    start: 1200,
                    end: 2900,
                    label: "iy".into()
                },
            ]
        );
        assert!(parse_phn("").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_phn_lines() {
        match parse_phn("0 10 h#\n2900 2900 iy\n") {
            Err(CorpusError::EmptyInterval { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_phn("0 10\n") {
            Err(CorpusError::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_phn("a 10 iy"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_phn("-1 10 iy"),
            Err(CorpusError::Parse { .. })
        ));
    }

    #[test]
    fn vowel_labels() {
        assert_eq!(label_vowel("iy"), Some(VowelClass::Front));
        assert_eq!(label_vowel("uh"), Some(VowelClass::Back));
        assert_eq!(label_vowel("ay"), None);
        assert_eq!(label_vowel("h#"), None);
        let front = SELECTED_PHONES
            .iter()
            .filter(|p| label_vowel(p) == Some(VowelClass::Front));
        assert_eq!(front.count(), 4);
    }

    fn iv(start: usize, end: usize, label: &str) -> PhoneInterval {
        PhoneInterval {
            start,
            end,
            label: label.into(),
        }
    }

    #[test]
    fn selection_window_and_padding() {
        let audio: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.01).sin() + 1.5).collect();
        let ivs = [
            iv(0, 1400, "iy"),
            iv(1400, 2900, "aa"),
            iv(2900, 4901, "ae"),
            iv(5000, 7000, "ay"),
        ];
        let segs = select_segments(&ivs, &audio, &SegmentRules::default(), "utt", "spk").unwrap();
        assert_eq!(segs.len(), 1);
        let s = &segs[0];
        assert_eq!(s.original_length, 1500);
        assert_eq!(s.samples.len(), 2000);
        assert_eq!(s.vclass, VowelClass::Back);
        assert!(s.samples[1500..].iter().all(|&v| v == 0.0));
        assert_eq!(&s.samples[..1500], &audio[1400..2900]);
    }

    #[test]
    fn selection_boundaries_inclusive() {
        let audio = vec![1.0f32; 5000];
        let ivs = [iv(0, 2000, "uw"), iv(2000, 3500, "eh")];
        let segs = select_segments(&ivs, &audio, &SegmentRules::default(), "u", "s").unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].original_length, 2000);
    }

    #[test]
    fn selection_out_of_range() {
        let audio = vec![0.0f64; 1000];
        let err = select_segments(
            &[iv(0, 1600, "iy")],
            &audio,
            &SegmentRules::default(),
            "u",
            "s",
        );
        assert!(matches!(err, Err(CorpusError::OutOfRange { .. })));
    }

    #[test]
    fn split_exact_stratification() {
        let mut classes = vec![VowelClass::Front; 10];
        classes.extend(vec![VowelClass::Back; 10]);
        let a = split_dataset(&classes, 0.2, 42).unwrap();
        let b = split_dataset(&classes, 0.2, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.test.len(), 4);
        assert_eq!(a.train.len(), 16);
        let front_test = a
            .test
            .iter()
            .filter(|&&i| classes[i] == VowelClass::Front)
            .count();
        assert_eq!(front_test, 2);
    }

    #[test]
    fn split_timit_scale() {
        let mut classes = vec![VowelClass::Front; 1736];
        classes.extend(vec![VowelClass::Back; 946]);
        let s = split_dataset(&classes, 0.2, 7).unwrap();
        let front_test = s
            .test
            .iter()
            .filter(|&&i| classes[i] == VowelClass::Front)
            .count();
        assert!(s.test.len().abs_diff(536) <= 1);
        assert!(front_test.abs_diff(347) <= 1);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let classes = [VowelClass::Front, VowelClass::Front, VowelClass::Back];
        assert!(matches!(
            split_dataset(&classes, 0.5, 1),
            Err(CorpusError::Split(_))
        ));
        let ok = [
            VowelClass::Front,
            VowelClass::Back,
            VowelClass::Front,
            VowelClass::Back,
        ];
        assert!(split_dataset(&ok, 1.0, 1).is_err());
    }
}
