//! On-disk form of prepared segments: `manifest.csv` (one row per
//! segment), `segments.w2cv` (a `[n, pad]` sample tensor in the weight
//! container format) and `counts.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convenc::{read_container, write_container, TensorBlob};
use crate::corpus::{label_vowel, AudioSegment, SegmentCounts, VowelClass};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const SEGMENTS_FILE: &str = "segments.w2cv";
pub const COUNTS_FILE: &str = "counts.json";
const TENSOR: &str = "segments";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestRow {
    index: usize,
    id: String,
    source: String,
    speaker: String,
    phone: String,
    class: VowelClass,
    start: usize,
    end: usize,
    original_length: usize,
}

/// Writes the three files into `dir` and returns the counts.
pub fn save_segments<T: Real>(segments: &[AudioSegment<T>], dir: &Path) -> Result<SegmentCounts> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pad = segments.first().map_or(0, |s| s.samples.len());
    if segments.iter().any(|s| s.samples.len() != pad) {
        return Err(Error::Config("segments have unequal padded lengths".into()));
    }
    let path = dir.join(MANIFEST_FILE);
    let mut w =
        csv::Writer::from_path(&path).map_err(|e| Error::malformed(&path, e.to_string()))?;
    for (index, s) in segments.iter().enumerate() {
        w.serialize(ManifestRow {
            index,
            id: s.id(),
            source: s.source.clone(),
            speaker: s.speaker.clone(),
            phone: s.phone.clone(),
            class: s.vclass,
            start: s.start,
            end: s.end,
            original_length: s.original_length,
        })
        .map_err(|e| Error::malformed(&path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let data: Vec<f32> = segments
        .iter()
        .flat_map(|s| s.samples.iter().map(|v| v.to_f64_lossy() as f32))
        .collect();
    let blob = TensorBlob::new(TENSOR, vec![segments.len(), pad], data);
    let path = dir.join(SEGMENTS_FILE);
    fs::write(&path, write_container(&[blob])).map_err(|e| Error::io(&path, e))?;

    let counts = SegmentCounts::of(segments);
    let path = dir.join(COUNTS_FILE);
    let json = serde_json::to_string_pretty(&counts).expect("counts serialize");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(counts)
}

/// Reads segments back from a manifest path; the sample tensor is expected
/// next to it.
pub fn load_segments<T: Real>(manifest: &Path) -> Result<Vec<AudioSegment<T>>> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut rdr =
        csv::Reader::from_path(manifest).map_err(|e| Error::malformed(manifest, e.to_string()))?;
    let rows: Vec<ManifestRow> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::malformed(manifest, e.to_string()))?;
    let path = dir.join(SEGMENTS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let blobs = read_container(&bytes).map_err(|e| Error::malformed(&path, e.to_string()))?;
    let blob = blobs
        .into_iter()
        .find(|b| b.name == TENSOR)
        .ok_or_else(|| Error::malformed(&path, "no `segments` tensor"))?;
    if blob.dims.len() != 2 || blob.dims[0] != rows.len() {
        return Err(Error::malformed(
            &path,
            format!(
                "tensor shape {:?} does not match {} manifest rows",
                blob.dims,
                rows.len()
            ),
        ));
    }
    let pad = blob.dims[1];
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.index != i {
                return Err(Error::malformed(
                    manifest,
                    format!("row {i} has index {}", r.index),
                ));
            }
            if label_vowel(&r.phone) != Some(r.class) {
                return Err(Error::malformed(
                    manifest,
                    format!("row {i}: phone `{}` is not a {} vowel", r.phone, r.class),
                ));
            }
            if r.original_length > pad {
                return Err(Error::malformed(
                    manifest,
                    format!(
                        "row {i}: length {} exceeds padding {pad}",
                        r.original_length
                    ),
                ));
            }
            let seg = AudioSegment {
                samples: blob.data[i * pad..(i + 1) * pad]
                    .iter()
                    .map(|&v| T::lit(v as f64))
                    .collect(),
                original_length: r.original_length,
                phone: r.phone,
                vclass: r.class,
                source: r.source,
                speaker: r.speaker,
                start: r.start,
                end: r.end,
            };
            if seg.id() != r.id {
                return Err(Error::malformed(
                    manifest,
                    format!("row {i}: id `{}` inconsistent with source/start", r.id),
                ));
            }
            Ok(seg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, Partition, SegmentRules};
    use crate::synth::{write_synthetic_corpus, SynthCorpusConfig};

    #[test]
    fn round_trip_is_exact() {
        let corpus = tempfile::tempdir().unwrap();
        let layout = SynthCorpusConfig {
            speakers: 1,
            utterances_per_speaker: 2,
            vowels_per_utterance: 5,
            ..Default::default()
        };
        write_synthetic_corpus(corpus.path(), &layout).unwrap();
        let segs =
            load_corpus::<f64>(corpus.path(), Partition::All, &SegmentRules::default()).unwrap();
        let out = tempfile::tempdir().unwrap();
        let counts = save_segments(&segs, out.path()).unwrap();
        assert_eq!(counts.total(), segs.len());
        let back = load_segments::<f64>(&out.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, segs);
    }

    #[test]
    fn corrupted_tensor_rejected() {
        let corpus = tempfile::tempdir().unwrap();
        let layout = SynthCorpusConfig {
            speakers: 1,
            utterances_per_speaker: 1,
            vowels_per_utterance: 4,
            ..Default::default()
        };
        write_synthetic_corpus(corpus.path(), &layout).unwrap();
        let segs =
            load_corpus::<f64>(corpus.path(), Partition::All, &SegmentRules::default()).unwrap();
        let out = tempfile::tempdir().unwrap();
        save_segments(&segs, out.path()).unwrap();
        let p = out.path().join(SEGMENTS_FILE);
        let mut bytes = fs::read(&p).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&p, bytes).unwrap();
        let err = load_segments::<f64>(&out.path().join(MANIFEST_FILE)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
