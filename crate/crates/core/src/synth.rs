//! Source-filter vowel synthesis and a small TIMIT-layout corpus writer,
//! used to exercise the pipeline without licensed data.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{label_vowel, VowelClass};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal::{encode_sphere, encode_wav};

pub const SAMPLE_RATE: u32 = 16_000;

/// Textbook adult formant frequencies (F1, F2, F3) in Hz.
pub const CANONICAL_FORMANTS: [(&str, [f64; 3]); 9] = [
    ("iy", [270.0, 2290.0, 3010.0]),
    ("ih", [390.0, 1990.0, 2550.0]),
    ("eh", [530.0, 1840.0, 2480.0]),
    ("ae", [660.0, 1720.0, 2410.0]),
    ("aa", [730.0, 1090.0, 2440.0]),
    ("ao", [570.0, 840.0, 2410.0]),
    ("ow", [490.0, 910.0, 2450.0]),
    ("uh", [440.0, 1020.0, 2240.0]),
    ("uw", [300.0, 870.0, 2240.0]),
];

pub fn canonical_formants(phone: &str) -> Option<[f64; 3]> {
    CANONICAL_FORMANTS
        .iter()
        .find(|(p, _)| *p == phone)
        .map(|(_, f)| *f)
}

/// Parameters of one synthetic vowel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub f0: f64,
    /// Resonance frequencies in Hz, lowest first.
    pub formants: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Standard deviation of additive white noise relative to peak level.
    pub noise: f64,
    pub amplitude: f64,
}

impl VoiceParams {
    /// Canonical vowel at a given pitch with a fixed fourth resonance.
    pub fn vowel(phone: &str, f0: f64) -> Option<Self> {
        let [f1, f2, f3] = canonical_formants(phone)?;
        Some(VoiceParams {
            f0,
            formants: vec![f1, f2, f3, 3500.0],
            bandwidths: vec![60.0, 90.0, 150.0, 200.0],
            noise: 0.002,
            amplitude: 0.3,
        })
    }
}

/// Klatt-style two-pole resonator with unity gain at DC.
#[derive(Debug, Clone, Copy)]
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64, fs: f64) -> Self {
        let t = 1.0 / fs;
        let c = -(-2.0 * std::f64::consts::PI * bw * t).exp();
        let b = 2.0
            * (-std::f64::consts::PI * bw * t).exp()
            * (2.0 * std::f64::consts::PI * freq * t).cos();
        Resonator {
            a: 1.0 - b - c,
            b,
            c,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Impulse train at `f0` through a glottal low-pass and a cascade of
/// resonators, peak-normalised to `amplitude`, plus white noise.
pub fn synthesize_vowel<R: Rng>(
    p: &VoiceParams,
    n_samples: usize,
    sample_rate: u32,
    rng: &mut R,
) -> Vec<f64> {
    assert_eq!(
        p.formants.len(),
        p.bandwidths.len(),
        "one bandwidth per formant"
    );
    let fs = sample_rate as f64;
    let mut res: Vec<Resonator> = p
        .formants
        .iter()
        .zip(&p.bandwidths)
        .map(|(&f, &b)| Resonator::new(f, b, fs))
        .collect();
    // two real poles at 0.97 give the -12 dB/oct glottal tilt
    let (mut g1, mut g2) = (0.0f64, 0.0f64);
    let period = fs / p.f0;
    let mut phase = rng.random_range(0.0..period);
    let warm = (0.05 * fs) as usize;
    let mut out = Vec::with_capacity(n_samples);
    for n in 0..n_samples + warm {
        phase += 1.0;
        let pulse = if phase >= period {
            phase -= period;
            1.0
        } else {
            0.0
        };
        g1 = pulse + 0.97 * g1;
        g2 = g1 + 0.97 * g2;
        let mut y = g2;
        for r in &mut res {
            y = r.step(y);
        }
        if n >= warm {
            out.push(y);
        }
    }
    // radiation: first difference
    let mut prev = 0.0;
    for v in &mut out {
        let d = *v - prev;
        prev = *v;
        *v = d;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for v in &mut out {
        *v = *v / peak * p.amplitude
            + rng.random_range(-1.0..1.0) * p.noise * 3f64.sqrt() * p.amplitude;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AudioFormat {
    Wav,
    Sphere,
}

/// Shape of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpusConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub vowels_per_utterance: usize,
    /// Relative spread of per-token formant perturbation.
    pub formant_jitter: f64,
    pub seed: u64,
    pub format: AudioFormat,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            speakers: 10,
            utterances_per_speaker: 6,
            vowels_per_utterance: 10,
            formant_jitter: 0.05,
            seed: 7,
            format: AudioFormat::Wav,
        }
    }
}

/// What was written: segments inside the selection window by class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub utterances: usize,
    pub front: usize,
    pub back: usize,
    /// Vowel tokens written outside the duration window.
    pub out_of_window: usize,
    pub files: Vec<PathBuf>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `TRAIN/DR1/<speaker>/<utt>.{WAV|SPH,PHN}` under `root`. Each
/// utterance alternates silence, fricative noise and vowels; about one in
/// eight vowel tokens falls outside 1500..=2000 samples, and one unselected
/// vowel (`ax`) appears per utterance.
pub fn write_synthetic_corpus(root: &Path, layout: &SynthCorpusConfig) -> Result<SynthSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(layout.seed);
    let mut summary = SynthSummary::default();
    let phones: Vec<&str> = CANONICAL_FORMANTS.iter().map(|(p, _)| *p).collect();
    for s in 0..layout.speakers {
        let speaker = format!("S{s:03}");
        let f0_base = rng.random_range(95.0..150.0);
        let tract = rng.random_range(0.95..1.05);
        for u in 0..layout.utterances_per_speaker {
            let mut audio: Vec<f64> = Vec::new();
            let mut phn = String::new();
            let push = |label: &str, samples: Vec<f64>, audio: &mut Vec<f64>, phn: &mut String| {
                let start = audio.len();
                audio.extend(samples);
                phn.push_str(&format!("{start} {} {label}\n", audio.len()));
            };
            push("h#", noise(&mut rng, 1200, 0.001), &mut audio, &mut phn);
            for v in 0..layout.vowels_per_utterance {
                let phone = phones[rng.random_range(0..phones.len())];
                let len = if rng.random_range(0..8) == 0 {
                    if rng.random::<bool>() {
                        rng.random_range(600..1400)
                    } else {
                        rng.random_range(2100..2800)
                    }
                } else {
                    rng.random_range(1500..=2000)
                };
                let mut p = VoiceParams::vowel(phone, f0_base * rng.random_range(0.9..1.1))
                    .expect("canonical vowel");
                for f in p.formants.iter_mut().take(3) {
                    *f *= tract * (1.0 + layout.formant_jitter * rng.random_range(-1.0..1.0));
                }
                p.amplitude = rng.random_range(0.15..0.5);
                let wave = synthesize_vowel(&p, len, SAMPLE_RATE, &mut rng);
                if (1500..=2000).contains(&len) {
                    match label_vowel(phone) {
                        Some(VowelClass::Front) => summary.front += 1,
                        Some(VowelClass::Back) => summary.back += 1,
                        None => {}
                    }
                } else {
                    summary.out_of_window += 1;
                }
                push(phone, wave, &mut audio, &mut phn);
                if v == layout.vowels_per_utterance / 2 {
                    let p = VoiceParams::vowel("eh", f0_base).expect("canonical vowel");
                    let schwa = VoiceParams {
                        formants: vec![500.0, 1500.0, 2500.0, 3500.0],
                        ..p
                    };
                    push(
                        "ax",
                        synthesize_vowel(&schwa, 1700, SAMPLE_RATE, &mut rng),
                        &mut audio,
                        &mut phn,
                    );
                }
                let fric = rng.random_range(800..1600);
                push("s", noise(&mut rng, fric, 0.05), &mut audio, &mut phn);
            }
            push("h#", noise(&mut rng, 1200, 0.001), &mut audio, &mut phn);

            let dir = root.join("TRAIN").join("DR1").join(&speaker);
            let stem = format!("SX{u:03}");
            let (ext, bytes) = match layout.format {
                AudioFormat::Wav => ("WAV", encode_wav(&audio, SAMPLE_RATE)),
                AudioFormat::Sphere => ("SPH", encode_sphere(&audio, SAMPLE_RATE)),
            };
            let audio_path = dir.join(format!("{stem}.{ext}"));
            let phn_path = dir.join(format!("{stem}.PHN"));
            write_file(&audio_path, &bytes)?;
            write_file(&phn_path, phn.as_bytes())?;
            summary.files.push(phn_path);
            summary.utterances += 1;
        }
    }
    Ok(summary)
}

fn noise<R: Rng>(rng: &mut R, n: usize, level: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-level..level)).collect()
}

/// Converts a synthesized waveform into the crate scalar type.
pub fn to_scalar<T: Real>(x: &[f64]) -> Vec<T> {
    x.iter().map(|&v| T::lit(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, Partition, SegmentCounts, SegmentRules};
    use crate::formant::{estimate_f1f2, FormantConfig};

    #[test]
    fn resonator_unity_dc_gain() {
        let mut r = Resonator::new(500.0, 80.0, 16000.0);
        let mut y = 0.0;
        for _ in 0..20000 {
            y = r.step(1.0);
        }
        assert!((y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vowel_formants_recoverable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = VoiceParams::vowel("ae", 120.0).unwrap();
        let x = synthesize_vowel(&p, 1800, SAMPLE_RATE, &mut rng);
        assert!(x.iter().all(|v| v.abs() <= 0.31));
        let est = estimate_f1f2(&x, SAMPLE_RATE, &FormantConfig::default()).unwrap();
        assert!((est.pair.f1 - 660.0).abs() < 60.0, "{est:?}");
        assert!((est.pair.f2 - 1720.0).abs() < 60.0, "{est:?}");
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let layout = SynthCorpusConfig {
            speakers: 2,
            utterances_per_speaker: 2,
            vowels_per_utterance: 6,
            format: AudioFormat::Sphere,
            ..Default::default()
        };
        let summary = write_synthetic_corpus(dir.path(), &layout).unwrap();
        assert_eq!(summary.utterances, 4);
        let segs =
            load_corpus::<f64>(dir.path(), Partition::Train, &SegmentRules::default()).unwrap();
        let counts = SegmentCounts::of(&segs);
        assert_eq!(counts.front, summary.front);
        assert_eq!(counts.back, summary.back);
        assert!(segs.iter().all(|s| s.samples.len() == 2000));
        assert!(
            load_corpus::<f64>(dir.path(), Partition::Test, &SegmentRules::default())
                .unwrap()
                .is_empty()
        );
    }
}
