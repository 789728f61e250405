use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::scalar::Real;

/// MFCC front-end parameters. Defaults: 25 ms Hamming frames with a 10 ms
/// hop at 16 kHz, 512-point FFT, 40 HTK mel filters over 0-8 kHz, 13
/// coefficients, no frame centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: 16_000,
            frame_len: 400,
            hop: 160,
            n_fft: 512,
            n_mels: 40,
            n_mfcc: 13,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-10,
        }
    }
}

/// HTK mel scale.
pub fn hz_to_mel<T: Real>(hz: T) -> T {
    T::lit(2595.0) * (T::one() + hz / T::lit(700.0)).log10()
}

pub fn mel_to_hz<T: Real>(mel: T) -> T {
    T::lit(700.0) * (T::lit(10.0).powf(mel / T::lit(2595.0)) - T::one())
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi n / (N - 1))`.
pub fn hamming_window<T: Real>(n: usize) -> Result<Vec<T>, SignalError> {
    if n < 2 {
        return Err(SignalError::Argument(format!("window length {n} < 2")));
    }
    let denom = T::from_usize_lossy(n - 1);
    let two_pi = T::TAU();
    Ok((0..n)
        .map(|i| T::lit(0.54) - T::lit(0.46) * (two_pi * T::from_usize_lossy(i) / denom).cos())
        .collect())
}

/// Triangular mel filters, `n_filters x (n_fft / 2 + 1)`, evaluated at the
/// FFT bin frequencies.
pub fn mel_filterbank<T: Real>(
    n_filters: usize,
    n_fft: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<Array2<T>, SignalError> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(SignalError::Config(format!(
            "need 0 <= f_min ({f_min}) < f_max ({f_max}) <= {nyquist}"
        )));
    }
    if n_filters == 0 || n_fft < 2 {
        return Err(SignalError::Config("empty filterbank".into()));
    }
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    let mut fb = Array2::<T>::zeros((n_filters, n_bins));
    for m in 0..n_filters {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let rise = (f - lo) / (center - lo);
            let fall = (hi - f) / (hi - center);
            let w = rise.min(fall).max(0.0);
            fb[[m, k]] = T::lit(w);
        }
        if fb.row(m).iter().all(|w| *w == T::zero()) {
            return Err(SignalError::Config(format!(
                "mel filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; \
                 reduce n_filters or increase n_fft"
            )));
        }
    }
    Ok(fb)
}

/// Orthonormal DCT-II basis, `n_out x n_in` (rows are basis vectors).
pub fn dct2_orthonormal<T: Real>(n_out: usize, n_in: usize) -> Array2<T> {
    let n = T::from_usize_lossy(n_in);
    let pi = T::PI();
    let first = (T::one() / n).sqrt();
    let rest = (T::lit(2.0) / n).sqrt();
    Array2::from_shape_fn((n_out, n_in), |(k, i)| {
        let scale = if k == 0 { first } else { rest };
        let arg = pi * T::from_usize_lossy(k) * (T::lit(2.0) * T::from_usize_lossy(i) + T::one())
            / (T::lit(2.0) * n);
        scale * arg.cos()
    })
}

/// One-sided power spectrum `|X_k|^2`, `k = 0..=n_fft/2`, of a frame
/// zero-padded to `n_fft`.
pub fn power_spectrum<T: Real>(frame: &[T], n_fft: usize) -> Result<Vec<T>, SignalError> {
    if frame.len() > n_fft {
        return Err(SignalError::Argument(format!(
            "frame length {} exceeds FFT size {n_fft}",
            frame.len()
        )));
    }
    let fft = FftPlanner::<T>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
    Ok(spectrum_with(&*fft, frame, &mut buf))
}

fn spectrum_with<T: Real>(fft: &dyn Fft<T>, frame: &[T], buf: &mut [Complex<T>]) -> Vec<T> {
    for (slot, v) in buf
        .iter_mut()
        .zip(frame.iter().copied().chain(std::iter::repeat(T::zero())))
    {
        *slot = Complex::new(v, T::zero());
    }
    fft.process(buf);
    buf[..buf.len() / 2 + 1]
        .iter()
        .map(|c| c.norm_sqr())
        .collect()
}

/// Per-frame cepstra, `n_frames x n_mfcc`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix<T> {
    pub frames: Array2<T>,
    pub frame_len: usize,
    pub frame_hop: usize,
}

impl<T: Real> MfccMatrix<T> {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// How a `frames x dims` matrix becomes one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Mean,
    Flatten,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Mean => "mean",
            PoolMode::Flatten => "flatten",
        })
    }
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(PoolMode::Mean),
            "flatten" => Ok(PoolMode::Flatten),
            other => Err(format!("unknown pooling `{other}` (mean|flatten)")),
        }
    }
}

/// Pools along the first axis (frames): column means, or row-major flattening.
pub(crate) fn pool_rows<T: Real>(
    m: ArrayView2<'_, T>,
    mode: PoolMode,
) -> Result<Vec<T>, SignalError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(SignalError::Argument("cannot pool an empty matrix".into()));
    }
    Ok(match mode {
        PoolMode::Mean => m.mean_axis(Axis(0)).expect("nonempty").to_vec(),
        PoolMode::Flatten => m.iter().copied().collect(),
    })
}

pub fn pool_frames<T: Real>(m: &MfccMatrix<T>, mode: PoolMode) -> Result<Vec<T>, SignalError> {
    pool_rows(m.frames.view(), mode)
}

/// Reusable MFCC pipeline: window, FFT plan, filterbank and DCT basis are
/// built once.
pub struct MfccExtractor<T: Real> {
    config: MfccConfig,
    window: Vec<T>,
    filterbank: Array2<T>,
    dct: Array2<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for MfccExtractor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl<T: Real> MfccExtractor<T> {
    pub fn new(config: MfccConfig) -> Result<Self, SignalError> {
        if config.frame_len > config.n_fft {
            return Err(SignalError::Config(format!(
                "frame length {} exceeds FFT size {}",
                config.frame_len, config.n_fft
            )));
        }
        if config.hop == 0 {
            return Err(SignalError::Config("hop must be positive".into()));
        }
        if config.n_mfcc == 0 || config.n_mfcc > config.n_mels {
            return Err(SignalError::Config(format!(
                "n_mfcc {} must lie in 1..={}",
                config.n_mfcc, config.n_mels
            )));
        }
        if config.log_floor <= 0.0 {
            return Err(SignalError::Config("log floor must be positive".into()));
        }
        let window = hamming_window(config.frame_len)?;
        let filterbank = mel_filterbank(
            config.n_mels,
            config.n_fft,
            config.sample_rate,
            config.f_min,
            config.f_max,
        )?;
        let dct = dct2_orthonormal(config.n_mfcc, config.n_mels);
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(MfccExtractor {
            config,
            window,
            filterbank,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.config.frame_len {
            0
        } else {
            1 + (len - self.config.frame_len) / self.config.hop
        }
    }

    /// MFCCs of every full frame of `samples`; no centering or edge padding.
    pub fn extract(&self, samples: &[T]) -> Result<MfccMatrix<T>, SignalError> {
        let c = &self.config;
        let n_frames = self.n_frames(samples.len());
        if n_frames == 0 {
            return Err(SignalError::Argument(format!(
                "{} samples is shorter than one {}-sample frame",
                samples.len(),
                c.frame_len
            )));
        }
        let floor = T::lit(c.log_floor);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); c.n_fft];
        let mut windowed = vec![T::zero(); c.frame_len];
        let mut log_mel = Array2::<T>::zeros((n_frames, c.n_mels));
        for f in 0..n_frames {
            let frame = &samples[f * c.hop..f * c.hop + c.frame_len];
            for ((w, &x), &h) in windowed.iter_mut().zip(frame).zip(&self.window) {
                *w = x * h;
            }
            let power = spectrum_with(&*self.fft, &windowed, &mut buf);
            for (m, out) in log_mel.row_mut(f).iter_mut().enumerate() {
                let energy: T = self
                    .filterbank
                    .row(m)
                    .iter()
                    .zip(&power)
                    .map(|(&w, &p)| w * p)
                    .sum();
                *out = (energy + floor).ln();
            }
        }
        let frames = log_mel.dot(&self.dct.t());
        Ok(MfccMatrix {
            frames,
            frame_len: c.frame_len,
            frame_hop: c.hop,
        })
    }
}
