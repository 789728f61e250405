//! F1/F2 estimation: resample, pre-emphasis, Burg LPC per frame, pole
//! angles to formant frequencies, medians across frames.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{total_cmp, Real};
use crate::signal::hamming_window;

#[derive(Debug, Error)]
pub enum FormantError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate input: zero signal energy")]
    Degenerate,
    #[error("no frame out of {frames} yielded two formants")]
    NoFormants { frames: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormantPair<T> {
    pub f1: T,
    pub f2: T,
}

/// All-pole model `A(z) = 1 + sum_k a[k] z^-k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcModel<T> {
    pub order: usize,
    /// `a[1..=order]`, without the leading 1.
    pub coefficients: Vec<T>,
    /// Final forward prediction error power.
    pub gain: T,
    pub reflection: Vec<T>,
}

/// A resonance read off a pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance<T> {
    pub frequency: T,
    pub bandwidth: T,
}

/// `y[0] = x[0]`, `y[n] = x[n] - alpha x[n-1]`.
pub fn preemphasize<T: Real>(x: &[T], alpha: T) -> Result<Vec<T>, FormantError> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(FormantError::Argument(format!(
            "pre-emphasis {alpha} outside [0, 1)"
        )));
    }
    let mut y = Vec::with_capacity(x.len());
    let mut prev = T::zero();
    for (i, &v) in x.iter().enumerate() {
        y.push(if i == 0 { v } else { v - alpha * prev });
        prev = v;
    }
    Ok(y)
}

/// Burg's method: minimises the summed forward and backward prediction
/// error at every stage, which keeps each reflection coefficient in [-1, 1].
pub fn lpc_burg<T: Real>(x: &[T], order: usize) -> Result<LpcModel<T>, FormantError> {
    let n = x.len();
    if order < 2 {
        return Err(FormantError::Argument(format!("order {order} < 2")));
    }
    if n <= 2 * order {
        return Err(FormantError::Argument(format!(
            "{n} samples too short for order {order}"
        )));
    }
    let energy: T = x.iter().map(|&v| v * v).sum();
    if !(energy > T::zero()) {
        return Err(FormantError::Degenerate);
    }
    let mut fwd = x.to_vec();
    let mut bwd = x.to_vec();
    let mut a = vec![T::zero(); order + 1];
    a[0] = T::one();
    let mut err = energy / T::from_usize_lossy(n);
    let mut reflection = Vec::with_capacity(order);
    let two = T::lit(2.0);
    for m in 0..order {
        let mut num = T::zero();
        let mut den = T::zero();
        for i in m + 1..n {
            num = num + fwd[i] * bwd[i - 1];
            den = den + fwd[i] * fwd[i] + bwd[i - 1] * bwd[i - 1];
        }
        let k = if den > T::zero() {
            -two * num / den
        } else {
            T::zero()
        };
        let prev = a.clone();
        for i in 1..=m + 1 {
            a[i] = prev[i] + k * prev[m + 1 - i];
        }
        for i in (m + 1..n).rev() {
            let f = fwd[i];
            let b = bwd[i - 1];
            fwd[i] = f + k * b;
            bwd[i] = b + k * f;
        }
        err = err * (T::one() - k * k);
        reflection.push(k);
    }
    Ok(LpcModel {
        order,
        coefficients: a[1..].to_vec(),
        gain: err,
        reflection,
    })
}

/// Roots of the monic polynomial `z^n + c[0] z^(n-1) + ... + c[n-1]`
/// by simultaneous Aberth-Ehrlich iteration.
pub fn monic_roots<T: Real>(c: &[T]) -> Vec<Complex<T>> {
    let n = c.len();
    if n == 0 {
        return Vec::new();
    }
    let eval = |z: Complex<T>| {
        let mut p = Complex::new(T::one(), T::zero());
        let mut dp = Complex::new(T::zero(), T::zero());
        for &ci in c {
            dp = dp * z + p;
            p = p * z + Complex::new(ci, T::zero());
        }
        (p, dp)
    };
    let bound = c.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let radius = (T::one() + bound).min(T::lit(2.0)).max(T::lit(0.5));
    let mut z: Vec<Complex<T>> = (0..n)
        .map(|k| {
            let ang = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(n) + T::lit(0.4);
            Complex::from_polar(radius, ang)
        })
        .collect();
    let tol = T::epsilon() * T::lit(16.0);
    for _ in 0..500 {
        let mut worst = T::zero();
        for k in 0..n {
            let (p, dp) = eval(z[k]);
            if p.norm() == T::zero() {
                continue;
            }
            let ratio = p / dp;
            let mut repulsion = Complex::new(T::zero(), T::zero());
            for j in 0..n {
                if j != k {
                    repulsion = repulsion + (z[k] - z[j]).inv();
                }
            }
            let step = ratio / (Complex::new(T::one(), T::zero()) - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[k] = z[k] - step;
                worst = worst.max(step.norm() / (T::one() + z[k].norm()));
            }
        }
        if worst <= tol {
            break;
        }
    }
    z
}

impl<T: Real> LpcModel<T> {
    /// Poles of `1 / A(z)`.
    pub fn poles(&self) -> Vec<Complex<T>> {
        monic_roots(&self.coefficients)
    }
}

/// Thresholds applied when reading resonances off poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleFilter {
    pub min_frequency: f64,
    pub nyquist_margin: f64,
    pub max_bandwidth: f64,
}

impl Default for PoleFilter {
    fn default() -> Self {
        PoleFilter {
            min_frequency: 90.0,
            nyquist_margin: 50.0,
            max_bandwidth: 400.0,
        }
    }
}

/// Resonances of upper-half-plane poles that pass `filter`, ascending.
pub fn poles_to_resonances<T: Real>(
    poles: &[Complex<T>],
    sample_rate: T,
    filter: &PoleFilter,
) -> Vec<Resonance<T>> {
    let nyquist = sample_rate / T::lit(2.0);
    let mut out: Vec<Resonance<T>> = poles
        .iter()
        .filter(|p| p.im > T::zero())
        .map(|p| Resonance {
            frequency: p.arg() * sample_rate / T::TAU(),
            bandwidth: -(sample_rate / T::PI()) * p.norm().ln(),
        })
        .filter(|r| {
            r.frequency >= T::lit(filter.min_frequency)
                && r.frequency <= nyquist - T::lit(filter.nyquist_margin)
                && r.bandwidth <= T::lit(filter.max_bandwidth)
        })
        .collect();
    out.sort_by(|a, b| total_cmp(&a.frequency, &b.frequency));
    out
}

pub fn roots_to_formants<T: Real>(
    model: &LpcModel<T>,
    sample_rate: T,
    filter: &PoleFilter,
) -> Vec<Resonance<T>> {
    poles_to_resonances(&model.poles(), sample_rate, filter)
}

/// Band-limited resampling by windowed-sinc interpolation.
pub fn resample<T: Real>(x: &[T], from_rate: u32, to_rate: u32) -> Vec<T> {
    if from_rate == to_rate || x.is_empty() {
        return x.to_vec();
    }
    let ratio = to_rate as f64 / from_rate as f64;
    let cutoff = 0.95 * ratio.min(1.0);
    let zero_crossings = 16.0;
    let half_width = zero_crossings / cutoff;
    let out_len = (x.len() as f64 * ratio).floor() as usize;
    let pi = std::f64::consts::PI;
    (0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let lo = ((t - half_width).ceil().max(0.0)) as usize;
            let hi = ((t + half_width).floor() as usize).min(x.len() - 1);
            let mut acc = 0.0f64;
            for (i, &v) in x.iter().enumerate().take(hi + 1).skip(lo) {
                let u = i as f64 - t;
                let arg = pi * cutoff * u;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    arg.sin() / arg
                };
                let w = 0.42
                    + 0.5 * (pi * u / half_width).cos()
                    + 0.08 * (2.0 * pi * u / half_width).cos();
                acc += v.to_f64_lossy() * cutoff * sinc * w;
            }
            T::lit(acc)
        })
        .collect()
}

/// Formant tracker settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormantConfig {
    pub analysis_rate: u32,
    pub preemphasis: f64,
    pub frame_secs: f64,
    pub hop_secs: f64,
    pub order: usize,
    pub poles: PoleFilter,
}

impl Default for FormantConfig {
    fn default() -> Self {
        FormantConfig {
            analysis_rate: 10_000,
            preemphasis: 0.98,
            frame_secs: 0.025,
            hop_secs: 0.010,
            order: 10,
            poles: PoleFilter::default(),
        }
    }
}

/// Summary F1/F2 of a segment with the number of frames that contributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormantEstimate<T> {
    pub pair: FormantPair<T>,
    pub frames_used: usize,
}

fn median<T: Real>(v: &mut [T]) -> T {
    v.sort_by(total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// Median F1/F2 over frames of `voiced` (the unpadded samples of a segment).
pub fn estimate_f1f2<T: Real>(
    voiced: &[T],
    sample_rate: u32,
    cfg: &FormantConfig,
) -> Result<FormantEstimate<T>, FormantError> {
    let x = resample(voiced, sample_rate, cfg.analysis_rate);
    let x = preemphasize(&x, T::lit(cfg.preemphasis))?;
    let rate = cfg.analysis_rate as f64;
    let frame_len = (cfg.frame_secs * rate).round() as usize;
    let hop = ((cfg.hop_secs * rate).round() as usize).max(1);
    if x.len() < frame_len {
        return Err(FormantError::Argument(format!(
            "{} samples at {} Hz shorter than one analysis frame",
            x.len(),
            cfg.analysis_rate
        )));
    }
    let window =
        hamming_window::<T>(frame_len).map_err(|e| FormantError::Argument(e.to_string()))?;
    let n_frames = 1 + (x.len() - frame_len) / hop;
    let fs = T::lit(rate);
    let mut f1s = Vec::with_capacity(n_frames);
    let mut f2s = Vec::with_capacity(n_frames);
    let mut frame = vec![T::zero(); frame_len];
    for f in 0..n_frames {
        for ((o, &s), &w) in frame
            .iter_mut()
            .zip(&x[f * hop..f * hop + frame_len])
            .zip(&window)
        {
            *o = s * w;
        }
        let model = match lpc_burg(&frame, cfg.order) {
            Ok(m) => m,
            Err(FormantError::Degenerate) => continue,
            Err(e) => return Err(e),
        };
        let res = roots_to_formants(&model, fs, &cfg.poles);
        if res.len() >= 2 {
            f1s.push(res[0].frequency);
            f2s.push(res[1].frequency);
        }
    }
    if f1s.is_empty() {
        return Err(FormantError::NoFormants { frames: n_frames });
    }
    let frames_used = f1s.len();
    Ok(FormantEstimate {
        pair: FormantPair {
            f1: median(&mut f1s),
            f2: median(&mut f2s),
        },
        frames_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn preemphasis_formula() {
        let x = [1.0f64, 2.0, -1.0];
        assert_eq!(preemphasize(&x, 0.0).unwrap(), x.to_vec());
        let y = preemphasize(&[1.0f64, 1.0, 1.0], 0.98).unwrap();
        assert_abs_diff_eq!(y[0], 1.0);
        assert_abs_diff_eq!(y[1], 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(y[2], 0.02, epsilon = 1e-12);
        assert!(preemphasize(&x, 1.0).is_err());
        assert!(preemphasize(&x, -0.1).is_err());
    }

    #[test]
    fn preemphasis_dc_gain() {
        // |1 - alpha e^{-iw}|^2 at w = 0 is (1 - alpha)^2
        let alpha = 0.9f64;
        let x = vec![1.0; 10_000];
        let y = preemphasize(&x, alpha).unwrap();
        let ratio = y[100..].iter().map(|v| v * v).sum::<f64>()
            / x[100..].iter().map(|v| v * v).sum::<f64>();
        assert_abs_diff_eq!(ratio, (1.0 - alpha) * (1.0 - alpha), epsilon = 1e-12);
    }

    #[test]
    fn burg_rejects_bad_input() {
        assert!(matches!(
            lpc_burg(&[0.0f64; 100], 4),
            Err(FormantError::Degenerate)
        ));
        assert!(matches!(
            lpc_burg(&[1.0f64; 8], 4),
            Err(FormantError::Argument(_))
        ));
        assert!(matches!(
            lpc_burg(&[1.0f64; 100], 1),
            Err(FormantError::Argument(_))
        ));
    }

    #[test]
    fn burg_impulse_has_no_structure() {
        // A single impulse has zero autocorrelation at every nonzero lag.
        let mut x = vec![0.0f64; 64];
        x[0] = 1.0;
        let m = lpc_burg(&x, 4).unwrap();
        assert!(m.coefficients.iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn burg_recovers_sinusoid_poles() {
        let w = 0.7f64;
        let x: Vec<f64> = (0..400).map(|n| (w * n as f64).cos()).collect();
        let m = lpc_burg(&x, 2).unwrap();
        let poles = m.poles();
        let upper = poles.iter().find(|p| p.im > 0.0).unwrap();
        assert_abs_diff_eq!(upper.norm(), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(upper.arg(), w, epsilon = 1e-3);
    }

    #[test]
    fn burg_recovers_ar2_process() {
        use rand::{Rng, SeedableRng};
        let (r, w) = (0.9f64, 1.1f64);
        let (a1, a2) = (-2.0 * r * w.cos(), r * r);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut x = vec![0.0f64; 20_000];
        for n in 2..x.len() {
            x[n] = -a1 * x[n - 1] - a2 * x[n - 2] + rng.random_range(-1.0..1.0);
        }
        let m = lpc_burg(&x, 2).unwrap();
        assert_abs_diff_eq!(m.coefficients[0], a1, epsilon = 0.02);
        assert_abs_diff_eq!(m.coefficients[1], a2, epsilon = 0.02);
    }

    #[test]
    fn roots_match_polynomial() {
        // (z - 0.5)(z + 0.25)(z^2 - 2*0.9*cos(1)z + 0.81)
        let c = 2.0 * 0.9 * 1.0f64.cos();
        let quad = [1.0, -c, 0.81];
        let lin = [1.0, -0.25, -0.125];
        let mut p = [0.0f64; 5];
        for (i, a) in quad.iter().enumerate() {
            for (j, b) in lin.iter().enumerate() {
                p[i + j] += a * b;
            }
        }
        let roots = monic_roots(&p[1..]);
        for z in roots {
            let mut v = Complex::new(1.0, 0.0);
            for &ci in &p[1..] {
                v = v * z + ci;
            }
            assert!(v.norm() < 1e-12, "residual {v}");
        }
    }

    fn model_from_poles(poles: &[(f64, f64)]) -> LpcModel<f64> {
        let mut a = vec![1.0f64];
        for &(r, theta) in poles {
            let q = [1.0, -2.0 * r * theta.cos(), r * r];
            let mut next = vec![0.0; a.len() + 2];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in q.iter().enumerate() {
                    next[i + j] += x * y;
                }
            }
            a = next;
        }
        LpcModel {
            order: a.len() - 1,
            coefficients: a[1..].to_vec(),
            gain: 1.0,
            reflection: vec![],
        }
    }

    #[test]
    fn pole_angle_to_frequency() {
        let m = model_from_poles(&[(0.99, std::f64::consts::FRAC_PI_2)]);
        let res = roots_to_formants(&m, 10_000.0, &PoleFilter::default());
        assert_eq!(res.len(), 1);
        assert_abs_diff_eq!(res[0].frequency, 2500.0, epsilon = 1e-6);
        let expected_bw = -(10_000.0 / std::f64::consts::PI) * 0.99f64.ln();
        assert_abs_diff_eq!(res[0].bandwidth, expected_bw, epsilon = 1e-6);
    }

    #[test]
    fn unit_radius_pole_has_zero_bandwidth() {
        let p = [Complex::from_polar(1.0f64, 0.9)];
        let res = poles_to_resonances(&p, 10_000.0, &PoleFilter::default());
        assert_abs_diff_eq!(res[0].bandwidth, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pole_filter_limits() {
        let fs = 10_000.0f64;
        let hz = |f: f64| f * std::f64::consts::TAU / fs;
        let poles = [
            Complex::from_polar(0.99, hz(60.0)),
            Complex::from_polar(0.99, hz(4980.0)),
            Complex::from_polar(0.80, hz(1500.0)),
            Complex::from_polar(0.99, hz(1100.0)),
            Complex::from_polar(0.99, hz(700.0)),
        ];
        let res = poles_to_resonances(&poles, fs, &PoleFilter::default());
        let f: Vec<f64> = res.iter().map(|r| r.frequency.round()).collect();
        assert_eq!(f, vec![700.0, 1100.0]);
    }

    #[test]
    fn resample_keeps_in_band_tone() {
        let n = 1600;
        let f = 440.0;
        let x: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * f * i as f64 / 16000.0).sin())
            .collect();
        let y = resample(&x, 16_000, 10_000);
        assert_eq!(y.len(), 1000);
        for (m, v) in y.iter().enumerate().take(900).skip(100) {
            let expect = (std::f64::consts::TAU * f * m as f64 / 10000.0).sin();
            assert_abs_diff_eq!(*v, expect, epsilon = 2e-3);
        }
    }

    #[test]
    fn resample_rejects_above_new_nyquist() {
        let x: Vec<f64> = (0..3200)
            .map(|i| (std::f64::consts::TAU * 6500.0 * i as f64 / 16000.0).sin())
            .collect();
        let y = resample(&x, 16_000, 10_000);
        let rms = (y[200..1800].iter().map(|v| v * v).sum::<f64>() / 1600.0).sqrt();
        assert!(rms < 0.01, "alias rms {rms}");
    }
}
