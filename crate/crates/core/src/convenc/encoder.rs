use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::container::{read_container, write_container, TensorBlob};
use super::{EncoderError, WeightError};
use crate::scalar::Real;
use crate::signal::PoolMode;

/// Epsilon of the per-frame channel normalisation.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel_width: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvLayer {
    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        (input_len >= self.kernel_width).then(|| (input_len - self.kernel_width) / self.stride + 1)
    }
}

/// Layer table of the encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderArch {
    pub layers: Vec<ConvLayer>,
}

impl Default for EncoderArch {
    /// The wav2vec 2.0 feature encoder: 512 channels, (width, stride) of
    /// (10, 5) then four (3, 2) then two (2, 2).
    fn default() -> Self {
        Self::from_table(
            &[(10, 5), (3, 2), (3, 2), (3, 2), (3, 2), (2, 2), (2, 2)],
            512,
        )
        .expect("static table is valid")
    }
}

impl EncoderArch {
    pub fn from_table(
        width_stride: &[(usize, usize)],
        channels: usize,
    ) -> Result<Self, WeightError> {
        if width_stride.is_empty() || channels == 0 {
            return Err(WeightError::Arch(
                "need at least one layer and one channel".into(),
            ));
        }
        let layers = width_stride
            .iter()
            .enumerate()
            .map(|(i, &(w, s))| {
                if w == 0 || s == 0 {
                    return Err(WeightError::Arch(format!(
                        "layer {i}: width and stride must be > 0"
                    )));
                }
                Ok(ConvLayer {
                    kernel_width: w,
                    stride: s,
                    in_channels: if i == 0 { 1 } else { channels },
                    out_channels: channels,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(EncoderArch { layers })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Per-layer output lengths for an input of `input_len` samples.
    pub fn output_lengths(&self, input_len: usize) -> Option<Vec<usize>> {
        let mut t = input_len;
        self.layers
            .iter()
            .map(|l| {
                t = l.output_len(t)?;
                Some(t)
            })
            .collect()
    }

    /// Expected tensor names and shapes, in container order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::with_capacity(4 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            out.push((
                format!("conv{k}.weight"),
                vec![l.out_channels, l.in_channels, l.kernel_width],
            ));
            out.push((format!("conv{k}.bias"), vec![l.out_channels]));
            out.push((format!("norm{k}.gain"), vec![l.out_channels]));
            out.push((format!("norm{k}.bias"), vec![l.out_channels]));
        }
        out
    }
}

impl fmt::Display for EncoderArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ch = self.layers.first().map_or(0, |l| l.out_channels);
        let table: Vec<String> = self
            .layers
            .iter()
            .map(|l| format!("{}:{}", l.kernel_width, l.stride))
            .collect();
        write!(f, "{}@{}", table.join(","), ch)
    }
}

impl FromStr for EncoderArch {
    type Err = WeightError;

    /// `"10:5,3:2,...@512"`; the channel suffix defaults to 512.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (table, channels) = match s.split_once('@') {
            Some((t, c)) => (
                t,
                c.trim()
                    .parse()
                    .map_err(|_| WeightError::Arch(format!("bad channel count `{c}`")))?,
            ),
            None => (s, 512),
        };
        let pairs = table
            .split(',')
            .map(|p| {
                let (w, st) = p
                    .split_once(':')
                    .ok_or_else(|| WeightError::Arch(format!("layer `{p}` is not width:stride")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| WeightError::Arch(format!("bad number `{v}`")))
                };
                Ok((parse(w)?, parse(st)?))
            })
            .collect::<Result<Vec<_>, WeightError>>()?;
        Self::from_table(&pairs, channels)
    }
}

/// Parameters of one conv + norm block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    /// `[out_channels, in_channels, width]`
    pub kernel: Array3<T>,
    pub bias: Array1<T>,
    pub gain: Array1<T>,
    pub norm_bias: Array1<T>,
}

/// Validated encoder parameters. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore<T> {
    pub arch: EncoderArch,
    pub layers: Vec<LayerWeights<T>>,
}

impl<T: Real> WeightStore<T> {
    /// Decodes a container and checks it against the architecture manifest.
    pub fn load(bytes: &[u8], arch: &EncoderArch) -> Result<Self, WeightError> {
        let blobs = read_container(bytes)?;
        Self::from_blobs(blobs, arch)
    }

    pub fn from_blobs(blobs: Vec<TensorBlob>, arch: &EncoderArch) -> Result<Self, WeightError> {
        let manifest = arch.manifest();
        for b in &blobs {
            if !manifest.iter().any(|(n, _)| *n == b.name) {
                return Err(WeightError::Unexpected(b.name.clone()));
            }
        }
        let take = |name: &str, shape: &[usize]| -> Result<Vec<T>, WeightError> {
            let b = blobs
                .iter()
                .find(|b| b.name == name)
                .ok_or_else(|| WeightError::Missing(name.to_string()))?;
            if b.dims != shape {
                return Err(WeightError::Shape {
                    name: name.to_string(),
                    expected: shape.to_vec(),
                    found: b.dims.clone(),
                });
            }
            Ok(b.data.iter().map(|&v| T::lit(v as f64)).collect())
        };
        let mut layers = Vec::with_capacity(arch.n_layers());
        for (k, l) in arch.layers.iter().enumerate() {
            let kshape = [l.out_channels, l.in_channels, l.kernel_width];
            let kernel = Array3::from_shape_vec(kshape, take(&format!("conv{k}.weight"), &kshape)?)
                .expect("shape checked");
            let vec1 = |v: Vec<T>| Array1::from_vec(v);
            let c = [l.out_channels];
            layers.push(LayerWeights {
                kernel,
                bias: vec1(take(&format!("conv{k}.bias"), &c)?),
                gain: vec1(take(&format!("norm{k}.gain"), &c)?),
                norm_bias: vec1(take(&format!("norm{k}.bias"), &c)?),
            });
        }
        Ok(WeightStore {
            arch: arch.clone(),
            layers,
        })
    }

    /// Seeded He-uniform kernels, unit-ish norm gains, small biases.
    /// Values are drawn in f32 so any scalar type sees the same weights.
    pub fn random(arch: &EncoderArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<TensorBlob> = arch
            .manifest()
            .into_iter()
            .map(|(name, dims)| {
                let n: usize = dims.iter().product();
                let data: Vec<f32> = if name.ends_with(".weight") {
                    let bound = (6.0 / (dims[1] * dims[2]) as f32).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                } else if name.ends_with(".gain") {
                    (0..n)
                        .map(|_| 1.0 + rng.random_range(-0.1f32..0.1))
                        .collect()
                } else {
                    (0..n).map(|_| rng.random_range(-0.1f32..0.1)).collect()
                };
                TensorBlob::new(name, dims, data)
            })
            .collect();
        Self::from_blobs(blobs, arch).expect("generated tensors match manifest")
    }

    pub fn to_blobs(&self) -> Vec<TensorBlob> {
        let f = |a: &[T]| {
            a.iter()
                .map(|v| v.to_f64_lossy() as f32)
                .collect::<Vec<f32>>()
        };
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.push(TensorBlob::new(
                format!("conv{k}.weight"),
                l.kernel.shape().to_vec(),
                f(l.kernel.as_slice().expect("standard layout")),
            ));
            out.push(TensorBlob::new(
                format!("conv{k}.bias"),
                vec![l.bias.len()],
                f(&l.bias.to_vec()),
            ));
            out.push(TensorBlob::new(
                format!("norm{k}.gain"),
                vec![l.gain.len()],
                f(&l.gain.to_vec()),
            ));
            out.push(TensorBlob::new(
                format!("norm{k}.bias"),
                vec![l.norm_bias.len()],
                f(&l.norm_bias.to_vec()),
            ));
        }
        out
    }

    pub fn to_container(&self) -> Vec<u8> {
        write_container(&self.to_blobs())
    }
}

/// Valid (unpadded) strided convolution:
/// `y[o][t] = bias[o] + sum_{c,w} K[o][c][w] x[c][t*stride + w]`.
pub fn conv1d<T: Real>(
    x: ArrayView2<'_, T>,
    kernel: ArrayView3<'_, T>,
    bias: ArrayView1<'_, T>,
    stride: usize,
) -> Result<Array2<T>, EncoderError> {
    let (c_in, t_in) = x.dim();
    let (c_out, k_in, width) = kernel.dim();
    if k_in != c_in {
        return Err(EncoderError::Shape(format!(
            "kernel expects {k_in} channels, input has {c_in}"
        )));
    }
    if bias.len() != c_out {
        return Err(EncoderError::Shape(format!(
            "bias has {} entries for {c_out} outputs",
            bias.len()
        )));
    }
    if stride == 0 {
        return Err(EncoderError::Shape("stride must be positive".into()));
    }
    if t_in < width {
        return Err(EncoderError::Length { width, got: t_in });
    }
    let t_out = (t_in - width) / stride + 1;
    let mut cols = Array2::<T>::zeros((c_in * width, t_out));
    for c in 0..c_in {
        let row = x.row(c);
        for w in 0..width {
            let src = row.slice(s![w..w + (t_out - 1) * stride + 1;stride]);
            cols.row_mut(c * width + w).assign(&src);
        }
    }
    let k2 = kernel
        .to_shape((c_out, c_in * width))
        .map_err(|e| EncoderError::Shape(e.to_string()))?;
    let mut y = k2.dot(&cols);
    for (mut row, &b) in y.axis_iter_mut(Axis(0)).zip(bias.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    Ok(y)
}

/// Normalises each time step across channels to zero mean and unit
/// variance, then applies per-channel gain and bias.
pub fn channel_layer_norm<T: Real>(
    x: &mut Array2<T>,
    gain: ArrayView1<'_, T>,
    bias: ArrayView1<'_, T>,
    eps: T,
) -> Result<(), EncoderError> {
    let (c, _) = x.dim();
    if c == 0 || gain.len() != c || bias.len() != c {
        return Err(EncoderError::Shape(format!(
            "norm over {c} channels with {} gains and {} biases",
            gain.len(),
            bias.len()
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("c >= 1");
    let mut var = Array1::<T>::zeros(mean.len());
    for row in x.rows() {
        for ((v, &m), &xi) in var.iter_mut().zip(&mean).zip(row) {
            let d = xi - m;
            *v = *v + d * d;
        }
    }
    let n = T::from_usize_lossy(c);
    let inv_std = var.mapv(|v| T::one() / (v / n + eps).sqrt());
    for (ch, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let (g, b) = (gain[ch], bias[ch]);
        for ((xi, &m), &is) in row.iter_mut().zip(&mean).zip(&inv_std) {
            *xi = (*xi - m) * is * g + b;
        }
    }
    Ok(())
}

/// `x * Phi(x)` with the exact normal CDF.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    T::lit(0.5) * x * (T::one() + (x * T::FRAC_1_SQRT_2()).erf())
}

/// Post-activation output of every layer, `[channels x frames]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet<T> {
    pub per_layer: Vec<Array2<T>>,
    pub input_length: usize,
}

impl<T: Real> ActivationSet<T> {
    pub fn frame_lengths(&self) -> Vec<usize> {
        self.per_layer.iter().map(|a| a.ncols()).collect()
    }
}

/// Runs conv -> channel norm -> GELU for every layer in order.
pub fn extract_activations<T: Real>(
    store: &WeightStore<T>,
    samples: &[T],
) -> Result<ActivationSet<T>, EncoderError> {
    let eps = T::lit(NORM_EPS);
    let mut x = Array2::from_shape_vec((1, samples.len()), samples.to_vec())
        .map_err(|e| EncoderError::Shape(e.to_string()))?;
    let mut per_layer = Vec::with_capacity(store.layers.len());
    for (layer, w) in store.arch.layers.iter().zip(&store.layers) {
        let mut y = conv1d(x.view(), w.kernel.view(), w.bias.view(), layer.stride)?;
        channel_layer_norm(&mut y, w.gain.view(), w.norm_bias.view(), eps)?;
        y.mapv_inplace(gelu);
        per_layer.push(y.clone());
        x = y;
    }
    Ok(ActivationSet {
        per_layer,
        input_length: samples.len(),
    })
}

/// Turns one layer's `[channels x frames]` map into a vector: channel
/// means over time, or channel-major flattening.
pub fn pool_time<T: Real>(
    acts: &ActivationSet<T>,
    layer: usize,
    mode: PoolMode,
) -> Result<Vec<T>, EncoderError> {
    let a = acts.per_layer.get(layer).ok_or(EncoderError::LayerIndex {
        layer,
        layers: acts.per_layer.len(),
    })?;
    if a.ncols() == 0 {
        return Err(EncoderError::Shape(format!("layer {layer} has no frames")));
    }
    Ok(match mode {
        PoolMode::Mean => a.mean_axis(Axis(1)).expect("frames >= 1").to_vec(),
        PoolMode::Flatten => a.iter().copied().collect(),
    })
}

/// Reads `trace.layer{k}` tensors (shape `[C, T]`, leading unit axes allowed).
pub fn read_trace(bytes: &[u8]) -> Result<Vec<Array2<f32>>, WeightError> {
    let blobs = read_container(bytes)?;
    let mut out = Vec::new();
    for k in 0.. {
        let name = format!("trace.layer{k}");
        let Some(b) = blobs.iter().find(|b| b.name == name) else {
            break;
        };
        let dims: Vec<usize> = {
            let mut d = b.dims.clone();
            while d.len() > 2 && d[0] == 1 {
                d.remove(0);
            }
            d
        };
        if dims.len() != 2 {
            return Err(WeightError::Shape {
                name,
                expected: vec![0, 0],
                found: b.dims.clone(),
            });
        }
        out.push(
            Array2::from_shape_vec((dims[0], dims[1]), b.data.clone()).expect("numel checked"),
        );
    }
    if out.is_empty() {
        return Err(WeightError::Missing("trace.layer0".into()));
    }
    Ok(out)
}

pub fn trace_to_container<T: Real>(acts: &ActivationSet<T>) -> Vec<u8> {
    let blobs: Vec<TensorBlob> = acts
        .per_layer
        .iter()
        .enumerate()
        .map(|(k, a)| {
            TensorBlob::new(
                format!("trace.layer{k}"),
                vec![a.nrows(), a.ncols()],
                a.iter().map(|v| v.to_f64_lossy() as f32).collect(),
            )
        })
        .collect();
    write_container(&blobs)
}

/// Largest absolute difference between a forward pass and a reference trace.
pub fn trace_max_abs_diff<T: Real>(
    acts: &ActivationSet<T>,
    trace: &[Array2<f32>],
) -> Result<f64, EncoderError> {
    if acts.per_layer.len() != trace.len() {
        return Err(EncoderError::Shape(format!(
            "trace has {} layers, forward pass {}",
            trace.len(),
            acts.per_layer.len()
        )));
    }
    let mut worst = 0.0f64;
    for (k, (a, t)) in acts.per_layer.iter().zip(trace).enumerate() {
        if a.dim() != t.dim() {
            return Err(EncoderError::Shape(format!(
                "layer {k}: forward {:?} vs trace {:?}",
                a.dim(),
                t.dim()
            )));
        }
        for (x, y) in a.iter().zip(t) {
            worst = worst.max((x.to_f64_lossy() - *y as f64).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_arch() -> EncoderArch {
        EncoderArch::from_table(
            &[(10, 5), (3, 2), (3, 2), (3, 2), (3, 2), (2, 2), (2, 2)],
            8,
        )
        .unwrap()
    }

    #[test]
    fn default_lengths() {
        let arch = EncoderArch::default();
        assert_eq!(
            arch.output_lengths(2000).unwrap(),
            vec![399, 199, 99, 49, 24, 12, 6]
        );
        assert_eq!(arch.manifest().len(), 28);
        assert_eq!(
            arch.manifest()[0],
            ("conv0.weight".to_string(), vec![512, 1, 10])
        );
        assert_eq!(arch.output_lengths(5), None);
    }

    #[test]
    fn arch_parse_round_trip() {
        let arch: EncoderArch = "10:5,3:2,3:2,3:2,3:2,2:2,2:2@512".parse().unwrap();
        assert_eq!(arch, EncoderArch::default());
        assert_eq!(arch.to_string().parse::<EncoderArch>().unwrap(), arch);
        assert!("10-5".parse::<EncoderArch>().is_err());
        assert!("0:5".parse::<EncoderArch>().is_err());
    }

    #[test]
    fn identity_kernel() {
        let x = array![[1.0f64, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let k = Array3::from_shape_fn((2, 2, 1), |(o, c, _)| if o == c { 1.0 } else { 0.0 });
        let y = conv1d(x.view(), k.view(), Array1::zeros(2).view(), 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_errors() {
        let x = Array2::<f32>::zeros((1, 5));
        let k = Array3::<f32>::zeros((2, 1, 10));
        assert!(matches!(
            conv1d(x.view(), k.view(), Array1::zeros(2).view(), 5),
            Err(EncoderError::Length { width: 10, got: 5 })
        ));
        let k = Array3::<f32>::zeros((2, 3, 1));
        assert!(matches!(
            conv1d(x.view(), k.view(), Array1::zeros(2).view(), 1),
            Err(EncoderError::Shape(_))
        ));
    }

    #[test]
    fn conv_output_length() {
        let x = Array2::<f32>::zeros((1, 2000));
        let k = Array3::<f32>::zeros((4, 1, 10));
        let y = conv1d(x.view(), k.view(), Array1::zeros(4).view(), 5).unwrap();
        assert_eq!(y.dim(), (4, 399));
    }

    #[test]
    fn layer_norm_cases() {
        let mut x = Array2::from_elem((4, 3), 2.5f64);
        let ones = Array1::ones(4);
        let zeros = Array1::zeros(4);
        channel_layer_norm(&mut x, ones.view(), zeros.view(), 1e-5).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));

        let mut x = Array2::from_shape_fn((4, 3), |(c, t)| (c * 7 + t) as f64);
        let bias = array![0.1, 0.2, 0.3, 0.4];
        channel_layer_norm(&mut x, zeros.view(), bias.view(), 1e-5).unwrap();
        for t in 0..3 {
            assert_eq!(x.column(t).to_vec(), bias.to_vec());
        }
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0f64), 0.0);
        for &x in &[0.3f64, 1.0, 2.5, -1.7] {
            assert_abs_diff_eq!(gelu(x) - x, gelu(-x), epsilon = 1e-15);
        }
    }

    #[test]
    fn weights_round_trip_and_errors() {
        let arch = small_arch();
        let store = WeightStore::<f32>::random(&arch, 3);
        let bytes = store.to_container();
        let back = WeightStore::<f32>::load(&bytes, &arch).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_container(), bytes);

        let mut blobs = store.to_blobs();
        blobs.retain(|b| b.name != "conv6.bias");
        match WeightStore::<f32>::load(&write_container(&blobs), &arch) {
            Err(WeightError::Missing(n)) => assert_eq!(n, "conv6.bias"),
            other => panic!("unexpected {other:?}"),
        }

        let mut blobs = store.to_blobs();
        blobs[0] = TensorBlob::new("conv0.weight", vec![8, 2, 10], vec![0.0; 160]);
        assert!(matches!(
            WeightStore::<f32>::load(&write_container(&blobs), &arch),
            Err(WeightError::Shape { .. })
        ));
    }

    #[test]
    fn zero_input_zero_bias_is_constant_per_channel() {
        let arch = small_arch();
        let mut store = WeightStore::<f64>::random(&arch, 1);
        store.layers[0].bias.fill(0.0);
        let acts = extract_activations(&store, &vec![0.0; 2000]).unwrap();
        let l0 = &acts.per_layer[0];
        for row in l0.rows() {
            assert!(row.iter().all(|&v| v == row[0]));
        }
        // normalised zeros are zero; output is gelu(norm bias)
        for (c, row) in l0.rows().into_iter().enumerate() {
            assert_abs_diff_eq!(row[0], gelu(store.layers[0].norm_bias[c]), epsilon = 1e-12);
        }
    }

    #[test]
    fn pooling_over_time() {
        let arch = small_arch();
        let store = WeightStore::<f32>::random(&arch, 5);
        let x: Vec<f32> = (0..2000).map(|i| ((i as f32) * 0.05).sin() * 0.3).collect();
        let acts = extract_activations(&store, &x).unwrap();
        assert_eq!(acts.frame_lengths(), vec![399, 199, 99, 49, 24, 12, 6]);
        assert_eq!(pool_time(&acts, 6, PoolMode::Mean).unwrap().len(), 8);
        assert_eq!(pool_time(&acts, 6, PoolMode::Flatten).unwrap().len(), 48);
        assert!(matches!(
            pool_time(&acts, 7, PoolMode::Mean),
            Err(EncoderError::LayerIndex { .. })
        ));

        let single = ActivationSet {
            per_layer: vec![array![[1.0f64], [2.0]]],
            input_length: 1,
        };
        assert_eq!(
            pool_time(&single, 0, PoolMode::Mean).unwrap(),
            vec![1.0, 2.0]
        );

        let mut rev = acts.clone();
        rev.per_layer[3].invert_axis(Axis(1));
        let a = pool_time(&acts, 3, PoolMode::Mean).unwrap();
        let b = pool_time(&rev, 3, PoolMode::Mean).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-5);
        }
    }

    #[test]
    fn trace_round_trip() {
        let arch = small_arch();
        let store = WeightStore::<f64>::random(&arch, 9);
        let x: Vec<f64> = (0..2000).map(|i| ((i as f64) * 0.01).cos() * 0.2).collect();
        let acts = extract_activations(&store, &x).unwrap();
        let trace = read_trace(&trace_to_container(&acts)).unwrap();
        assert_eq!(trace.len(), 7);
        assert!(trace_max_abs_diff(&acts, &trace).unwrap() < 1e-5);
    }
}
