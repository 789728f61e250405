//! Strided 1-D convolutional feature encoder and its weight container.

mod container;
mod encoder;

use thiserror::Error;

pub use container::{fnv1a64, read_container, write_container, TensorBlob, MAGIC, VERSION};
pub use encoder::{
    channel_layer_norm, conv1d, extract_activations, gelu, pool_time, read_trace,
    trace_max_abs_diff, trace_to_container, ActivationSet, ConvLayer, EncoderArch, LayerWeights,
    WeightStore, NORM_EPS,
};

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("bad magic: not a W2CV container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated container: {0}")]
    Truncated(String),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("unexpected tensor `{0}`")]
    Unexpected(String),
    #[error("duplicate tensor `{0}`")]
    Duplicate(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor `{0}` contains non-finite values")]
    NonFinite(String),
    #[error("invalid architecture: {0}")]
    Arch(String),
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("input of {got} frames shorter than kernel width {width}")]
    Length { width: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("layer {layer} out of range (encoder has {layers})")]
    LayerIndex { layer: usize, layers: usize },
}
