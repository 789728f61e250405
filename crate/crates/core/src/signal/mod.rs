//! Audio decoding and MFCC front end.

mod audio;
mod mfcc;
mod scaler;

use thiserror::Error;

pub use audio::{decode_audio, encode_sphere, encode_wav, AudioError, Waveform};
pub use mfcc::{
    dct2_orthonormal, hamming_window, hz_to_mel, mel_filterbank, mel_to_hz, pool_frames,
    power_spectrum, MfccConfig, MfccExtractor, MfccMatrix, PoolMode,
};
pub use scaler::MinMaxScaler;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
