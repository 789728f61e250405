//! Front/back vowel probing toolkit: TIMIT-style segment preparation, MFCC
//! and LPC formant features, a strided convolutional speech encoder, SMO
//! kernel SVMs with grid search, and KSG mutual information.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32`, `f64`); the
//! aliases below fix the experiment's precision.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convenc;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod features;
pub mod formant;
pub mod miest;
pub mod prepared;
pub mod scalar;
pub mod signal;
pub mod svmkit;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

/// Precision of features, SVMs and MI in the experiment.
pub type Scalar = f64;
pub type AudioSegment = corpus::AudioSegment<Scalar>;
pub type Waveform = signal::Waveform<Scalar>;
pub type MfccMatrix = signal::MfccMatrix<Scalar>;
pub type MfccExtractor = signal::MfccExtractor<Scalar>;
pub type MinMaxScaler = signal::MinMaxScaler<Scalar>;
pub type FeatureMatrix = features::FeatureMatrix<Scalar>;
pub type FeatureBundle = features::FeatureBundle<Scalar>;
pub type SvmModel = svmkit::SvmModel<Scalar>;
pub type Classifier = svmkit::Classifier<Scalar>;
/// Encoder weights are stored and run in `f32`.
pub type WeightStore = convenc::WeightStore<f32>;
pub type ActivationSet = convenc::ActivationSet<f32>;
