//! Learning the log-mel spectrogram transform with a small 1-D CNN, and
//! reusing the learned layers as a frozen front end for a raw-waveform
//! environmental sound classifier.

pub mod audio;
pub mod classifier;
pub mod error;
pub mod experiment;
pub mod features;
pub mod mst;
pub mod nn;

pub use error::{Error, Result};
