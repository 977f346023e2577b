//! Simulator for multidimensional pulse position modulation over a power-line
//! channel: concurrent (BBC) codes, pulse synthesis, impulsive noise, ADC
//! threshold detection and packet-error-rate experiments.

pub mod codec;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod noise;
pub mod pulse;
pub mod waveform;

pub use error::{Error, Result};
