//! Multichannel speech segmentation (VAD, overlap and speaker-change
//! detection) with circular-harmonics DOA spatial features.

pub mod array_sim;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod labeling;
pub mod nn;
pub mod run_config;
pub mod scenes;

pub use error::{Error, Result};
