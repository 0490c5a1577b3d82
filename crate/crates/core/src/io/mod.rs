//! File formats: multichannel WAV, RTTM annotations and SEGF feature files.

mod rttm;
mod segf;
mod wav;

pub use rttm::{annotation_from_segments, format_rttm, parse_rttm, read_rttm, write_rttm, RttmSegments};
pub use segf::{read_features, read_features_from, write_features, write_features_to};
pub use wav::{read_wav, write_wav, WavEncoding};
