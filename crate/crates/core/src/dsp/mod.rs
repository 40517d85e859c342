//! Audio front end: ingestion, pre-emphasis, the fixed sinc filterbank and
//! chunking for inference.

mod signal;
mod sinc;
pub mod wav;

pub use signal::{chunk_signal, de_emphasis, pre_emphasis, AudioSignal, PRE_EMPHASIS, SAMPLE_RATE};
pub use sinc::{hz_to_mel, mel_band_edges, mel_to_hz, sinc_conv, sinc_kernel, BandEdges, SincFilterbank};
pub use wav::{encode_wav, parse_wav, read_wav, write_wav, WavError};
