use std::path::Path;

use crate::dsp::{read_wav, AudioSignal};
use crate::error::Result;
use crate::eval::{parse_protocol, Label, UtteranceId};

/// Split list files written next to `protocol.txt`.
pub const SPLITS: [&str; 3] = ["train", "dev", "eval"];

#[derive(Clone, Debug)]
pub struct Example {
    pub id: UtteranceId,
    pub audio: AudioSignal,
    pub label: Label,
}

/// Reads every utterance listed in a protocol-format file; WAV paths are
/// resolved against the file's directory.
pub fn load_split(protocol: &Path) -> Result<Vec<Example>> {
    let root = protocol.parent().unwrap_or(Path::new("."));
    parse_protocol(protocol)?
        .into_iter()
        .map(|t| {
            Ok(Example {
                audio: read_wav(root.join(&t.wav_path))?,
                id: t.id,
                label: t.label,
            })
        })
        .collect()
}
