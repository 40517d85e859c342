use super::aasist::Aasist3Model;
use crate::dsp::{chunk_signal, pre_emphasis, AudioSignal};
use crate::error::{Error, Result};

/// Fixed-length pre-emphasized chunks an utterance is scored on. Trailing
/// exact-zero samples are dropped first so padding silence does not add
/// chunks.
pub fn utterance_chunks(model: &Aasist3Model, audio: &AudioSignal) -> Result<Vec<AudioSignal>> {
    let cfg = model.config();
    let trimmed = audio.trim_trailing_zeros();
    let emphasized = pre_emphasis(&trimmed, cfg.frontend.pre_emphasis)?;
    chunk_signal(&emphasized, cfg.inference.chunk_secs, cfg.inference.hop_secs)
}

/// Mean bona fide probability over the utterance's chunks.
pub fn score_utterance(model: &Aasist3Model, audio: &AudioSignal) -> Result<f64> {
    let chunks = utterance_chunks(model, audio)?;
    let mut total = 0.0;
    for chunk in &chunks {
        total += model.bonafide_probs(&[chunk.samples()])?[0];
    }
    Ok(total / chunks.len() as f64)
}

/// Arithmetic mean of per-model scores.
pub fn fuse_scores(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot fuse an empty score list"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
