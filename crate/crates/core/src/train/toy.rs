use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::SPLITS;
use crate::dsp::{write_wav, AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::eval::{Label, UtteranceId};

const NOISE_RMS: f64 = 0.005;
const PEAK: f64 = 0.5;
const QUANT_LEVELS: f64 = 8.0;

#[derive(Clone, Debug)]
pub struct ToyUtterance {
    pub id: UtteranceId,
    pub audio: AudioSignal,
    pub label: Label,
}

/// Low-order approximation of 1/f noise, scaled to a fixed RMS.
fn pink_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = rng.random_range(-1.0..1.0);
            b0 = 0.99765 * b0 + w * 0.099_046;
            b1 = 0.963 * b1 + w * 0.296_516_4;
            b2 = 0.57 * b2 + w * 1.052_691_3;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= NOISE_RMS / rms);
    out
}

/// Harmonic tone with slow amplitude modulation and pink background noise.
fn voiced(rng: &mut impl Rng) -> Vec<f64> {
    let n = rng.random_range(4 * SAMPLE_RATE as usize..=6 * SAMPLE_RATE as usize);
    let f0: f64 = rng.random_range(100.0..400.0);
    let harmonics = rng.random_range(3..=5usize);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..TAU)).collect();
    let am_rate: f64 = rng.random_range(0.5..3.0);
    let am_depth: f64 = rng.random_range(0.2..0.5);
    let am_phase: f64 = rng.random_range(0.0..TAU);
    let sr = SAMPLE_RATE as f64;
    let mut tone: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let sum: f64 = phases
                .iter()
                .enumerate()
                .map(|(k, ph)| (TAU * f0 * (k + 1) as f64 * t + ph).sin() / (k + 1) as f64)
                .sum();
            sum * (1.0 + am_depth * (TAU * am_rate * t + am_phase).sin())
        })
        .collect();
    let peak = tone.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    tone.iter_mut().for_each(|v| *v *= PEAK / peak);
    for (v, e) in tone.iter_mut().zip(pink_noise(n, rng)) {
        *v += e;
    }
    tone
}

/// 4-bit amplitude quantization followed by a feed-forward comb filter.
fn vocode(x: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let delay = rng.random_range(8..=40usize);
    let gain: f64 = rng.random_range(0.85..0.95);
    let q: Vec<f64> = x
        .iter()
        .map(|v| (v * QUANT_LEVELS).round().clamp(-QUANT_LEVELS, QUANT_LEVELS - 1.0) / QUANT_LEVELS)
        .collect();
    (0..q.len())
        .map(|i| {
            let echo = if i >= delay { q[i - delay] } else { 0.0 };
            (q[i] + gain * echo) / (1.0 + gain)
        })
        .collect()
}

/// `n_per_class` utterances of each class, alternating bona fide and spoof.
pub fn make_toy_dataset(n_per_class: usize, seed: u64) -> Result<Vec<ToyUtterance>> {
    if n_per_class == 0 {
        return Err(Error::invalid("toy dataset needs at least one utterance per class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let label = if i % 2 == 0 { Label::Bonafide } else { Label::Spoof };
        let mut samples = voiced(&mut rng);
        if label == Label::Spoof {
            samples = vocode(&samples, &mut rng);
        }
        out.push(ToyUtterance {
            id: UtteranceId::new(format!("toy_{i:05}"))?,
            audio: AudioSignal::from_samples(samples)?,
            label,
        });
    }
    Ok(out)
}

fn protocol_line(out: &mut String, u: &ToyUtterance) {
    writeln!(out, "{} wav/{}.wav {}", u.id, u.id, u.label).expect("writing to a String");
}

/// Writes the corpus as `wav/*.wav`, `protocol.txt` listing every trial and
/// per-split lists `train.txt`, `dev.txt`, `eval.txt` (60/20/20 within each
/// class). A non-empty `dir` is refused unless `force` is set, in which case
/// previously generated files are replaced.
pub fn write_toy_corpus(dir: &Path, n_per_class: usize, seed: u64, force: bool) -> Result<Vec<ToyUtterance>> {
    let utterances = make_toy_dataset(n_per_class, seed)?;
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            if !force {
                return Err(Error::invalid(format!(
                    "{} exists and is not empty (pass --force to overwrite)",
                    dir.display()
                )));
            }
            let wav = dir.join("wav");
            if wav.exists() {
                fs::remove_dir_all(&wav).map_err(|e| Error::io(&wav, e))?;
            }
        }
    }
    let wav = dir.join("wav");
    fs::create_dir_all(&wav).map_err(|e| Error::io(&wav, e))?;
    for u in &utterances {
        write_wav(wav.join(format!("{}.wav", u.id)), &u.audio)?;
    }

    let mut protocol = String::from("# utt_id wav_path label\n");
    utterances.iter().for_each(|u| protocol_line(&mut protocol, u));
    let path = dir.join("protocol.txt");
    fs::write(&path, protocol).map_err(|e| Error::io(&path, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut splits = vec![String::new(); SPLITS.len()];
    for label in [Label::Bonafide, Label::Spoof] {
        let mut idx: Vec<usize> = (0..utterances.len()).filter(|&i| utterances[i].label == label).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = (0.6 * n as f64).round() as usize;
        let n_dev = ((0.2 * n as f64).round() as usize).min(n - n_train);
        let mut parts = [&idx[..n_train], &idx[n_train..n_train + n_dev], &idx[n_train + n_dev..]];
        for (text, part) in splits.iter_mut().zip(parts.iter_mut()) {
            let mut part = part.to_vec();
            part.sort_unstable();
            part.iter().for_each(|&i| protocol_line(text, &utterances[i]));
        }
    }
    for (name, text) in SPLITS.iter().zip(splits) {
        let path = dir.join(format!("{name}.txt"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(utterances)
}
