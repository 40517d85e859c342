use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const PRE_EMPHASIS: f64 = 0.97;

/// Mono audio at 16 kHz with finite samples, nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!(
                "sample rate must be {SAMPLE_RATE} Hz, got {sample_rate}"
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(AudioSignal { samples })
    }

    /// Shorthand for 16 kHz input.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Drops trailing samples that are exactly zero, keeping at least one.
    pub fn trim_trailing_zeros(&self) -> AudioSignal {
        let end = self
            .samples
            .iter()
            .rposition(|&s| s != 0.0)
            .map_or(self.samples.len().min(1), |i| i + 1);
        AudioSignal {
            samples: self.samples[..end].to_vec(),
        }
    }
}

/// First-order high-pass `y[l] = x[l] − coeff·x[l−1]`, `y[0] = x[0]`.
pub fn pre_emphasis(signal: &AudioSignal, coeff: f64) -> Result<AudioSignal> {
    if signal.is_empty() {
        return Err(Error::invalid("pre_emphasis on an empty signal"));
    }
    if !(0.0..1.0).contains(&coeff) {
        return Err(Error::invalid(format!("pre-emphasis coefficient must be in [0, 1), got {coeff}")));
    }
    let x = signal.samples();
    let mut out = Vec::with_capacity(x.len());
    out.push(x[0]);
    out.extend(x.windows(2).map(|w| w[1] - coeff * w[0]));
    Ok(AudioSignal { samples: out })
}

/// Inverse of [`pre_emphasis`]: `x[l] = y[l] + coeff·x[l−1]`.
pub fn de_emphasis(signal: &AudioSignal, coeff: f64) -> Result<AudioSignal> {
    if signal.is_empty() {
        return Err(Error::invalid("de_emphasis on an empty signal"));
    }
    let mut out = Vec::with_capacity(signal.len());
    let mut prev = 0.0;
    for (l, &y) in signal.samples().iter().enumerate() {
        let x = if l == 0 { y } else { y + coeff * prev };
        out.push(x);
        prev = x;
    }
    Ok(AudioSignal { samples: out })
}

/// Splits a signal into windows of `win_secs` starting every `hop_secs`.
/// Windows are emitted until one reaches the end of the signal; samples past
/// the end are taken cyclically from the start, so short signals yield one
/// window made of repetitions.
pub fn chunk_signal(signal: &AudioSignal, win_secs: f64, hop_secs: f64) -> Result<Vec<AudioSignal>> {
    if signal.is_empty() {
        return Err(Error::invalid("chunk_signal on an empty signal"));
    }
    if !(hop_secs > 0.0 && win_secs > hop_secs) {
        return Err(Error::invalid(format!(
            "chunking needs win > hop > 0, got win {win_secs} s, hop {hop_secs} s"
        )));
    }
    let sr = SAMPLE_RATE as f64;
    let win = (win_secs * sr).round() as usize;
    let hop = (hop_secs * sr).round() as usize;
    let x = signal.samples();
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let samples = (0..win).map(|i| x[(start + i) % x.len()]).collect();
        chunks.push(AudioSignal { samples });
        if start + win >= x.len() {
            break;
        }
        start += hop;
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(x: &[f64]) -> AudioSignal {
        AudioSignal::from_samples(x.to_vec()).unwrap()
    }

    #[test]
    fn rejects_other_rates_and_nan() {
        assert!(AudioSignal::new(vec![0.0], 44_100).is_err());
        assert!(AudioSignal::from_samples(vec![f64::NAN]).is_err());
    }

    #[test]
    fn pre_emphasis_examples() {
        let y = pre_emphasis(&sig(&[1.0, 1.0, 1.0]), PRE_EMPHASIS).unwrap();
        for (a, b) in y.samples().iter().zip([1.0, 0.03, 0.03]) {
            assert!((a - b).abs() < 1e-12);
        }
        let y = pre_emphasis(&sig(&[0.0; 5]), PRE_EMPHASIS).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
        let y = pre_emphasis(&sig(&[1.0, 0.0, 0.0]), PRE_EMPHASIS).unwrap();
        assert_eq!(y.samples(), &[1.0, -0.97, 0.0]);
        assert!(pre_emphasis(&sig(&[]), PRE_EMPHASIS).is_err());
    }

    fn starts(chunks: &[AudioSignal], x: &[f64]) -> Vec<usize> {
        chunks
            .iter()
            .map(|c| x.iter().position(|&v| v == c.samples()[0]).unwrap())
            .collect()
    }

    #[test]
    fn chunk_eight_seconds() {
        let x: Vec<f64> = (0..128_000).map(|i| i as f64).collect();
        let chunks = chunk_signal(&sig(&x), 4.0, 2.0).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(starts(&chunks, &x), vec![0, 32_000, 64_000]);
        assert!(chunks.iter().all(|c| c.len() == 64_000));
        assert_eq!(*chunks[2].samples().last().unwrap(), 127_999.0);
    }

    #[test]
    fn chunk_exact_and_short() {
        let x: Vec<f64> = (0..64_000).map(|i| i as f64).collect();
        let chunks = chunk_signal(&sig(&x), 4.0, 2.0).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].samples(), &x[..]);

        let x: Vec<f64> = (0..48_000).map(|i| i as f64).collect();
        let chunks = chunk_signal(&sig(&x), 4.0, 2.0).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].len(), 64_000);
        assert_eq!(chunks[0].samples()[48_000], 0.0);
        assert_eq!(chunks[0].samples()[63_999], 15_999.0);
        assert!(chunk_signal(&sig(&x), 2.0, 2.0).is_err());
    }

    #[test]
    fn trim_keeps_one_sample() {
        assert_eq!(sig(&[0.5, 0.0, 0.0]).trim_trailing_zeros().samples(), &[0.5]);
        assert_eq!(sig(&[0.0, 0.0]).trim_trailing_zeros().samples(), &[0.0]);
    }

    proptest! {
        #[test]
        fn pre_emphasis_round_trip(x in proptest::collection::vec(-1.0f64..1.0, 1..2000)) {
            let s = sig(&x);
            let back = de_emphasis(&pre_emphasis(&s, PRE_EMPHASIS).unwrap(), PRE_EMPHASIS).unwrap();
            for (a, b) in back.samples().iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn chunks_cover_every_sample(len in 1usize..40_000, win in 2usize..9, hop in 1usize..8) {
            prop_assume!(win > hop);
            // tenths of a second keep the test fast
            let (w, h) = (win as f64 / 10.0, hop as f64 / 10.0);
            let x: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let chunks = chunk_signal(&sig(&x), w, h).unwrap();
            let (ws, hs) = (win * 1600, hop * 1600);
            let mut covered = vec![false; len];
            for (c, chunk) in chunks.iter().enumerate() {
                prop_assert_eq!(chunk.len(), ws);
                for i in 0..ws {
                    let k = c * hs + i;
                    if k < len {
                        covered[k] = true;
                        prop_assert_eq!(chunk.samples()[i], x[k]);
                    }
                }
            }
            prop_assert!(covered.iter().all(|&c| c));
        }
    }
}
