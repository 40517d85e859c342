use std::f64::consts::PI;

use super::signal::{AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::numerics::{gemm, Tensor};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Lower and upper cut-off of one band-pass filter, in Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandEdges {
    pub low: f64,
    pub high: f64,
}

/// `n_filters + 2` points equally spaced on the mel scale between `f_min`
/// and `f_max`; filter `i` spans points `i` and `i + 2`.
pub fn mel_band_edges(n_filters: usize, f_min: f64, f_max: f64) -> Result<Vec<BandEdges>> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    if f_max > nyquist {
        return Err(Error::invalid(format!("f_max {f_max} Hz exceeds Nyquist ({nyquist} Hz)")));
    }
    if n_filters == 0 || !(f_min > 0.0 && f_min < f_max) {
        return Err(Error::invalid(format!(
            "need n_filters >= 1 and 0 < f_min < f_max, got {n_filters}, {f_min}, {f_max}"
        )));
    }
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let step = (m_hi - m_lo) / (n_filters + 1) as f64;
    let mut points: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(m_lo + step * i as f64))
        .collect();
    // pin the endpoints against round-off in the mel round trip
    points[0] = f_min;
    points[n_filters + 1] = f_max;
    if n_filters == 1 {
        return Ok(vec![BandEdges { low: f_min, high: f_max }]);
    }
    Ok((0..n_filters)
        .map(|i| BandEdges {
            low: points[i],
            high: points[i + 2],
        })
        .collect())
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Hamming-windowed band-pass kernel
/// `(2 f2 sinc(2π f2 n) − 2 f1 sinc(2π f1 n))·w(n)` with normalized
/// frequencies and `n` centered on the middle tap.
pub fn sinc_kernel(band: BandEdges, kernel_len: usize, sample_rate: u32) -> Result<Vec<f64>> {
    if kernel_len % 2 == 0 {
        return Err(Error::invalid(format!("kernel length must be odd, got {kernel_len}")));
    }
    if band.high <= band.low {
        return Err(Error::invalid(format!("band needs f2 > f1, got {band:?}")));
    }
    let (f1, f2) = (band.low / sample_rate as f64, band.high / sample_rate as f64);
    let half = (kernel_len / 2) as isize;
    let denom = (kernel_len - 1).max(1) as f64;
    Ok((0..kernel_len)
        .map(|i| {
            let n = (i as isize - half) as f64;
            let g = 2.0 * f2 * sinc(2.0 * PI * f2 * n) - 2.0 * f1 * sinc(2.0 * PI * f1 * n);
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos();
            g * w
        })
        .collect())
}

/// Fixed bank of windowed sinc band-pass filters.
#[derive(Clone, Debug, PartialEq)]
pub struct SincFilterbank {
    bands: Vec<BandEdges>,
    kernel_len: usize,
    /// Row-major `[n_filters, kernel_len]`.
    taps: Vec<f64>,
}

impl SincFilterbank {
    pub fn new(bands: Vec<BandEdges>, kernel_len: usize) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::invalid("filterbank needs at least one band"));
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let mut taps = Vec::with_capacity(bands.len() * kernel_len);
        for band in &bands {
            if !(band.low > 0.0 && band.high <= nyquist) {
                return Err(Error::invalid(format!("band {band:?} outside (0, {nyquist}]")));
            }
            taps.extend(sinc_kernel(*band, kernel_len, SAMPLE_RATE)?);
        }
        Ok(SincFilterbank {
            bands,
            kernel_len,
            taps,
        })
    }

    /// Mel-spaced bank over `[f_min, f_max]`.
    pub fn mel(n_filters: usize, kernel_len: usize, f_min: f64, f_max: f64) -> Result<Self> {
        Self::new(mel_band_edges(n_filters, f_min, f_max)?, kernel_len)
    }

    pub fn n_filters(&self) -> usize {
        self.bands.len()
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len
    }

    pub fn bands(&self) -> &[BandEdges] {
        &self.bands
    }

    pub fn taps(&self, filter: usize) -> &[f64] {
        &self.taps[filter * self.kernel_len..(filter + 1) * self.kernel_len]
    }

    /// Output frames for an input of `len` samples.
    pub fn frames(&self, len: usize, stride: usize) -> Option<usize> {
        (len >= self.kernel_len && stride > 0).then(|| (len - self.kernel_len) / stride + 1)
    }

    /// Valid-mode correlation of `samples` with every kernel, written as
    /// `[n_filters, frames]` into `out`.
    pub(crate) fn apply_into(&self, samples: &[f64], stride: usize, out: &mut [f64]) -> Result<usize> {
        let frames = self.frames(samples.len(), stride).ok_or(Error::InputTooSmall {
            axis: "signal length",
            got: samples.len(),
            min: self.kernel_len,
        })?;
        let k = self.kernel_len;
        // the input viewed as a [k, frames] matrix with element (i, t) = x[t·stride + i]
        gemm(
            self.n_filters(),
            k,
            frames,
            &self.taps,
            (k, 1),
            samples,
            (1, stride),
            out,
            (frames, 1),
            false,
        );
        Ok(frames)
    }
}

/// Filters a signal with every band of the bank; returns `[n_filters, frames]`.
pub fn sinc_conv(signal: &AudioSignal, bank: &SincFilterbank, stride: usize) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let frames = bank.frames(signal.len(), stride).ok_or(Error::InputTooSmall {
        axis: "signal length",
        got: signal.len(),
        min: bank.kernel_len(),
    })?;
    let mut out = vec![0.0; bank.n_filters() * frames];
    bank.apply_into(signal.samples(), stride, &mut out)?;
    Tensor::new(&[bank.n_filters(), frames], out)
}
