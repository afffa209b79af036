//! Additive rendering of partials, 16-bit WAV output and spectral peak
//! picking for checking what was rendered.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audify::PartialSpec;

/// Largest transform used by [`spectral_peaks`].
pub const MAX_FFT_LEN: usize = 1 << 18;
/// Smallest buffer [`spectral_peaks`] accepts.
pub const MIN_SPECTRUM_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub sample_rate: u32,
    /// How long each partial sounds, from its own start time.
    pub duration_s: f64,
    /// Raised-cosine fade length at each end of every partial.
    pub fade_ms: f64,
    /// Absolute peak of the mix after normalization.
    pub peak_target: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { sample_rate: 44_100, duration_s: 10.0, fade_ms: 10.0, peak_target: 0.891 }
    }
}

impl RenderConfig {
    fn check(&self) -> Result<(), SynthError> {
        if self.sample_rate < 8000 {
            return Err(SynthError::Config(format!("sample rate {} is below 8000 Hz", self.sample_rate)));
        }
        if !(self.fade_ms >= 0.0 && self.duration_s > 2.0 * self.fade_ms / 1000.0) {
            return Err(SynthError::Config(format!(
                "duration {} s must exceed twice the fade of {} ms",
                self.duration_s, self.fade_ms
            )));
        }
        if !(self.peak_target > 0.0 && self.peak_target <= 1.0) {
            return Err(SynthError::Config(format!("peak target {} is not in (0, 1]", self.peak_target)));
        }
        Ok(())
    }
}

/// Mono linear samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid render configuration: {0}")]
    Config(String),
    #[error("nothing to render")]
    Empty,
    #[error("partial {index} at {frequency_hz} Hz is at or above Nyquist ({nyquist_hz} Hz)")]
    Aliasing { index: usize, frequency_hz: f64, nyquist_hz: f64 },
    #[error("partial {index} is malformed: {message}")]
    BadPartial { index: usize, message: String },
    #[error("buffer is invalid: {0}")]
    BadBuffer(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Raised-cosine envelope value for a partial at `offset` samples past its
/// onset, with `len` samples in total and `fade` samples per ramp.
fn envelope(offset: usize, len: usize, fade: usize) -> f64 {
    if fade == 0 {
        return 1.0;
    }
    let from_end = len - 1 - offset;
    let edge = offset.min(from_end);
    if edge >= fade {
        1.0
    } else {
        0.5 * (1.0 - (PI * edge as f64 / fade as f64).cos())
    }
}

/// Sums every partial (each sounding `duration_s` from its own start, phase
/// zero at onset, with raised-cosine fades) and scales the mix so its
/// absolute peak equals `peak_target`. An all-zero mix is left silent.
pub fn render_partials(partials: &[PartialSpec], cfg: &RenderConfig) -> Result<AudioBuffer, SynthError> {
    cfg.check()?;
    if partials.is_empty() {
        return Err(SynthError::Empty);
    }
    let sr = cfg.sample_rate as f64;
    let nyquist_hz = sr / 2.0;
    for (index, p) in partials.iter().enumerate() {
        if !(p.frequency_hz.is_finite() && p.frequency_hz > 0.0) {
            return Err(SynthError::BadPartial { index, message: format!("frequency {}", p.frequency_hz) });
        }
        if p.frequency_hz >= nyquist_hz {
            return Err(SynthError::Aliasing { index, frequency_hz: p.frequency_hz, nyquist_hz });
        }
        if !(p.start_s.is_finite() && p.start_s >= 0.0) {
            return Err(SynthError::BadPartial { index, message: format!("start {}", p.start_s) });
        }
        if !p.amplitude.is_finite() {
            return Err(SynthError::BadPartial { index, message: format!("amplitude {}", p.amplitude) });
        }
    }

    let max_start = partials.iter().map(|p| p.start_s).fold(0.0, f64::max);
    let total = ((max_start + cfg.duration_s) * sr).round() as usize;
    let fade = (cfg.fade_ms / 1000.0 * sr).round() as usize;
    let mut mix = vec![0.0f64; total];

    for p in partials {
        let first = (p.start_s * sr).ceil() as usize;
        let end = (((p.start_s + cfg.duration_s) * sr).ceil() as usize).min(total);
        if first >= end {
            continue;
        }
        let len = end - first;
        let omega = 2.0 * PI * p.frequency_hz;
        for (k, slot) in mix[first..end].iter_mut().enumerate() {
            let t = (first + k) as f64 / sr - p.start_s;
            *slot += p.amplitude * envelope(k, len, fade) * (omega * t).sin();
        }
    }

    let peak = mix.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = cfg.peak_target / peak;
        mix.iter_mut().for_each(|s| *s *= scale);
    }
    Ok(AudioBuffer { samples: mix, sample_rate: cfg.sample_rate })
}

/// 16-bit quantization: scale by 32767 and round half away from zero.
pub fn quantize_sample(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Canonical 44-byte header for mono 16-bit PCM.
pub fn wav_header(sample_rate: u32, data_bytes: u32) -> [u8; 44] {
    let mut h = [0u8; 44];
    h[0..4].copy_from_slice(b"RIFF");
    h[4..8].copy_from_slice(&(36 + data_bytes).to_le_bytes());
    h[8..12].copy_from_slice(b"WAVE");
    h[12..16].copy_from_slice(b"fmt ");
    h[16..20].copy_from_slice(&16u32.to_le_bytes());
    h[20..22].copy_from_slice(&1u16.to_le_bytes()); // PCM
    h[22..24].copy_from_slice(&1u16.to_le_bytes()); // mono
    h[24..28].copy_from_slice(&sample_rate.to_le_bytes());
    h[28..32].copy_from_slice(&(sample_rate * 2).to_le_bytes());
    h[32..34].copy_from_slice(&2u16.to_le_bytes());
    h[34..36].copy_from_slice(&16u16.to_le_bytes());
    h[36..40].copy_from_slice(b"data");
    h[40..44].copy_from_slice(&data_bytes.to_le_bytes());
    h
}

pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    if let Some(bad) = buffer.samples.iter().find(|s| !(s.is_finite() && s.abs() <= 1.0)) {
        return Err(SynthError::BadBuffer(format!("sample {bad} outside [-1, 1]")));
    }
    let data_bytes = u32::try_from(buffer.samples.len() * 2)
        .map_err(|_| SynthError::BadBuffer("too long for a WAV file".into()))?;
    let io_err = |source| SynthError::Io { path: path.display().to_string(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    out.write_all(&wav_header(buffer.sample_rate, data_bytes)).map_err(io_err)?;
    for &s in &buffer.samples {
        out.write_all(&quantize_sample(s).to_le_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Finds up to `n` peaks of the Hann-windowed magnitude spectrum, sorted by
/// amplitude descending, with amplitudes relative to the largest peak.
///
/// The transform covers the centered segment of the buffer whose length is
/// the largest power of two not exceeding the buffer (capped at
/// [`MAX_FFT_LEN`]). Peak positions and heights are refined by a parabola
/// through the log magnitudes of the peak bin and its neighbors. Local maxima
/// more than 80 dB below the largest are ignored.
pub fn spectral_peaks(buffer: &AudioBuffer, n: usize) -> Result<Vec<(f64, f64)>, SynthError> {
    if buffer.samples.len() < MIN_SPECTRUM_LEN {
        return Err(SynthError::BadBuffer(format!(
            "{} samples; spectral analysis needs at least {MIN_SPECTRUM_LEN}",
            buffer.samples.len()
        )));
    }
    let len = prev_power_of_two(buffer.samples.len()).min(MAX_FFT_LEN);
    let offset = (buffer.samples.len() - len) / 2;
    let segment = &buffer.samples[offset..offset + len];

    let mut spectrum: Vec<Complex<f64>> = segment
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let w = 0.5 * (1.0 - (2.0 * PI * i as f64 / len as f64).cos());
            Complex::new(s * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut spectrum);
    let mags: Vec<f64> = spectrum[..len / 2 + 1].iter().map(|c| c.norm()).collect();

    let max_mag = mags.iter().copied().fold(0.0, f64::max);
    if max_mag <= 0.0 {
        return Ok(Vec::new());
    }
    let floor = max_mag * 1e-4;
    let bin_hz = buffer.sample_rate as f64 / len as f64;

    let mut peaks: Vec<(f64, f64)> = (1..mags.len() - 1)
        .filter(|&k| mags[k] > floor && mags[k] > mags[k - 1] && mags[k] >= mags[k + 1])
        .map(|k| {
            let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
            let denom = a - 2.0 * b + c;
            let (delta, height) = if denom < 0.0 && denom.is_finite() {
                let d = 0.5 * (a - c) / denom;
                (d, (b - 0.25 * (a - c) * d).exp())
            } else {
                (0.0, mags[k])
            };
            ((k as f64 + delta) * bin_hz, height)
        })
        .collect();
    peaks.sort_by(|x, y| y.1.total_cmp(&x.1));
    peaks.truncate(n);
    if let Some(&(_, top)) = peaks.first() {
        peaks.iter_mut().for_each(|p| p.1 /= top);
    }
    Ok(peaks)
}

fn prev_power_of_two(n: usize) -> usize {
    1 << (usize::BITS - 1 - n.leading_zeros())
}
