//! Resonant band-pass filter bank.
//!
//! One second-order band-pass section per partial (constant 0 dB peak gain
//! form), centered on the partial frequency with a shared quality factor.
//! Band outputs are weighted and summed.

use std::f64::consts::PI;

use crate::session::ControlledPartial;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BandPass {
    pub fn new(center_hz: f64, q: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.x2 = 0.0;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }
}

/// Stateful bank used by the engine; band weights are supplied per sample
/// so they can be ramped.
#[derive(Debug, Clone, Default)]
pub struct FilterBank {
    bands: Vec<BandPass>,
    centers: Vec<f64>,
    q: f64,
}

impl FilterBank {
    pub fn new(centers_hz: &[f64], q: f64, sample_rate: f64) -> Self {
        Self {
            bands: centers_hz.iter().map(|&f| BandPass::new(f, q, sample_rate)).collect(),
            centers: centers_hz.to_vec(),
            q,
        }
    }

    pub fn matches(&self, centers_hz: &[f64], q: f64) -> bool {
        self.q == q && self.centers == centers_hz
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// One input sample through every band; `weights[i]` scales band `i`.
    #[inline]
    pub fn process(&mut self, x: f64, weights: &[f64]) -> f64 {
        self.bands.iter_mut().zip(weights).map(|(b, w)| w * b.process(x)).sum()
    }
}

/// Filters `input` through a fresh bank: one band per partial at
/// `q`, band `i` weighted by `loudness_i × gains[i]`. Missing gains count
/// as zero.
pub fn spectral_filter(
    input: &[f32],
    partials: &[ControlledPartial],
    gains: &[f64],
    q: f64,
    sample_rate: f64,
) -> Vec<f32> {
    let centers: Vec<f64> = partials.iter().map(|p| p.frequency_hz).collect();
    let weights: Vec<f64> =
        partials.iter().enumerate().map(|(i, p)| p.loudness * gains.get(i).copied().unwrap_or(0.0)).collect();
    let mut bank = FilterBank::new(&centers, q, sample_rate);
    input.iter().map(|&x| bank.process(x as f64, &weights) as f32).collect()
}
