//! Dimensionless mode parameters and their mapping to audible partials.
//!
//! For a star's mode group, each mode gets a relative frequency
//! `f / f_min`, a loudness `A / A_max` and a start parameter `φ - φ_min`.
//! Partials are obtained by scaling the relative frequency onto a base pitch
//! (C4 = 261.630 Hz by default), taking loudness as the normalized amplitude
//! and reading the start parameter directly as seconds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{validate, StarRecord};

/// Base pitch used for the published V465 Per frequencies.
pub const C4_HZ: f64 = 261.630;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessMode {
    /// `f_i / f_min`, always ≥ 1.
    pub relative_frequency: f64,
    /// `A_i / A_max`, in (0, 1].
    pub loudness: f64,
    /// `φ_i - φ_min`, always ≥ 0.
    pub start: f64,
}

/// One audible sine component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialSpec {
    pub frequency_hz: f64,
    /// Normalized amplitude in (0, 1].
    pub amplitude: f64,
    pub start_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Use the exact ratio.
    #[default]
    FullPrecision,
    /// Round the relative frequency to three decimals before scaling, which
    /// is how the published Hz column was produced.
    TableCompat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AudifyConfig {
    pub base_hz: f64,
    pub rounding: Rounding,
    pub audible_min_hz: f64,
    pub audible_max_hz: f64,
}

impl Default for AudifyConfig {
    fn default() -> Self {
        Self { base_hz: C4_HZ, rounding: Rounding::FullPrecision, audible_min_hz: 20.0, audible_max_hz: 20_000.0 }
    }
}

impl AudifyConfig {
    pub fn table_compat() -> Self {
        Self { rounding: Rounding::TableCompat, ..Self::default() }
    }

    fn check(&self) -> Result<(), AudifyError> {
        if !(self.base_hz.is_finite() && self.base_hz > 0.0) {
            return Err(AudifyError::Config(format!("base_hz must be positive, got {}", self.base_hz)));
        }
        if self.audible_min_hz.partial_cmp(&self.audible_max_hz) != Some(std::cmp::Ordering::Less) {
            return Err(AudifyError::Config(format!(
                "audible range [{}, {}] is empty",
                self.audible_min_hz, self.audible_max_hz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AudifyError {
    #[error("star `{star_id}` is invalid: {message}")]
    InvalidStar { star_id: String, message: String },
    #[error("no modes to audify")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mode {index} maps to {frequency_hz:.3} Hz, outside the audible range [{min_hz}, {max_hz}] Hz")]
    Inaudible { index: usize, frequency_hz: f64, min_hz: f64, max_hz: f64 },
    #[error("mode {index} has negative start {start}")]
    NegativeStart { index: usize, start: f64 },
}

/// Computes the dimensionless parameters of every mode, in the star's mode
/// order.
pub fn derive_dimensionless(star: &StarRecord) -> Result<Vec<DimensionlessMode>, AudifyError> {
    let violations = validate(star);
    if !violations.is_empty() {
        let message = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Err(AudifyError::InvalidStar { star_id: star.id.clone(), message });
    }
    let f_min = star.min_frequency().ok_or(AudifyError::Empty)?;
    let a_max = star.max_amplitude().ok_or(AudifyError::Empty)?;
    let phi_min = star.min_phase().ok_or(AudifyError::Empty)?;
    Ok(star
        .modes
        .iter()
        .map(|m| DimensionlessMode {
            relative_frequency: m.frequency_cpd / f_min,
            loudness: m.amplitude_mmag / a_max,
            start: m.phase - phi_min,
        })
        .collect())
}

/// Relative frequency as it enters the Hz computation under `rounding`.
pub fn effective_relative_frequency(relative_frequency: f64, rounding: Rounding) -> f64 {
    match rounding {
        Rounding::FullPrecision => relative_frequency,
        Rounding::TableCompat => (relative_frequency * 1000.0).round() / 1000.0,
    }
}

pub fn to_partials(dims: &[DimensionlessMode], cfg: &AudifyConfig) -> Result<Vec<PartialSpec>, AudifyError> {
    cfg.check()?;
    if dims.is_empty() {
        return Err(AudifyError::Empty);
    }
    dims.iter()
        .enumerate()
        .map(|(index, d)| {
            let frequency_hz = effective_relative_frequency(d.relative_frequency, cfg.rounding) * cfg.base_hz;
            if !(frequency_hz >= cfg.audible_min_hz && frequency_hz <= cfg.audible_max_hz) {
                return Err(AudifyError::Inaudible {
                    index,
                    frequency_hz,
                    min_hz: cfg.audible_min_hz,
                    max_hz: cfg.audible_max_hz,
                });
            }
            if d.start.is_nan() || d.start < 0.0 {
                return Err(AudifyError::NegativeStart { index, start: d.start });
            }
            Ok(PartialSpec { frequency_hz, amplitude: d.loudness, start_s: d.start })
        })
        .collect()
}

/// `derive_dimensionless` followed by `to_partials`.
pub fn audify_star(star: &StarRecord, cfg: &AudifyConfig) -> Result<Vec<PartialSpec>, AudifyError> {
    to_partials(&derive_dimensionless(star)?, cfg)
}

/// One row of the parameter table: the observed mode next to its derived
/// parameters and audible frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterRow {
    pub frequency_cpd: f64,
    pub amplitude_mmag: f64,
    pub phase: f64,
    /// Relative frequency as used for the Hz column (rounded under table_compat).
    pub relative_frequency: f64,
    pub loudness: f64,
    pub start: f64,
    pub frequency_hz: f64,
}

pub fn parameter_table(star: &StarRecord, cfg: &AudifyConfig) -> Result<Vec<ParameterRow>, AudifyError> {
    let dims = derive_dimensionless(star)?;
    let partials = to_partials(&dims, cfg)?;
    Ok(star
        .modes
        .iter()
        .zip(&dims)
        .zip(&partials)
        .map(|((m, d), p)| ParameterRow {
            frequency_cpd: m.frequency_cpd,
            amplitude_mmag: m.amplitude_mmag,
            phase: m.phase,
            relative_frequency: effective_relative_frequency(d.relative_frequency, cfg.rounding),
            loudness: d.loudness,
            start: d.start,
            frequency_hz: p.frequency_hz,
        })
        .collect())
}

/// Formats rows as whitespace-separated columns `f A φ f′ L p Hz`, with
/// three decimals for f, f′, L and Hz and two for φ and p. Amplitudes keep
/// between one and three decimals.
pub fn format_parameter_table(rows: &[ParameterRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{:.3} {} {:.2} {:.3} {:.3} {:.2} {:.3}",
            r.frequency_cpd,
            trimmed_decimal(r.amplitude_mmag, 1, 3),
            r.phase,
            r.relative_frequency,
            r.loudness,
            r.start,
            r.frequency_hz,
        );
    }
    out
}

fn trimmed_decimal(x: f64, min_decimals: usize, max_decimals: usize) -> String {
    let s = format!("{x:.max_decimals$}");
    let Some(dot) = s.find('.') else { return s };
    let keep = s.trim_end_matches('0').len().max(dot + 1 + min_decimals);
    s[..keep].to_string()
}
