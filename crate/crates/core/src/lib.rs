//! Audification of pulsating-star oscillation data.
//!
//! The pipeline runs from a catalog of pulsation modes (frequency in cycles
//! per day, amplitude in mmag, phase) through a dimensionless
//! parameterization of each star's mode group, to audible sine partials that
//! are rendered to WAV or quantized into microtonal pitch reservoirs.
//!
//! - [`catalog`]: star records, the built-in V465 Per fixture, CSV ingest.
//! - [`audify`]: relative frequency / loudness / start parameters and partials.
//! - [`synth`]: additive rendering, WAV output and spectral peak picking.
//! - [`analysis`]: light-curve simulation and prewhitening mode extraction.
//! - [`reservoir`]: pitch quantization, text notation and MIDI export.

pub mod analysis;
pub mod audify;
pub mod catalog;
pub mod reservoir;
pub mod synth;

pub use analysis::{ExtractionConfig, LightCurve};
pub use audify::{AudifyConfig, DimensionlessMode, PartialSpec, Rounding};
pub use catalog::{PulsationMode, StarRecord};
pub use reservoir::{PitchEvent, PitchGrid, TuningConfig};
pub use synth::{AudioBuffer, RenderConfig};
