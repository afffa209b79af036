//! Pitch reservoirs: quantizing audified frequencies onto a 12- or 24-step
//! equal-tempered grid, plus text notation and Standard MIDI File export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audify::{audify_star, AudifyConfig, AudifyError};
use crate::catalog::StarRecord;

/// MIDI ticks per quarter note in exported files.
pub const TICKS_PER_QUARTER: u16 = 480;
/// Microseconds per quarter note (120 BPM).
pub const TEMPO_US_PER_QUARTER: u32 = 500_000;
/// Ticks per second at 120 BPM and 480 ticks per quarter.
pub const TICKS_PER_SECOND: f64 = 960.0;
/// Every note is held for two beats.
pub const NOTE_LENGTH_TICKS: u32 = 960;
/// Pitch-bend range assumed by the receiver, in semitones either way.
pub const BEND_RANGE_SEMITONES: f64 = 2.0;
pub const BEND_CENTER: u16 = 8192;

const NOTE_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PitchGrid {
    #[default]
    Semitone12,
    Quartertone24,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningConfig {
    pub a4_hz: f64,
    pub grid: PitchGrid,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self { a4_hz: 440.0, grid: PitchGrid::Semitone12 }
    }
}

/// A quantized pitch with its deviation from the grid.
///
/// The grid pitch is `midi_note`, raised by 50 cents when `quarter_tone` is
/// set (24-step grid only). `cent_offset` is measured from the grid pitch:
/// [-50, 50) on the semitone grid, [-25, 25) on the quarter-tone grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PitchEvent {
    pub midi_note: u8,
    pub quarter_tone: bool,
    pub cent_offset: f64,
    pub frequency_hz: f64,
    pub velocity: u8,
    pub onset_s: f64,
}

impl PitchEvent {
    /// Deviation from `midi_note` in cents, including the quarter-tone step.
    pub fn detune_cents(&self) -> f64 {
        if self.quarter_tone { 50.0 + self.cent_offset } else { self.cent_offset }
    }

    pub fn reconstruct_hz(&self, a4_hz: f64) -> f64 {
        a4_hz * 2f64.powf((self.midi_note as f64 - 69.0 + self.detune_cents() / 100.0) / 12.0)
    }

    /// Note name with octave, `C4` for MIDI 60. A trailing `+` marks the
    /// quarter-tone-raised grid pitch.
    pub fn pitch_name(&self) -> String {
        let name = NOTE_NAMES[self.midi_note as usize % 12];
        let octave = self.midi_note as i32 / 12 - 1;
        let q = if self.quarter_tone { "+" } else { "" };
        format!("{name}{q}{octave}")
    }
}

#[derive(Debug, Error)]
pub enum ReservoirError {
    #[error("{frequency_hz} Hz lies outside the MIDI range {min_hz:.2}-{max_hz:.2} Hz")]
    OutOfRange { frequency_hz: f64, min_hz: f64, max_hz: f64 },
    #[error("invalid tuning: {0}")]
    Tuning(String),
    #[error(transparent)]
    Audify(#[from] AudifyError),
    #[error("nothing to export")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Velocity for a normalized loudness: `round(L × 126) + 1`.
pub fn velocity_for(loudness: f64) -> u8 {
    ((loudness.clamp(0.0, 1.0) * 126.0).round() + 1.0) as u8
}

/// Nearest grid pitch for `frequency_hz`, ties broken upward. The event has
/// onset 0 and velocity 127.
pub fn quantize(frequency_hz: f64, cfg: &TuningConfig) -> Result<PitchEvent, ReservoirError> {
    if !(cfg.a4_hz.is_finite() && cfg.a4_hz > 0.0) {
        return Err(ReservoirError::Tuning(format!("a4 must be positive, got {}", cfg.a4_hz)));
    }
    let min_hz = cfg.a4_hz * 2f64.powf(-69.0 / 12.0);
    let max_hz = cfg.a4_hz * 2f64.powf(58.0 / 12.0);
    if !(frequency_hz >= min_hz && frequency_hz <= max_hz) {
        return Err(ReservoirError::OutOfRange { frequency_hz, min_hz, max_hz });
    }
    let fractional_note = 69.0 + 12.0 * (frequency_hz / cfg.a4_hz).log2();
    let (grid_pitch, midi_note, quarter_tone) = match cfg.grid {
        PitchGrid::Semitone12 => {
            let n = (fractional_note + 0.5).floor();
            (n, n, false)
        }
        PitchGrid::Quartertone24 => {
            let q = (2.0 * fractional_note + 0.5).floor() / 2.0;
            let n = q.floor();
            (q, n, q > n)
        }
    };
    Ok(PitchEvent {
        midi_note: midi_note.clamp(0.0, 127.0) as u8,
        quarter_tone,
        cent_offset: (fractional_note - grid_pitch) * 100.0,
        frequency_hz,
        velocity: 127,
        onset_s: 0.0,
    })
}

/// Quantizes every audible partial of `star`, taking velocity from loudness
/// and onset from the start parameter. Sorted by onset, then frequency.
pub fn reservoir_from_star(
    star: &StarRecord,
    acfg: &AudifyConfig,
    tcfg: &TuningConfig,
) -> Result<Vec<PitchEvent>, ReservoirError> {
    let mut events = audify_star(star, acfg)?
        .iter()
        .map(|p| {
            let mut ev = quantize(p.frequency_hz, tcfg)?;
            ev.velocity = velocity_for(p.amplitude);
            ev.onset_s = p.start_s;
            Ok(ev)
        })
        .collect::<Result<Vec<_>, ReservoirError>>()?;
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then(a.frequency_hz.total_cmp(&b.frequency_hz)));
    Ok(events)
}

/// One line per event: `<pitch><octave> <±cents>c vel=<velocity> t=<onset>s`.
pub fn export_text(events: &[PitchEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        let mut cents = (ev.cent_offset * 10.0).round() / 10.0;
        if cents == 0.0 {
            cents = 0.0;
        }
        let _ = writeln!(out, "{} {:+.1}c vel={} t={:.3}s", ev.pitch_name(), cents, ev.velocity, ev.onset_s);
    }
    out
}

/// 14-bit pitch-bend value for a detune in cents, over ±2 semitones.
pub fn bend_value(detune_cents: f64) -> u16 {
    let v = BEND_CENTER as f64 + (detune_cents / (BEND_RANGE_SEMITONES * 100.0) * BEND_CENTER as f64).round();
    v.clamp(0.0, 16383.0) as u16
}

pub fn onset_tick(onset_s: f64) -> u32 {
    (onset_s.max(0.0) * TICKS_PER_SECOND).round() as u32
}

fn write_var_len(buf: &mut Vec<u8>, mut value: u32) {
    let mut bytes = [0u8; 4];
    let mut n = 0;
    loop {
        bytes[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        buf.push(if i > 0 { bytes[i] | 0x80 } else { bytes[i] });
    }
}

/// Encodes events as a format-0 Standard MIDI File on channel 1: a tempo
/// event, then per note a pitch bend immediately followed by its note-on,
/// and the note-off two beats later.
pub fn midi_bytes(events: &[PitchEvent]) -> Result<Vec<u8>, ReservoirError> {
    if events.is_empty() {
        return Err(ReservoirError::Empty);
    }
    // (tick, order, bytes): note-offs sort ahead of new notes on the same tick.
    let mut timeline: Vec<(u32, u8, Vec<u8>)> = Vec::with_capacity(events.len() * 2);
    for ev in events {
        let tick = onset_tick(ev.onset_s);
        let bend = bend_value(ev.detune_cents());
        let velocity = ev.velocity.clamp(1, 127);
        timeline.push((
            tick,
            1,
            vec![0xE0, (bend & 0x7f) as u8, (bend >> 7) as u8, 0x90, ev.midi_note & 0x7f, velocity],
        ));
        timeline.push((tick + NOTE_LENGTH_TICKS, 0, vec![0x80, ev.midi_note & 0x7f, 0]));
    }
    timeline.sort_by_key(|(tick, order, _)| (*tick, *order));

    let mut track = Vec::new();
    track.extend_from_slice(&[0x00, 0xFF, 0x51, 0x03]);
    track.extend_from_slice(&TEMPO_US_PER_QUARTER.to_be_bytes()[1..]);
    let mut now = 0;
    for (tick, _, bytes) in &timeline {
        if bytes[0] == 0xE0 {
            // bend and note-on share the tick
            write_var_len(&mut track, tick - now);
            track.extend_from_slice(&bytes[..3]);
            write_var_len(&mut track, 0);
            track.extend_from_slice(&bytes[3..]);
        } else {
            write_var_len(&mut track, tick - now);
            track.extend_from_slice(bytes);
        }
        now = *tick;
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

pub fn export_midi(events: &[PitchEvent], path: impl AsRef<Path>) -> Result<(), ReservoirError> {
    let path = path.as_ref();
    let bytes = midi_bytes(events)?;
    fs::write(path, bytes).map_err(|source| ReservoirError::Io { path: path.display().to_string(), source })
}
