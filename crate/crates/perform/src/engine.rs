//! Block-based audio rendering from session snapshots.
//!
//! The engine owns everything that changes per sample (oscillator phases,
//! current gains, filter memories, sample playback positions) and only reads
//! the [`SessionState`] it is handed at each block boundary. Gains move
//! linearly from their previous value to the snapshot value across one block,
//! so a change is fully applied by the end of the first block that sees it.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::filter::FilterBank;
use crate::session::{SessionState, GAIN_CONTROLS};

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_BLOCK_FRAMES: usize = 512;
/// Output ceiling of the soft clipper.
pub const CLIP_CEILING: f64 = 0.999;
const CLIP_KNEE: f64 = 0.5;

/// Identity below the knee, then a tanh shoulder approaching ±0.999. The
/// curve and its slope are continuous at the knee.
pub fn soft_clip(x: f64) -> f64 {
    let a = x.abs();
    if a <= CLIP_KNEE {
        return x;
    }
    let room = CLIP_CEILING - CLIP_KNEE;
    x.signum() * (CLIP_KNEE + room * ((a - CLIP_KNEE) / room).tanh())
}

#[derive(Debug, Clone)]
struct Voice {
    loudness: f64,
    phase: f64,
    phase_inc: f64,
    gain: f64,
}

#[derive(Debug, Clone)]
struct Player {
    buffer: Arc<[f32]>,
    pos: usize,
    active: bool,
    seen_trigger: u64,
    seen_stop: u64,
}

#[derive(Debug, Clone)]
pub struct Engine {
    sample_rate: f64,
    star: Option<String>,
    voices: Vec<Voice>,
    fading: Vec<Voice>,
    fading_scale: f64,
    mix_scale: f64,
    bank: FilterBank,
    players: BTreeMap<String, Player>,
    dry: Vec<f64>,
    weights: Vec<f64>,
}

impl Engine {
    pub fn new(sample_rate: u32) -> Self {
        Self {
            sample_rate: sample_rate as f64,
            star: None,
            voices: Vec::new(),
            fading: Vec::new(),
            fading_scale: 0.0,
            mix_scale: 0.0,
            bank: FilterBank::default(),
            players: BTreeMap::new(),
            dry: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate as u32
    }

    /// Current (end of last block) gain of each controlled partial.
    pub fn current_gains(&self) -> Vec<f64> {
        self.voices.iter().map(|v| v.gain).collect()
    }

    /// Number of sample slots currently sounding.
    pub fn active_samples(&self) -> usize {
        self.players.values().filter(|p| p.active).count()
    }

    pub fn render_block(&mut self, state: &SessionState, frames: usize) -> Vec<f32> {
        let mut out = vec![0.0; frames];
        self.render_into(state, &mut out);
        out
    }

    /// Renders `out.len()` frames from `state`.
    pub fn render_into(&mut self, state: &SessionState, out: &mut [f32]) {
        let frames = out.len();
        if frames == 0 {
            return;
        }
        self.adopt(state);
        let ramp = 1.0 / frames as f64;

        let mut targets = [0.0; GAIN_CONTROLS];
        let mut starts = [0.0; GAIN_CONTROLS];
        for (i, v) in self.voices.iter().enumerate() {
            targets[i] = state.partial_gains[i];
            starts[i] = v.gain;
        }

        self.dry.clear();
        self.dry.resize(frames, 0.0);
        for p in self.players.values_mut().filter(|p| p.active) {
            let n = (p.buffer.len() - p.pos).min(frames);
            for (d, s) in self.dry.iter_mut().zip(&p.buffer[p.pos..p.pos + n]) {
                *d += *s as f64;
            }
            p.pos += n;
            if p.pos >= p.buffer.len() {
                p.active = false;
            }
        }
        let filtered = !self.bank.is_empty();
        self.weights.resize(self.voices.len(), 0.0);

        for (n, slot) in out.iter_mut().enumerate() {
            let frac = (n + 1) as f64 * ramp;
            let mut acc = 0.0;
            for (i, v) in self.voices.iter_mut().enumerate() {
                let g = starts[i] + (targets[i] - starts[i]) * frac;
                acc += self.mix_scale * v.loudness * g * v.phase.sin();
                v.phase = (v.phase + v.phase_inc) % TAU;
                self.weights[i] = v.loudness * g;
            }
            for v in &mut self.fading {
                let g = v.gain * (1.0 - frac);
                acc += self.fading_scale * v.loudness * g * v.phase.sin();
                v.phase = (v.phase + v.phase_inc) % TAU;
            }
            let x = self.dry[n];
            acc += if filtered { self.bank.process(x, &self.weights) } else { x };
            *slot = soft_clip(acc) as f32;
        }

        for (v, t) in self.voices.iter_mut().zip(&targets) {
            v.gain = *t;
        }
        self.fading.clear();
    }

    fn adopt(&mut self, state: &SessionState) {
        if state.selected_star != self.star {
            self.fading = std::mem::take(&mut self.voices);
            self.fading_scale = self.mix_scale;
            self.star = state.selected_star.clone();
            self.voices = state
                .controlled
                .iter()
                .take(GAIN_CONTROLS)
                .map(|p| Voice {
                    loudness: p.loudness,
                    phase: 0.0,
                    phase_inc: TAU * p.frequency_hz / self.sample_rate,
                    gain: 0.0,
                })
                .collect();
            let total: f64 = state.controlled.iter().map(|p| p.loudness).sum();
            self.mix_scale = if total > 0.0 { 1.0 / total } else { 0.0 };
        }
        let mut centers = [0.0; GAIN_CONTROLS];
        let n = state.controlled.len().min(GAIN_CONTROLS);
        for (c, p) in centers.iter_mut().zip(&state.controlled) {
            *c = p.frequency_hz;
        }
        if !self.bank.matches(&centers[..n], state.filter_q) {
            self.bank = FilterBank::new(&centers[..n], state.filter_q, self.sample_rate);
        }

        self.players.retain(|name, _| state.sample_slots.contains_key(name));
        for (name, slot) in &state.sample_slots {
            let player = self.players.entry(name.clone()).or_insert_with(|| Player {
                buffer: slot.buffer.clone(),
                pos: 0,
                active: false,
                seen_trigger: 0,
                seen_stop: 0,
            });
            if !Arc::ptr_eq(&player.buffer, &slot.buffer) {
                player.buffer = slot.buffer.clone();
                player.active = false;
                player.pos = 0;
            }
            let retriggered = slot.trigger_count != player.seen_trigger;
            let stopped = slot.stop_count != player.seen_stop;
            player.seen_trigger = slot.trigger_count;
            player.seen_stop = slot.stop_count;
            if retriggered {
                player.pos = 0;
                player.active = slot.playing && !player.buffer.is_empty();
            } else if stopped {
                player.active = false;
            }
        }
    }
}
