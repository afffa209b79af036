//! Session state and the control-message state machine.
//!
//! All transitions go through [`apply_control`], which never mutates its
//! input: it returns the next state together with the reply to send. On
//! error the returned state equals the input.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use starlight_core::audify::{audify_star, AudifyConfig};
use starlight_core::catalog::StarRecord;

/// Number of per-partial gain controls.
pub const GAIN_CONTROLS: usize = 4;
/// Luminosity reported for stars that are not selected.
pub const IDLE_LUMINOSITY: f64 = 0.1;
pub const DEFAULT_FILTER_Q: f64 = 20.0;
pub const MAX_TELEMETRY_HZ: f64 = 60.0;

/// Requests understood by the control plane, tagged by `op`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    ListStars,
    SelectStar { id: String },
    SetGain { index: i64, value: f64 },
    LoadSample { slot: String, path: String },
    TriggerSample { slot: String },
    StopSample { slot: String },
    SubscribeLuminosity { rate_hz: f64 },
    SetFilterQ { value: f64 },
}

pub const OPS: [&str; 8] = [
    "list_stars",
    "select_star",
    "set_gain",
    "load_sample",
    "trigger_sample",
    "stop_sample",
    "subscribe_luminosity",
    "set_filter_q",
];

/// Parses one text frame. Errors are ready to be sent as the `error` field.
pub fn parse_message(text: &str) -> Result<ControlMessage, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    let op = match value.get("op") {
        Some(Value::String(op)) => op.clone(),
        Some(_) => return Err("malformed message: `op` must be a string".into()),
        None => return Err("malformed message: missing `op`".into()),
    };
    if !OPS.contains(&op.as_str()) {
        return Err(format!("unknown op `{op}`"));
    }
    // unit variants ignore deny_unknown_fields under internal tagging
    if op == "list_stars" && value.as_object().is_some_and(|m| m.len() > 1) {
        return Err("malformed message: list_stars takes no fields".into());
    }
    serde_json::from_value(value).map_err(|e| format!("malformed message: {e}"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Ok(Map<String, Value>),
    Error(String),
}

impl Reply {
    fn ok(v: Value) -> Self {
        match v {
            Value::Object(m) => Reply::Ok(m),
            _ => Reply::Ok(Map::new()),
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Reply::Ok(_))
    }

    pub fn to_json(&self) -> Value {
        match self {
            Reply::Ok(fields) => {
                let mut m = Map::new();
                m.insert("ok".into(), Value::Bool(true));
                m.extend(fields.clone());
                Value::Object(m)
            }
            Reply::Error(e) => json!({ "ok": false, "error": e }),
        }
    }
}

/// A selected star's partial that one gain control drives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlledPartial {
    pub frequency_hz: f64,
    pub loudness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSlot {
    /// Mono samples at the engine rate.
    pub buffer: Arc<[f32]>,
    /// Incremented on every trigger; the engine restarts playback when it
    /// sees a new value.
    pub trigger_count: u64,
    pub stop_count: u64,
    pub playing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub stars: Arc<Vec<StarRecord>>,
    pub selected_star: Option<String>,
    pub partial_gains: [f64; GAIN_CONTROLS],
    /// Partials of the selected star, frequency ascending, at most four.
    pub controlled: Vec<ControlledPartial>,
    pub sample_slots: BTreeMap<String, SampleSlot>,
    pub luminosities: BTreeMap<String, f64>,
    pub filter_q: f64,
}

impl SessionState {
    pub fn new(stars: Vec<StarRecord>) -> Self {
        let mut state = Self {
            stars: Arc::new(stars),
            selected_star: None,
            partial_gains: [1.0; GAIN_CONTROLS],
            controlled: Vec::new(),
            sample_slots: BTreeMap::new(),
            luminosities: BTreeMap::new(),
            filter_q: DEFAULT_FILTER_Q,
        };
        state.refresh_luminosities();
        state
    }

    /// `Σ L_i g_i / Σ L_i` over the controlled partials.
    pub fn selected_luminosity(&self) -> Option<f64> {
        self.selected_star.as_ref()?;
        Some(luminosity(&self.controlled, &self.partial_gains))
    }

    fn refresh_luminosities(&mut self) {
        let selected = self.selected_luminosity();
        self.luminosities = self
            .stars
            .iter()
            .map(|s| {
                let v = match (&self.selected_star, selected) {
                    (Some(id), Some(l)) if *id == s.id => l,
                    _ => IDLE_LUMINOSITY,
                };
                (s.id.clone(), v)
            })
            .collect();
    }
}

pub fn luminosity(controlled: &[ControlledPartial], gains: &[f64; GAIN_CONTROLS]) -> f64 {
    let total: f64 = controlled.iter().map(|p| p.loudness).sum();
    if total <= 0.0 {
        return 0.0;
    }
    controlled.iter().zip(gains).map(|(p, g)| p.loudness * g).sum::<f64>() / total
}

/// Partials driven by the four gain controls: the four loudest modes (ties
/// to the lower frequency), ordered by frequency ascending.
pub fn controlled_partials(star: &StarRecord) -> Result<Vec<ControlledPartial>, String> {
    let partials = audify_star(star, &AudifyConfig::default()).map_err(|e| e.to_string())?;
    let mut chosen: Vec<ControlledPartial> = partials
        .iter()
        .map(|p| ControlledPartial { frequency_hz: p.frequency_hz, loudness: p.amplitude })
        .collect();
    chosen.sort_by(|a, b| b.loudness.total_cmp(&a.loudness).then(a.frequency_hz.total_cmp(&b.frequency_hz)));
    chosen.truncate(GAIN_CONTROLS);
    chosen.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    Ok(chosen)
}

/// Source of sample audio for `load_sample`.
pub trait SampleLoader {
    fn load(&self, path: &Path) -> Result<Arc<[f32]>, String>;
}

impl<F> SampleLoader for F
where
    F: Fn(&Path) -> Result<Arc<[f32]>, String>,
{
    fn load(&self, path: &Path) -> Result<Arc<[f32]>, String> {
        self(path)
    }
}

/// Loader that refuses everything, for sessions without sample support.
pub struct NoSamples;

impl SampleLoader for NoSamples {
    fn load(&self, path: &Path) -> Result<Arc<[f32]>, String> {
        Err(format!("cannot load {}: sample loading is disabled", path.display()))
    }
}

/// Applies one message. Returns the post-transition state and the reply.
pub fn apply_control(
    state: &SessionState,
    msg: &ControlMessage,
    loader: &dyn SampleLoader,
) -> (SessionState, Reply) {
    match transition(state, msg, loader) {
        Ok((mut next, reply)) => {
            next.refresh_luminosities();
            (next, reply)
        }
        Err(e) => (state.clone(), Reply::Error(e)),
    }
}

fn transition(
    state: &SessionState,
    msg: &ControlMessage,
    loader: &dyn SampleLoader,
) -> Result<(SessionState, Reply), String> {
    let mut next = state.clone();
    let reply = match msg {
        ControlMessage::ListStars => {
            let stars: Vec<Value> = state
                .stars
                .iter()
                .map(|s| json!({ "id": s.id, "name": s.name, "modes": s.modes.len() }))
                .collect();
            Reply::ok(json!({ "stars": stars, "selected": state.selected_star }))
        }
        ControlMessage::SelectStar { id } => {
            let star = state.stars.iter().find(|s| &s.id == id).ok_or_else(|| format!("unknown star `{id}`"))?;
            next.controlled = controlled_partials(star)?;
            next.selected_star = Some(id.clone());
            next.partial_gains = [1.0; GAIN_CONTROLS];
            Reply::ok(json!({
                "selected": id,
                "gains": next.partial_gains,
                "partials": next.controlled,
                "luminosity": luminosity(&next.controlled, &next.partial_gains),
            }))
        }
        ControlMessage::SetGain { index, value } => {
            let i = usize::try_from(*index)
                .ok()
                .filter(|i| *i < GAIN_CONTROLS)
                .ok_or_else(|| "index out of range".to_string())?;
            if !(value.is_finite() && (0.0..=1.0).contains(value)) {
                return Err("gain out of range".into());
            }
            next.partial_gains[i] = *value;
            Reply::ok(json!({
                "index": i,
                "gains": next.partial_gains,
                "luminosity": next.selected_luminosity(),
            }))
        }
        ControlMessage::LoadSample { slot, path } => {
            if slot.is_empty() {
                return Err("slot name is empty".into());
            }
            let buffer = loader.load(Path::new(path))?;
            let frames = buffer.len();
            let (trigger_count, stop_count) = state
                .sample_slots
                .get(slot)
                .map(|s| (s.trigger_count, s.stop_count + u64::from(s.playing)))
                .unwrap_or((0, 0));
            next.sample_slots
                .insert(slot.clone(), SampleSlot { buffer, trigger_count, stop_count, playing: false });
            Reply::ok(json!({ "slot": slot, "frames": frames }))
        }
        ControlMessage::TriggerSample { slot } => {
            let s = next.sample_slots.get_mut(slot).ok_or_else(|| format!("slot `{slot}` is not loaded"))?;
            s.trigger_count += 1;
            s.playing = true;
            Reply::ok(json!({ "slot": slot, "playing": true }))
        }
        ControlMessage::StopSample { slot } => {
            let s = next.sample_slots.get_mut(slot).ok_or_else(|| format!("slot `{slot}` is not loaded"))?;
            if s.playing {
                s.stop_count += 1;
                s.playing = false;
            }
            Reply::ok(json!({ "slot": slot, "playing": false }))
        }
        ControlMessage::SubscribeLuminosity { rate_hz } => {
            if !(rate_hz.is_finite() && *rate_hz > 0.0 && *rate_hz <= MAX_TELEMETRY_HZ) {
                return Err(format!("rate_hz must be in (0, {MAX_TELEMETRY_HZ}]"));
            }
            Reply::ok(json!({ "rate_hz": rate_hz }))
        }
        ControlMessage::SetFilterQ { value } => {
            if !(value.is_finite() && *value > 0.0) {
                return Err("filter q must be positive".into());
            }
            next.filter_q = *value;
            Reply::ok(json!({ "q": value }))
        }
    };
    Ok((next, reply))
}
