//! The live service: a control plane serializing all session transitions,
//! an audio thread rendering fixed-size blocks in real time, and WebSocket
//! connections speaking the JSON protocol.
//!
//! The control plane publishes each new state as an immutable [`Published`]
//! snapshot through an `ArcSwap`; the audio thread picks up the latest one at
//! every block boundary without taking a lock.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use starlight_core::catalog::StarRecord;

use crate::engine::{Engine, DEFAULT_BLOCK_FRAMES, DEFAULT_SAMPLE_RATE};
use crate::sample::load_wav_sample;
use crate::session::{apply_control, parse_message, ControlMessage, Reply, SessionState};
use crate::sink::{open_sink, AudioSink, SinkSpec};

#[derive(Debug, Error)]
pub enum PerformError {
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("cannot open audio sink: {0}")]
    Sink(std::io::Error),
    #[error("block size {0} must be a power of two")]
    BlockSize(usize),
    #[error("output buffer must hold at least one block")]
    OutputBuffer,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub sample_rate: u32,
    pub block_frames: usize,
    /// Blocks buffered between renderer and listener. See
    /// [`DEFAULT_OUTPUT_BUFFER_BLOCKS`].
    pub output_buffer_blocks: u64,
    pub sink: SinkSpec,
    /// Where audio goes when the sound device cannot be opened.
    pub fallback_wav: PathBuf,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:9000".into(),
            sample_rate: DEFAULT_SAMPLE_RATE,
            block_frames: DEFAULT_BLOCK_FRAMES,
            output_buffer_blocks: DEFAULT_OUTPUT_BUFFER_BLOCKS,
            sink: SinkSpec::Device,
            fallback_wav: PathBuf::from("starlight-session.wav"),
        }
    }
}

/// A session state as seen by the audio plane.
#[derive(Debug)]
pub struct Published {
    pub version: u64,
    pub state: SessionState,
    /// Blocks started when the snapshot went live; `u64::MAX` until recorded.
    published_at_block: AtomicU64,
}

impl Published {
    fn new(version: u64, state: SessionState) -> Self {
        Self { version, state, published_at_block: AtomicU64::new(u64::MAX) }
    }
}

#[derive(Debug, Default)]
pub struct EngineStats {
    blocks_started: AtomicU64,
    blocks_rendered: AtomicU64,
    deadline_misses: AtomicU64,
    snapshots_adopted: AtomicU64,
    max_adoption_boundaries: AtomicU64,
    worst_block_us: AtomicU64,
    worst_wake_us: AtomicU64,
    sink_errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub blocks_rendered: u64,
    pub deadline_misses: u64,
    pub snapshots_adopted: u64,
    /// Most block boundaries any snapshot waited before the audio thread
    /// rendered with it.
    pub max_adoption_boundaries: u64,
    /// Slowest render + sink write, in microseconds.
    pub worst_block_us: u64,
    /// Latest the audio thread woke after a block's render slot opened.
    pub worst_wake_us: u64,
    pub sink_errors: u64,
}

impl EngineStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            blocks_rendered: self.blocks_rendered.load(Ordering::SeqCst),
            deadline_misses: self.deadline_misses.load(Ordering::SeqCst),
            snapshots_adopted: self.snapshots_adopted.load(Ordering::SeqCst),
            max_adoption_boundaries: self.max_adoption_boundaries.load(Ordering::SeqCst),
            worst_block_us: self.worst_block_us.load(Ordering::SeqCst),
            worst_wake_us: self.worst_wake_us.load(Ordering::SeqCst),
            sink_errors: self.sink_errors.load(Ordering::SeqCst),
        }
    }
}

struct Command {
    msg: ControlMessage,
    reply: oneshot::Sender<Reply>,
}

pub struct ServerHandle {
    local_addr: SocketAddr,
    stats: Arc<EngineStats>,
    stop_audio: Arc<AtomicBool>,
    shutdown: watch::Sender<bool>,
    accept: JoinHandle<()>,
    control: JoinHandle<()>,
    audio: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Stops accepting connections, stops the audio thread and finalizes the
    /// sink. Returns the final engine statistics.
    pub async fn shutdown(mut self) -> StatsSnapshot {
        let _ = self.shutdown.send(true);
        self.accept.abort();
        self.control.abort();
        self.stop_audio.store(true, Ordering::SeqCst);
        if let Some(audio) = self.audio.take() {
            let _ = tokio::task::spawn_blocking(move || audio.join()).await;
        }
        self.stats.snapshot()
    }
}

/// Binds, starts the audio thread and begins accepting control connections.
/// Runs until [`ServerHandle::shutdown`].
pub async fn serve(catalog: Vec<StarRecord>, cfg: ServerConfig) -> Result<ServerHandle, PerformError> {
    if catalog.is_empty() {
        return Err(PerformError::EmptyCatalog);
    }
    if !cfg.block_frames.is_power_of_two() {
        return Err(PerformError::BlockSize(cfg.block_frames));
    }
    if cfg.output_buffer_blocks == 0 {
        return Err(PerformError::OutputBuffer);
    }
    let listener = TcpListener::bind(&cfg.bind)
        .await
        .map_err(|source| PerformError::Bind { addr: cfg.bind.clone(), source })?;
    let local_addr = listener.local_addr().map_err(|source| PerformError::Bind { addr: cfg.bind.clone(), source })?;
    let sink = open_sink(&cfg.sink, cfg.sample_rate, &cfg.fallback_wav).map_err(PerformError::Sink)?;

    let state = SessionState::new(catalog);
    let initial = Arc::new(Published::new(0, state.clone()));
    initial.published_at_block.store(0, Ordering::SeqCst);
    let published = Arc::new(ArcSwap::new(initial.clone()));
    let stats = Arc::new(EngineStats::default());
    let stop_audio = Arc::new(AtomicBool::new(false));

    let audio = {
        let (published, stats, stop) = (published.clone(), stats.clone(), stop_audio.clone());
        let pacing = Pacing { sample_rate: cfg.sample_rate, frames: cfg.block_frames, lead: cfg.output_buffer_blocks };
        thread::Builder::new()
            .name("starlight-audio".into())
            .spawn(move || audio_loop(published, stats, stop, sink, pacing))
            .expect("spawn audio thread")
    };

    let (cmd_tx, cmd_rx) = mpsc::channel::<Command>(4096);
    let (telemetry_tx, telemetry_rx) = watch::channel(initial);
    let control = tokio::spawn(control_plane(state, cmd_rx, published, stats.clone(), telemetry_tx, cfg.sample_rate));

    let (shutdown, shutdown_rx) = watch::channel(false);
    let accept = tokio::spawn(accept_loop(listener, cmd_tx, telemetry_rx, shutdown_rx));
    info!("serving on ws://{local_addr}");

    Ok(ServerHandle { local_addr, stats, stop_audio, shutdown, accept, control, audio: Some(audio) })
}

/// Output buffering between the renderer and the listener, as in a sound
/// device's ring buffer: block `n` may be rendered from `n` periods after
/// start and plays `lead` periods later. Finishing it after that point is a
/// deadline miss. Eight blocks is about 93 ms at 44.1 kHz, enough to ride
/// out scheduler stalls on shared virtual machines.
pub const DEFAULT_OUTPUT_BUFFER_BLOCKS: u64 = 8;

#[derive(Debug, Clone, Copy)]
struct Pacing {
    sample_rate: u32,
    frames: usize,
    lead: u64,
}

fn audio_loop(
    published: Arc<ArcSwap<Published>>,
    stats: Arc<EngineStats>,
    stop: Arc<AtomicBool>,
    mut sink: Box<dyn AudioSink>,
    pacing: Pacing,
) {
    promote_to_realtime();
    let mut engine = Engine::new(pacing.sample_rate);
    let mut block = vec![0.0f32; pacing.frames];
    let period = pacing.frames as f64 / pacing.sample_rate as f64;
    let start = Instant::now();
    let mut last_version = 0;
    let mut n: u64 = 0;

    while !stop.load(Ordering::Relaxed) {
        let due = start + Duration::from_secs_f64(period * n as f64);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        let began = Instant::now();
        stats.worst_wake_us.fetch_max(began.saturating_duration_since(due).as_micros() as u64, Ordering::Relaxed);
        stats.blocks_started.store(n + 1, Ordering::SeqCst);
        let snap = published.load_full();
        if snap.version != last_version {
            last_version = snap.version;
            stats.snapshots_adopted.fetch_add(1, Ordering::Relaxed);
            let at = snap.published_at_block.load(Ordering::SeqCst);
            // `at` still unset means the snapshot was picked up before the
            // control plane finished publishing it.
            let boundaries = if at == u64::MAX { 0 } else { (n + 1).saturating_sub(at) };
            stats.max_adoption_boundaries.fetch_max(boundaries, Ordering::Relaxed);
        }
        engine.render_into(&snap.state, &mut block);
        drop(snap);
        if sink.write_block(&block).is_err() {
            stats.sink_errors.fetch_add(1, Ordering::Relaxed);
        }
        let finished = Instant::now();
        stats.worst_block_us.fetch_max((finished - began).as_micros() as u64, Ordering::Relaxed);
        if finished > start + Duration::from_secs_f64(period * (n + pacing.lead) as f64) {
            stats.deadline_misses.fetch_add(1, Ordering::Relaxed);
        }
        stats.blocks_rendered.store(n + 1, Ordering::SeqCst);
        n += 1;
    }
    if let Err(e) = sink.finish() {
        warn!("audio sink did not finish cleanly: {e}");
    }
}

/// Asks for FIFO scheduling so control traffic cannot preempt rendering.
/// Needs privileges; without them the thread keeps normal priority.
#[cfg(target_os = "linux")]
fn promote_to_realtime() {
    let param = libc::sched_param { sched_priority: 10 };
    // SAFETY: plain syscall on the calling thread with a valid parameter.
    let rc = unsafe { libc::sched_setscheduler(0, libc::SCHED_FIFO, &param) };
    if rc != 0 {
        debug!("audio thread stays at normal priority: {}", std::io::Error::last_os_error());
    }
}

#[cfg(not(target_os = "linux"))]
fn promote_to_realtime() {}

fn mutates(msg: &ControlMessage) -> bool {
    !matches!(msg, ControlMessage::ListStars | ControlMessage::SubscribeLuminosity { .. })
}

async fn control_plane(
    mut state: SessionState,
    mut commands: mpsc::Receiver<Command>,
    published: Arc<ArcSwap<Published>>,
    stats: Arc<EngineStats>,
    telemetry: watch::Sender<Arc<Published>>,
    sample_rate: u32,
) {
    let loader = move |p: &Path| load_wav_sample(p, sample_rate);
    let mut version = 0;
    while let Some(Command { msg, reply }) = commands.recv().await {
        let (next, answer) = apply_control(&state, &msg, &loader);
        if answer.is_ok() && mutates(&msg) {
            version += 1;
            state = next;
            let snap = Arc::new(Published::new(version, state.clone()));
            published.store(snap.clone());
            snap.published_at_block.store(stats.blocks_started.load(Ordering::SeqCst), Ordering::SeqCst);
            telemetry.send_replace(snap);
        }
        let _ = reply.send(answer);
    }
}

async fn accept_loop(
    listener: TcpListener,
    commands: mpsc::Sender<Command>,
    telemetry: watch::Receiver<Arc<Published>>,
    mut shutdown: watch::Receiver<bool>,
) {
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    debug!("connection from {peer}");
                    tokio::spawn(connection(stream, commands.clone(), telemetry.clone(), shutdown.clone()));
                }
                Err(e) => warn!("accept failed: {e}"),
            },
            _ = shutdown.changed() => break,
        }
    }
}

/// Telemetry frame for the current luminosity map.
pub fn luminosity_frame(state: &SessionState) -> Value {
    json!({ "event": "luminosity", "values": state.luminosities })
}

async fn connection(
    stream: TcpStream,
    commands: mpsc::Sender<Command>,
    telemetry: watch::Receiver<Arc<Published>>,
    mut shutdown: watch::Receiver<bool>,
) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            debug!("websocket handshake failed: {e}");
            return;
        }
    };
    let (mut write, mut read) = ws.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Message>();
    let writer = tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            if write.send(m).await.is_err() {
                break;
            }
        }
        let _ = write.close().await;
    });
    let mut ticker: Option<JoinHandle<()>> = None;

    loop {
        let frame = tokio::select! {
            f = read.next() => f,
            _ = shutdown.changed() => break,
        };
        let text = match frame {
            Some(Ok(Message::Text(t))) => t.to_string(),
            Some(Ok(Message::Binary(_))) => {
                let _ = out_tx.send(Message::text(Reply::Error("binary frames are not supported".into()).to_json().to_string()));
                continue;
            }
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(_)) => continue,
        };
        let reply = match parse_message(&text) {
            Err(e) => Reply::Error(e),
            Ok(msg) => {
                let rate = match &msg {
                    ControlMessage::SubscribeLuminosity { rate_hz } => Some(*rate_hz),
                    _ => None,
                };
                let (tx, rx) = oneshot::channel();
                if commands.send(Command { msg, reply: tx }).await.is_err() {
                    break;
                }
                let Ok(reply) = rx.await else { break };
                if let (Some(rate), true) = (rate, reply.is_ok()) {
                    if let Some(old) = ticker.take() {
                        old.abort();
                    }
                    ticker = Some(tokio::spawn(stream_luminosity(rate, telemetry.clone(), out_tx.clone())));
                }
                reply
            }
        };
        if out_tx.send(Message::text(reply.to_json().to_string())).is_err() {
            break;
        }
    }
    if let Some(t) = ticker {
        t.abort();
    }
    drop(out_tx);
    let _ = writer.await;
}

async fn stream_luminosity(
    rate_hz: f64,
    telemetry: watch::Receiver<Arc<Published>>,
    out: mpsc::UnboundedSender<Message>,
) {
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / rate_hz));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let frame = luminosity_frame(&telemetry.borrow().state).to_string();
        if out.send(Message::text(frame)).is_err() {
            break;
        }
    }
}
