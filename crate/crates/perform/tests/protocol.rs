use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use starlight_core::catalog::{builtin_v465_per, PulsationMode, StarRecord};
use starlight_perform::{serve, ServerConfig, ServerHandle, SinkSpec};

struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    telemetry: Vec<Value>,
}

impl Client {
    async fn connect(server: &ServerHandle) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{}", server.local_addr())).await.unwrap();
        Self { ws, telemetry: Vec::new() }
    }

    async fn send_text(&mut self, text: &str) -> Value {
        self.ws.send(Message::text(text)).await.unwrap();
        self.reply().await
    }

    async fn request(&mut self, v: Value) -> Value {
        self.send_text(&v.to_string()).await
    }

    /// Next non-telemetry frame; telemetry seen on the way is kept.
    async fn reply(&mut self) -> Value {
        loop {
            let v = self.next_frame().await;
            if v.get("event").is_some() {
                self.telemetry.push(v);
            } else {
                return v;
            }
        }
    }

    async fn next_frame(&mut self) -> Value {
        let frame = tokio::time::timeout(Duration::from_secs(5), self.ws.next()).await.unwrap().unwrap().unwrap();
        serde_json::from_str(frame.to_text().unwrap()).unwrap()
    }
}

fn duo() -> StarRecord {
    StarRecord {
        id: "duo".into(),
        name: "Duo".into(),
        modes: vec![PulsationMode::new(12.0, 1.0, 0.0), PulsationMode::new(15.0, 0.5, 1.0)],
        source: String::new(),
    }
}

async fn start(sink: SinkSpec) -> ServerHandle {
    let cfg = ServerConfig { bind: "127.0.0.1:0".into(), sink, ..ServerConfig::default() };
    serve(vec![builtin_v465_per(), duo()], cfg).await.unwrap()
}

#[tokio::test]
async fn list_stars_and_errors() {
    let server = start(SinkSpec::Null).await;
    let mut c = Client::connect(&server).await;

    let v = c.request(json!({"op": "list_stars"})).await;
    assert_eq!(v["ok"], true);
    assert_eq!(v["stars"][0]["id"], "v465_per");
    assert_eq!(v["stars"][0]["modes"], 4);
    assert_eq!(v["stars"][1]["id"], "duo");
    assert_eq!(v["stars"][1]["modes"], 2);

    let v = c.request(json!({"op": "set_gain", "index": 7, "value": 0.5})).await;
    assert_eq!(v, json!({"ok": false, "error": "index out of range"}));
    let v = c.request(json!({"op": "set_gain", "index": 0, "value": 1.5})).await;
    assert_eq!(v["ok"], false);
    let v = c.request(json!({"op": "juggle"})).await;
    assert_eq!(v["error"], "unknown op `juggle`");
    let v = c.send_text("{not json").await;
    assert!(v["error"].as_str().unwrap().starts_with("malformed message"));
    let v = c.request(json!({"op": "select_star", "id": "sirius"})).await;
    assert_eq!(v["ok"], false);
    let v = c.request(json!({"op": "trigger_sample", "slot": "bison"})).await;
    assert_eq!(v["ok"], false);

    // The connection survives every error.
    let v = c.request(json!({"op": "list_stars"})).await;
    assert_eq!(v["ok"], true);
    server.shutdown().await;
}

#[tokio::test]
async fn gains_drive_luminosity_telemetry() {
    let server = start(SinkSpec::Null).await;
    let mut c = Client::connect(&server).await;

    let v = c.request(json!({"op": "select_star", "id": "v465_per"})).await;
    assert_eq!(v["gains"], json!([1.0, 1.0, 1.0, 1.0]));
    assert_eq!(v["partials"][0]["frequency_hz"], 261.63);
    // Frequency-ascending index 1 is the loudest partial.
    let v = c.request(json!({"op": "set_gain", "index": 1, "value": 0.0})).await;
    let expected = (2.3 + 1.7 + 1.1) / (3.5 + 2.3 + 1.7 + 1.1);
    assert!((v["luminosity"].as_f64().unwrap() - expected).abs() < 1e-12);

    let v = c.request(json!({"op": "subscribe_luminosity", "rate_hz": 50})).await;
    assert_eq!(v["ok"], true);
    let started = Instant::now();
    while c.telemetry.len() < 10 {
        let f = c.next_frame().await;
        c.telemetry.push(f);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed > 0.1, "telemetry faster than subscribed: {elapsed}s for 10 frames");
    let last = c.telemetry.last().unwrap();
    assert_eq!(last["event"], "luminosity");
    assert!((last["values"]["v465_per"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert_eq!(last["values"]["duo"], 0.1);

    let v = c.request(json!({"op": "subscribe_luminosity", "rate_hz": 120})).await;
    assert_eq!(v["ok"], false);
    server.shutdown().await;
}

#[tokio::test]
async fn connections_share_one_session() {
    let server = start(SinkSpec::Null).await;
    let mut a = Client::connect(&server).await;
    let mut b = Client::connect(&server).await;
    a.request(json!({"op": "select_star", "id": "duo"})).await;
    let v = b.request(json!({"op": "list_stars"})).await;
    assert_eq!(v["selected"], "duo");
    let v = b.request(json!({"op": "set_gain", "index": 0, "value": 0.0})).await;
    assert!((v["luminosity"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    server.shutdown().await;
}

#[tokio::test]
async fn samples_reach_the_wav_sink() {
    let dir = tempfile::tempdir().unwrap();
    let call = dir.path().join("bison.wav");
    let spec = hound::WavSpec { channels: 2, sample_rate: 22_050, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&call, spec).unwrap();
    for i in 0..22_050 {
        let s = (8000.0 * (std::f64::consts::TAU * 300.0 * i as f64 / 22_050.0).sin()) as i16;
        w.write_sample(s).unwrap();
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();

    let out = dir.path().join("session.wav");
    let server = start(SinkSpec::Wav(out.clone())).await;
    let mut c = Client::connect(&server).await;
    let v = c.request(json!({"op": "load_sample", "slot": "bison", "path": call.to_str().unwrap()})).await;
    assert_eq!(v["frames"], 44_100, "resampled to the engine rate");
    let v = c.request(json!({"op": "load_sample", "slot": "boar", "path": "/nonexistent.wav"})).await;
    assert_eq!(v["ok"], false);
    let v = c.request(json!({"op": "trigger_sample", "slot": "bison"})).await;
    assert_eq!(v["playing"], true);
    tokio::time::sleep(Duration::from_millis(400)).await;
    let stats = server.shutdown().await;
    assert!(stats.blocks_rendered > 0);
    assert_eq!(stats.sink_errors, 0);

    let mut r = hound::WavReader::open(&out).unwrap();
    assert_eq!(r.spec().sample_rate, 44_100);
    assert_eq!(r.duration() as u64, stats.blocks_rendered * 512);
    let loudest = r.samples::<i16>().map(|s| s.unwrap().unsigned_abs()).max().unwrap();
    assert!(loudest > 3000, "sample audible in the recording (peak {loudest})");
}

#[tokio::test]
async fn control_flood_leaves_audio_on_time() {
    let server = start(SinkSpec::Null).await;
    let mut c = Client::connect(&server).await;
    c.request(json!({"op": "select_star", "id": "v465_per"})).await;
    let start = Instant::now();
    let mut sent = 0u32;
    while start.elapsed() < Duration::from_secs(2) {
        let due = start + Duration::from_millis(sent as u64);
        tokio::time::sleep_until(due.into()).await;
        let v = c.request(json!({"op": "set_gain", "index": sent % 4, "value": (sent % 100) as f64 / 100.0})).await;
        assert_eq!(v["ok"], true);
        sent += 1;
    }
    let stats = server.shutdown().await;
    assert!(sent > 1500);
    assert_eq!(stats.deadline_misses, 0, "{stats:?}");
    assert!(stats.max_adoption_boundaries <= 1, "{stats:?}");
    assert!(stats.snapshots_adopted > 100);
}

#[tokio::test]
async fn bind_failure_is_reported() {
    let server = start(SinkSpec::Null).await;
    let cfg = ServerConfig { bind: server.local_addr().to_string(), sink: SinkSpec::Null, ..ServerConfig::default() };
    assert!(serve(vec![duo()], cfg).await.is_err());
    let cfg = ServerConfig { bind: "127.0.0.1:0".into(), sink: SinkSpec::Null, ..ServerConfig::default() };
    assert!(serve(Vec::new(), cfg).await.is_err());
    server.shutdown().await;
}
