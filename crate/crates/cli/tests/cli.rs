use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use starlight_core::analysis::{even_times, extract_modes, simulate_light_curve, ExtractionConfig};
use starlight_core::audify::{format_parameter_table, parameter_table, AudifyConfig};
use starlight_core::catalog::{builtin_v465_per, StarRecord};

fn starlight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starlight")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn audify_prints_table_rows() {
    let text = stdout(&starlight(&["audify", "--rounding", "table_compat"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "14.040 3.5 -0.14 1.023 1.000 0.00 267.647");
    assert_eq!(lines[3], "13.721 1.1 3.55 1.000 0.314 3.69 261.630");
}

#[test]
fn audify_writes_wav() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("v465.wav");
    let args = ["audify", "--out", path_str(&wav), "--duration", "1", "--sample-rate", "8000"];
    let first = stdout(&starlight(&args));
    let bytes = std::fs::read(&wav).unwrap();
    // Latest start is 3.69 s, so the file holds 4.69 s.
    assert_eq!(bytes.len(), 44 + 2 * 37_520);
    assert_eq!(stdout(&starlight(&args)), first);
    assert_eq!(std::fs::read(&wav).unwrap(), bytes, "deterministic output");
}

#[test]
fn exit_codes() {
    let out = starlight(&["audify", "--star", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    assert_eq!(starlight(&["audify", "--rounding", "sloppy"]).status.code(), Some(2));
    assert_eq!(starlight(&["fly"]).status.code(), Some(2));
    assert_eq!(starlight(&["audify", "--catalog", "/nonexistent.csv"]).status.code(), Some(1));
}

#[test]
fn base_hz_on_single_mode_star() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("solo.csv");
    std::fs::write(&cat, "star_id,name,freq_cpd,amp_mmag,phase\nsolo,Solo,10.0,1.0,0.0\n").unwrap();
    let text = stdout(&starlight(&["audify", "--catalog", path_str(&cat), "--star", "solo", "--base-hz", "440"]));
    assert_eq!(text.trim_end().split(' ').next_back(), Some("440.000"));
}

#[test]
fn analyze_errors_on_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(starlight(&["analyze", path_str(&empty)]).status.code(), Some(1));
}

#[test]
fn analyze_single_mode_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("solo.csv");
    std::fs::write(&cat, "star_id,name,freq_cpd,amp_mmag,phase\nsolo,Solo,7.25,2.0,1.0\n").unwrap();
    let lc = dir.path().join("solo_lc.csv");
    stdout(&starlight(&["simulate", "--catalog", path_str(&cat), "--star", "solo", "--out", path_str(&lc)]));
    let text = stdout(&starlight(&["analyze", path_str(&lc), "--id", "solo"]));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{text}");
    let f: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(&f[..2], ["solo", "solo"]);
    let (freq, amp, phase): (f64, f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap());
    assert!((freq - 7.25).abs() < 1e-2);
    assert!((amp - 2.0).abs() < 0.05);
    assert!((phase - 1.0).abs() < 0.05);
}

#[test]
fn file_chain_matches_in_process_chain() {
    let dir = tempfile::tempdir().unwrap();
    let lc = dir.path().join("v465.csv");
    let cat = dir.path().join("recovered.csv");
    stdout(&starlight(&["simulate", "--out", path_str(&lc)]));
    let csv = stdout(&starlight(&["analyze", path_str(&lc), "--id", "rec"]));
    assert_eq!(csv.lines().count(), 5, "header plus four modes");
    std::fs::write(&cat, &csv).unwrap();
    let via_files = stdout(&starlight(&["audify", "--catalog", path_str(&cat), "--star", "rec"]));

    let lc = simulate_light_curve(&builtin_v465_per(), &even_times(0.0, 10.0, 2000)).unwrap();
    let modes = extract_modes(&lc, &ExtractionConfig::default()).unwrap();
    let star = StarRecord { id: "rec".into(), name: "rec".into(), modes, source: String::new() };
    let direct = format_parameter_table(&parameter_table(&star, &AudifyConfig::default()).unwrap());
    assert_eq!(via_files, direct);
}

#[test]
fn reservoir_outputs() {
    let text = stdout(&starlight(&["reservoir"]));
    assert!(text.starts_with("C4 "), "{text}");
    assert_eq!(text.lines().count(), 4);

    let dir = tempfile::tempdir().unwrap();
    let mid = dir.path().join("v465.mid");
    let txt = dir.path().join("v465.txt");
    let out = starlight(&["reservoir", "--grid", "quartertone_24", "--midi-out", path_str(&mid), "--text-out", path_str(&txt)]);
    assert!(stdout(&out).is_empty());
    let smf_bytes = std::fs::read(&mid).unwrap();
    let smf = midly::Smf::parse(&smf_bytes).unwrap();
    assert_eq!(smf.header.format, midly::Format::SingleTrack);
    for line in std::fs::read_to_string(&txt).unwrap().lines() {
        let cents: f64 = line.split(' ').nth(1).unwrap().trim_end_matches('c').parse().unwrap();
        assert!(cents.abs() < 25.0, "{line}");
    }
}

#[test]
fn simulate_is_deterministic() {
    let a = stdout(&starlight(&["simulate", "--samples", "50", "--days", "2"]));
    let b = stdout(&starlight(&["simulate", "--samples", "50", "--days", "2"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().next(), Some("time_d,mag_mmag"));
    assert_eq!(a.lines().count(), 51);
    assert_eq!(starlight(&["simulate", "--samples", "0"]).status.code(), Some(1));
}

#[test]
fn serve_records_and_rejects_bad_catalogs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "star_id,name,freq_cpd,amp_mmag,phase\nx,X,10.0,0.0,0.0\n").unwrap();
    assert_eq!(starlight(&["serve", "--catalog", path_str(&bad)]).status.code(), Some(1));

    let wav = dir.path().join("session.wav");
    let mut child = Command::new(env!("CARGO_BIN_EXE_starlight"))
        .args(["serve", "--bind", "127.0.0.1:0", "--wav-sink", path_str(&wav)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let reply = rt.block_on(async {
        use futures_util::{SinkExt, StreamExt};
        let (mut ws, _) = tokio_tungstenite::connect_async(url.as_str()).await.unwrap();
        ws.send(tokio_tungstenite::tungstenite::Message::text(r#"{"op":"list_stars"}"#)).await.unwrap();
        let frame = ws.next().await.unwrap().unwrap();
        serde_json::from_str::<serde_json::Value>(frame.to_text().unwrap()).unwrap()
    });
    assert_eq!(reply["stars"][0]["id"], "v465_per");

    std::thread::sleep(Duration::from_millis(1500));
    child.kill().unwrap();
    child.wait().unwrap();
    let r = hound::WavReader::open(&wav).unwrap();
    assert_eq!(r.spec().sample_rate, 44_100);
    assert!(r.duration() >= 44_100 / 2, "rolling header kept current");
}
