//! Multiperiodic light curves: simulation from a mode list and recovery of
//! modes by iterative prewhitening.
//!
//! Each prewhitening step picks the highest peak of the amplitude spectrum
//! `A(f) = (2/N) |Σ m_j exp(-2πi f t_j)|` of the current residual, refines the
//! frequency by a 1-D search over the least-squares fit of `a sin + b cos`,
//! and then re-optimizes every mode found so far jointly
//! (Levenberg-Marquardt) against the data before forming the next residual.
//! Phases follow `m(t) = Σ A sin(2π f t + φ)` with φ in radians.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{PulsationMode, StarRecord};

/// Smallest curve [`extract_modes`] works on.
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("light curve is invalid: {0}")]
    InvalidCurve(String),
    #[error("light curve has {0} points; extraction needs at least {MIN_POINTS}")]
    TooFewPoints(usize),
    #[error("invalid extraction configuration: {0}")]
    Config(String),
    #[error("cannot read light curve {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("light curve row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("cannot write light curve: {0}")]
    Write(String),
}

/// Magnitude offsets sampled at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct LightCurve {
    times_d: Vec<f64>,
    magnitudes_mmag: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    time_d: f64,
    mag_mmag: f64,
}

impl LightCurve {
    pub fn new(times_d: Vec<f64>, magnitudes_mmag: Vec<f64>) -> Result<Self, AnalysisError> {
        if times_d.len() != magnitudes_mmag.len() {
            return Err(AnalysisError::InvalidCurve(format!(
                "{} times but {} magnitudes",
                times_d.len(),
                magnitudes_mmag.len()
            )));
        }
        check_times(&times_d)?;
        if let Some(i) = magnitudes_mmag.iter().position(|m| !m.is_finite()) {
            return Err(AnalysisError::InvalidCurve(format!("magnitude {i} is not finite")));
        }
        Ok(Self { times_d, magnitudes_mmag })
    }

    pub fn times(&self) -> &[f64] {
        &self.times_d
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes_mmag
    }

    pub fn len(&self) -> usize {
        self.times_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_d.is_empty()
    }

    /// Time between the first and last observation.
    pub fn span(&self) -> f64 {
        match (self.times_d.first(), self.times_d.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn median_step(&self) -> Option<f64> {
        let mut steps: Vec<f64> = self.times_d.windows(2).map(|w| w[1] - w[0]).collect();
        if steps.is_empty() {
            return None;
        }
        steps.sort_by(f64::total_cmp);
        let mid = steps.len() / 2;
        Some(if steps.len().is_multiple_of(2) { 0.5 * (steps[mid - 1] + steps[mid]) } else { steps[mid] })
    }

    /// Reads the two-column `time_d,mag_mmag` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| AnalysisError::Row { row: 1, message: e.to_string() })?;
        if headers.iter().ne(["time_d", "mag_mmag"]) {
            return Err(AnalysisError::Row { row: 1, message: "header must be `time_d,mag_mmag`".into() });
        }
        let mut times = Vec::new();
        let mut mags = Vec::new();
        for (i, row) in rdr.deserialize::<CurveRow>().enumerate() {
            let row = row.map_err(|e| AnalysisError::Row { row: i + 2, message: e.to_string() })?;
            times.push(row.time_d);
            mags.push(row.mag_mmag);
        }
        Self::new(times, mags)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| AnalysisError::Io { path: path.display().to_string(), source })?;
        Self::read_csv(file)
    }

    /// Writes the CSV format with floats in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalysisError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (&time_d, &mag_mmag) in self.times_d.iter().zip(&self.magnitudes_mmag) {
            wtr.serialize(CurveRow { time_d, mag_mmag }).map_err(|e| AnalysisError::Write(e.to_string()))?;
        }
        if self.is_empty() {
            wtr.write_record(["time_d", "mag_mmag"]).map_err(|e| AnalysisError::Write(e.to_string()))?;
        }
        wtr.flush().map_err(|e| AnalysisError::Write(e.to_string()))
    }
}

fn check_times(times: &[f64]) -> Result<(), AnalysisError> {
    if let Some(i) = times.iter().position(|t| !t.is_finite()) {
        return Err(AnalysisError::InvalidCurve(format!("time {i} is not finite")));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(AnalysisError::InvalidCurve(format!("times are not strictly increasing at index {}", i + 1)));
    }
    Ok(())
}

/// Evaluates `Σ A sin(2π f t + φ)` over the star's modes at each time.
pub fn simulate_light_curve(star: &StarRecord, times_d: &[f64]) -> Result<LightCurve, AnalysisError> {
    check_times(times_d)?;
    let mags = times_d
        .iter()
        .map(|&t| {
            star.modes
                .iter()
                .map(|m| m.amplitude_mmag * (TAU * m.frequency_cpd * t + m.phase).sin())
                .sum()
        })
        .collect();
    LightCurve::new(times_d.to_vec(), mags)
}

/// `n` evenly spaced times `start + i * span / n`.
pub fn even_times(start: f64, span: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + span * i as f64 / n as f64).collect()
}

/// Amplitude spectrum on an arbitrary frequency grid (cycles per day).
pub fn amplitude_spectrum(lc: &LightCurve, f_grid_cpd: &[f64]) -> Vec<f64> {
    let n = lc.len();
    if n == 0 {
        return vec![0.0; f_grid_cpd.len()];
    }
    let t0 = lc.times_d[0];
    f_grid_cpd
        .iter()
        .map(|&f| {
            let (mut re, mut im) = (0.0, 0.0);
            for (&t, &m) in lc.times_d.iter().zip(&lc.magnitudes_mmag) {
                let (s, c) = (TAU * f * (t - t0)).sin_cos();
                re += m * c;
                im -= m * s;
            }
            2.0 / n as f64 * re.hypot(im)
        })
        .collect()
}

/// Same quantity on the grid `f0 + k df`, `k < count`, using a phasor
/// recurrence per observation. Re-anchored every 256 steps to bound drift.
fn uniform_amplitude_spectrum(times: &[f64], values: &[f64], f0: f64, df: f64, count: usize) -> Vec<f64> {
    const ANCHOR: usize = 256;
    let mut re = vec![0.0; count];
    let mut im = vec![0.0; count];
    for (&t, &m) in times.iter().zip(values) {
        let (ws, wc) = (-TAU * df * t).sin_cos();
        let mut k = 0;
        while k < count {
            let (zs, zc) = (-TAU * (f0 + k as f64 * df) * t).sin_cos();
            let (mut zr, mut zi) = (zc * m, zs * m);
            let end = (k + ANCHOR).min(count);
            for j in k..end {
                re[j] += zr;
                im[j] += zi;
                let nr = zr * wc - zi * ws;
                zi = zr * ws + zi * wc;
                zr = nr;
            }
            k = end;
        }
    }
    let scale = 2.0 / times.len() as f64;
    re.iter().zip(&im).map(|(r, i)| scale * r.hypot(*i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    /// Upper bound on the number of modes returned.
    pub n_modes: usize,
    /// Frequency grid spacing is `1 / (oversample × timespan)`.
    pub oversample: f64,
    /// Search ceiling; `None` means 1.5 × the Nyquist frequency of the
    /// median sampling step.
    pub f_max_cpd: Option<f64>,
    /// Stop once peak amplitude / mean residual spectrum drops below this.
    pub snr_stop: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self { n_modes: 10, oversample: 10.0, f_max_cpd: None, snr_stop: 4.0 }
    }
}

impl ExtractionConfig {
    pub fn with_modes(n_modes: usize) -> Self {
        Self { n_modes, ..Self::default() }
    }
}

/// Per-step record of a prewhitening run.
#[derive(Debug, Clone, PartialEq)]
pub struct PrewhiteningStep {
    /// Frequency of the picked spectrum peak before refinement.
    pub peak_cpd: f64,
    pub peak_amplitude: f64,
    pub snr: f64,
    /// Residual sum of squares after this step's fit.
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Sorted by amplitude descending, phases in [0, 2π).
    pub modes: Vec<PulsationMode>,
    pub steps: Vec<PrewhiteningStep>,
    /// Residual sum of squares of the mean-subtracted data before any fit.
    pub initial_rss: f64,
    pub diagnostics: Vec<String>,
}

/// One sinusoid in `a sin(2π f τ) + b cos(2π f τ)` form, τ relative to the
/// curve's reference time.
#[derive(Debug, Clone, Copy)]
struct Sinusoid {
    f: f64,
    a: f64,
    b: f64,
}

/// Iterative prewhitening with full step reporting. See the module docs.
pub fn prewhiten(lc: &LightCurve, cfg: &ExtractionConfig) -> Result<Extraction, AnalysisError> {
    if cfg.n_modes == 0 {
        return Err(AnalysisError::Config("n_modes must be at least 1".into()));
    }
    if cfg.oversample.is_nan() || cfg.oversample < 1.0 {
        return Err(AnalysisError::Config(format!("oversample must be ≥ 1, got {}", cfg.oversample)));
    }
    if lc.len() < MIN_POINTS {
        return Err(AnalysisError::TooFewPoints(lc.len()));
    }
    let span = lc.span();
    let f_max = match cfg.f_max_cpd {
        Some(f) if f > 0.0 && f.is_finite() => f,
        Some(f) => return Err(AnalysisError::Config(format!("f_max_cpd must be positive, got {f}"))),
        None => 1.5 * 0.5 / lc.median_step().unwrap_or(1.0),
    };
    let df = 1.0 / (cfg.oversample * span);
    let count = (f_max / df).floor() as usize;
    if count < 3 {
        return Err(AnalysisError::Config(format!("frequency grid up to {f_max} c/d has fewer than 3 points")));
    }

    let t_ref = 0.5 * (lc.times_d[0] + lc.times_d[lc.len() - 1]);
    let tau: Vec<f64> = lc.times_d.iter().map(|t| t - t_ref).collect();
    let mean = lc.magnitudes_mmag.iter().sum::<f64>() / lc.len() as f64;
    let y: Vec<f64> = lc.magnitudes_mmag.iter().map(|m| m - mean).collect();
    let initial_rss = sum_sq(&y);

    let mut fitted: Vec<Sinusoid> = Vec::new();
    let mut offset = 0.0;
    let mut excluded: Vec<f64> = Vec::new();
    let mut steps = Vec::new();
    let mut diagnostics = Vec::new();
    let resolution = 1.0 / span;

    for _ in 0..2 * cfg.n_modes {
        if fitted.len() >= cfg.n_modes {
            break;
        }
        let residual = residual_of(&tau, &y, &fitted, offset);
        let rss = sum_sq(&residual);
        if rss <= 1e-18 * initial_rss || initial_rss == 0.0 {
            break;
        }
        let spectrum = uniform_amplitude_spectrum(&tau, &residual, df, df, count);
        let mean_amp = spectrum.iter().sum::<f64>() / count as f64;
        let best = spectrum
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = df * (*k as f64 + 1.0);
                excluded.iter().all(|e| (f - e).abs() > resolution)
            })
            .max_by(|a, b| a.1.total_cmp(b.1));
        let Some((k, &peak_amplitude)) = best else { break };
        let snr = if mean_amp > 0.0 { peak_amplitude / mean_amp } else { 0.0 };
        if snr < cfg.snr_stop {
            break;
        }
        let peak_cpd = df * (k as f64 + 1.0);

        let f = golden_section(peak_cpd - df, peak_cpd + df, 1e-12 * peak_cpd.max(1.0), |f| {
            single_fit(&tau, &residual, f).2
        });
        let (a, b, _) = single_fit(&tau, &residual, f);
        if !(a.is_finite() && b.is_finite() && a.hypot(b) > 0.0 && f > 0.0) {
            diagnostics.push(format!("least-squares fit near {peak_cpd:.6} c/d did not converge; skipped"));
            excluded.push(peak_cpd);
            continue;
        }

        let mut candidate = fitted.clone();
        candidate.push(Sinusoid { f, a, b });
        let unrefined_rss = sum_sq(&residual_of(&tau, &y, &candidate, offset));
        match refine_jointly(&tau, &y, &candidate, offset) {
            Some((refined, c, refined_rss)) if refined_rss <= unrefined_rss => {
                fitted = refined;
                offset = c;
            }
            _ => {
                diagnostics.push(format!("joint refinement after adding {f:.6} c/d did not improve the fit"));
                fitted = candidate;
            }
        }
        let rss = sum_sq(&residual_of(&tau, &y, &fitted, offset));
        steps.push(PrewhiteningStep { peak_cpd, peak_amplitude, snr, rss });
    }

    let mut modes: Vec<PulsationMode> = fitted
        .iter()
        .map(|s| {
            let amplitude = s.a.hypot(s.b);
            let phase = (s.b.atan2(s.a) - TAU * s.f * t_ref).rem_euclid(TAU);
            PulsationMode::new(s.f, amplitude, if phase >= TAU { 0.0 } else { phase })
        })
        .collect();
    modes.sort_by(|x, y| y.amplitude_mmag.total_cmp(&x.amplitude_mmag));
    Ok(Extraction { modes, steps, initial_rss, diagnostics })
}

/// Recovered modes only. See [`prewhiten`].
pub fn extract_modes(lc: &LightCurve, cfg: &ExtractionConfig) -> Result<Vec<PulsationMode>, AnalysisError> {
    prewhiten(lc, cfg).map(|e| e.modes)
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn residual_of(tau: &[f64], y: &[f64], fitted: &[Sinusoid], offset: f64) -> Vec<f64> {
    tau.iter()
        .zip(y)
        .map(|(&t, &v)| {
            let model: f64 = fitted
                .iter()
                .map(|s| {
                    let (sn, cs) = (TAU * s.f * t).sin_cos();
                    s.a * sn + s.b * cs
                })
                .sum();
            v - offset - model
        })
        .collect()
}

/// Least-squares `a sin + b cos` at fixed frequency; returns (a, b, rss).
fn single_fit(tau: &[f64], r: &[f64], f: f64) -> (f64, f64, f64) {
    let (mut ss, mut cc, mut sc, mut rs, mut rc, mut rr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &v) in tau.iter().zip(r) {
        let (s, c) = (TAU * f * t).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        rs += v * s;
        rc += v * c;
        rr += v * v;
    }
    let det = ss * cc - sc * sc;
    if det.abs() <= f64::EPSILON * ss * cc {
        return (f64::NAN, f64::NAN, rr);
    }
    let a = (rs * cc - rc * sc) / det;
    let b = (rc * ss - rs * sc) / det;
    (a, b, rr - a * rs - b * rc)
}

fn golden_section(mut lo: f64, mut hi: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Levenberg-Marquardt over (offset, f_k, a_k, b_k). Returns the refined
/// sinusoids, offset and rss, or `None` if the system is degenerate.
fn refine_jointly(tau: &[f64], y: &[f64], start: &[Sinusoid], offset: f64) -> Option<(Vec<Sinusoid>, f64, f64)> {
    let n_par = 1 + 3 * start.len();
    let pack = |s: &[Sinusoid], c: f64| {
        let mut p = DVector::zeros(n_par);
        p[0] = c;
        for (k, m) in s.iter().enumerate() {
            p[1 + 3 * k] = m.f;
            p[2 + 3 * k] = m.a;
            p[3 + 3 * k] = m.b;
        }
        p
    };
    let unpack = |p: &DVector<f64>| {
        let s: Vec<Sinusoid> =
            (0..start.len()).map(|k| Sinusoid { f: p[1 + 3 * k], a: p[2 + 3 * k], b: p[3 + 3 * k] }).collect();
        (s, p[0])
    };

    let mut params = pack(start, offset);
    let (s0, c0) = unpack(&params);
    let mut rss = sum_sq(&residual_of(tau, y, &s0, c0));
    let mut lambda = 1e-3;

    for _ in 0..100 {
        let (sins, c) = unpack(&params);
        let mut jac = DMatrix::zeros(tau.len(), n_par);
        let mut res = DVector::zeros(tau.len());
        for (i, (&t, &v)) in tau.iter().zip(y).enumerate() {
            let mut model = c;
            jac[(i, 0)] = 1.0;
            for (k, s) in sins.iter().enumerate() {
                let (sn, cs) = (TAU * s.f * t).sin_cos();
                model += s.a * sn + s.b * cs;
                jac[(i, 1 + 3 * k)] = TAU * t * (s.a * cs - s.b * sn);
                jac[(i, 2 + 3 * k)] = sn;
                jac[(i, 3 + 3 * k)] = cs;
            }
            res[i] = v - model;
        }
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(&res);

        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for d in 0..n_par {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &params + &step;
            let (ts, tc) = unpack(&trial);
            let trial_rss = sum_sq(&residual_of(tau, y, &ts, tc));
            if trial_rss.is_finite() && trial_rss <= rss && ts.iter().all(|s| s.f > 0.0) {
                let gain = rss - trial_rss;
                params = trial;
                rss = trial_rss;
                lambda = (lambda * 0.3).max(1e-12);
                improved = gain > 1e-15 * rss.max(f64::MIN_POSITIVE);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let (s, c) = unpack(&params);
    rss.is_finite().then_some((s, c, rss))
}

/// Smallest absolute difference between two phases, modulo 2π.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_v465_per;

    fn single(f: f64, a: f64, p: f64) -> StarRecord {
        StarRecord { id: "s".into(), name: "S".into(), modes: vec![PulsationMode::new(f, a, p)], source: String::new() }
    }

    #[test]
    fn quarter_period() {
        let lc = simulate_light_curve(&single(1.0, 2.0, 0.0), &[0.25]).unwrap();
        assert!((lc.magnitudes()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn v465_at_zero() {
        let star = builtin_v465_per();
        let lc = simulate_light_curve(&star, &[0.0]).unwrap();
        let expected = 3.5 * (-0.14f64).sin() + 2.3 * 2.05f64.sin() + 1.7 * 1.93f64.sin() + 1.1 * 3.55f64.sin();
        assert!((lc.magnitudes()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_times() {
        let lc = simulate_light_curve(&builtin_v465_per(), &[]).unwrap();
        assert!(lc.is_empty());
    }

    #[test]
    fn curve_validation() {
        assert!(LightCurve::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(LightCurve::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(LightCurve::new(vec![0.0, 1.0], vec![0.0, f64::NAN]).is_err());
        assert!(simulate_light_curve(&builtin_v465_per(), &[1.0, 0.5]).is_err());
    }

    #[test]
    fn pure_sinusoid_spectrum_peak() {
        let f0 = 3.3;
        let lc = simulate_light_curve(&single(f0, 3.0, 0.4), &even_times(0.0, 40.0, 4000)).unwrap();
        let peak = amplitude_spectrum(&lc, &[f0])[0];
        assert!((peak - 3.0).abs() < 0.06, "{peak}");
        let far = amplitude_spectrum(&lc, &[f0 + 2.0, f0 + 7.3]);
        assert!(far.iter().all(|a| *a < 0.1), "{far:?}");
    }

    #[test]
    fn zero_curve_spectrum() {
        let lc = LightCurve::new(even_times(0.0, 1.0, 50), vec![0.0; 50]).unwrap();
        assert!(amplitude_spectrum(&lc, &[0.5, 1.0, 7.0]).iter().all(|a| *a == 0.0));
    }

    #[test]
    fn uniform_spectrum_matches_direct() {
        let star = builtin_v465_per();
        let lc = simulate_light_curve(&star, &even_times(0.3, 7.0, 500)).unwrap();
        let (f0, df, count) = (0.01, 0.0137, 3000);
        let grid: Vec<f64> = (0..count).map(|k| f0 + k as f64 * df).collect();
        let direct = amplitude_spectrum(&lc, &grid);
        let fast = uniform_amplitude_spectrum(lc.times(), lc.magnitudes(), f0, df, count);
        for (a, b) in direct.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_mode_round_trip() {
        let lc = simulate_light_curve(&single(5.0, 2.0, 1.0), &even_times(0.0, 20.0, 1000)).unwrap();
        let modes = extract_modes(&lc, &ExtractionConfig::with_modes(3)).unwrap();
        assert_eq!(modes.len(), 1, "{modes:?}");
        assert!((modes[0].frequency_cpd - 5.0).abs() < 1e-3);
        assert!((modes[0].amplitude_mmag - 2.0).abs() < 1e-2);
        assert!(phase_distance(modes[0].phase, 1.0) < 1e-2);
    }

    #[test]
    fn rss_is_non_increasing() {
        let star = builtin_v465_per();
        let lc = simulate_light_curve(&star, &even_times(0.0, 10.0, 2000)).unwrap();
        let ex = prewhiten(&lc, &ExtractionConfig::with_modes(4)).unwrap();
        let mut last = ex.initial_rss;
        for s in &ex.steps {
            assert!(s.rss <= last * (1.0 + 1e-12), "{} > {}", s.rss, last);
            last = s.rss;
        }
        assert_eq!(ex.steps.len(), 4);
    }

    #[test]
    fn too_few_points() {
        let lc = simulate_light_curve(&single(1.0, 1.0, 0.0), &even_times(0.0, 1.0, 10)).unwrap();
        assert!(matches!(extract_modes(&lc, &ExtractionConfig::default()), Err(AnalysisError::TooFewPoints(10))));
        let lc = simulate_light_curve(&single(1.0, 1.0, 0.0), &even_times(0.0, 4.0, 100)).unwrap();
        let bad = ExtractionConfig { n_modes: 0, ..ExtractionConfig::default() };
        assert!(matches!(extract_modes(&lc, &bad), Err(AnalysisError::Config(_))));
        let bad = ExtractionConfig { oversample: 0.5, ..ExtractionConfig::default() };
        assert!(matches!(extract_modes(&lc, &bad), Err(AnalysisError::Config(_))));
    }

    #[test]
    fn flat_curve_yields_nothing() {
        let lc = LightCurve::new(even_times(0.0, 5.0, 200), vec![1.5; 200]).unwrap();
        assert!(extract_modes(&lc, &ExtractionConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let lc = simulate_light_curve(&builtin_v465_per(), &even_times(0.0, 1.0, 37)).unwrap();
        let mut buf = Vec::new();
        lc.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"time_d,mag_mmag\n"));
        assert_eq!(LightCurve::read_csv(buf.as_slice()).unwrap(), lc);
    }

    #[test]
    fn phase_distance_wraps() {
        assert!((phase_distance(6.2, 0.05) - (TAU - 6.15)).abs() < 1e-12);
        assert!(phase_distance(-0.14, TAU - 0.14) < 1e-12);
    }
}
