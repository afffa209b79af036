//! Star records and pulsation-mode catalogs.
//!
//! Catalogs are CSV files with the header `star_id,name,freq_cpd,amp_mmag,phase`.
//! Consecutive or scattered rows sharing a `star_id` are grouped into one
//! [`StarRecord`], keeping modes in file order and stars in order of first
//! appearance.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header every catalog file must carry.
pub const CATALOG_HEADER: [&str; 5] = ["star_id", "name", "freq_cpd", "amp_mmag", "phase"];

/// Identifier of the built-in V465 Per record.
pub const V465_PER_ID: &str = "v465_per";

/// One observed oscillation of a pulsating star.
///
/// The phase is stored as given. Only the analysis module assigns it a unit
/// (radians, in `sin(2πft + φ)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsationMode {
    /// Cycles per day.
    pub frequency_cpd: f64,
    /// Milli-magnitudes.
    pub amplitude_mmag: f64,
    pub phase: f64,
}

impl PulsationMode {
    pub fn new(frequency_cpd: f64, amplitude_mmag: f64, phase: f64) -> Self {
        Self { frequency_cpd, amplitude_mmag, phase }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarRecord {
    pub id: String,
    pub name: String,
    pub modes: Vec<PulsationMode>,
    pub source: String,
}

impl StarRecord {
    pub fn min_frequency(&self) -> Option<f64> {
        self.modes.iter().map(|m| m.frequency_cpd).reduce(f64::min)
    }

    pub fn max_amplitude(&self) -> Option<f64> {
        self.modes.iter().map(|m| m.amplitude_mmag).reduce(f64::max)
    }

    pub fn min_phase(&self) -> Option<f64> {
        self.modes.iter().map(|m| m.phase).reduce(f64::min)
    }
}

/// The four-mode δ Scuti star V465 Per.
pub fn builtin_v465_per() -> StarRecord {
    StarRecord {
        id: V465_PER_ID.to_string(),
        name: "V465 Per".to_string(),
        modes: vec![
            PulsationMode::new(14.040, 3.5, -0.14),
            PulsationMode::new(17.208, 2.3, 2.05),
            PulsationMode::new(33.259, 1.7, 1.93),
            PulsationMode::new(13.721, 1.1, 3.55),
        ],
        source: "delta Scuti mode table for V465 Per (f, A, phase)".to_string(),
    }
}

/// Catalog shipped with the binary: currently only V465 Per.
pub fn builtin_catalog() -> Vec<StarRecord> {
    vec![builtin_v465_per()]
}

/// A single broken invariant, reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index into `modes`, when the violation concerns one mode.
    pub mode: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            Some(i) => write!(f, "mode {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks every [`StarRecord`] and [`PulsationMode`] invariant. An empty
/// result means the record is valid.
pub fn validate(star: &StarRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if star.id.trim().is_empty() {
        out.push(Violation { mode: None, message: "star id is empty".into() });
    }
    if star.modes.is_empty() {
        out.push(Violation { mode: None, message: "star has no modes".into() });
    }
    for (i, m) in star.modes.iter().enumerate() {
        if !(m.frequency_cpd.is_finite() && m.frequency_cpd > 0.0) {
            out.push(Violation {
                mode: Some(i),
                message: format!("frequency must be positive and finite, got {}", m.frequency_cpd),
            });
        }
        if !(m.amplitude_mmag.is_finite() && m.amplitude_mmag > 0.0) {
            out.push(Violation {
                mode: Some(i),
                message: format!("amplitude must be positive and finite, got {}", m.amplitude_mmag),
            });
        }
        if !m.phase.is_finite() {
            out.push(Violation { mode: Some(i), message: format!("phase must be finite, got {}", m.phase) });
        }
        if let Some(j) = star.modes[..i].iter().position(|o| o.frequency_cpd == m.frequency_cpd) {
            out.push(Violation {
                mode: Some(i),
                message: format!("duplicate frequency {} (also mode {j})", m.frequency_cpd),
            });
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("catalog header must be `{}`, found `{found}`", CATALOG_HEADER.join(","))]
    Header { found: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("star `{star_id}` is invalid: {}", join_violations(.violations))]
    Invalid { star_id: String, violations: Vec<Violation> },
    #[error("catalog contains no stars")]
    Empty,
    #[error("cannot write catalog: {0}")]
    Write(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogRow {
    star_id: String,
    name: String,
    freq_cpd: f64,
    amp_mmag: f64,
    phase: f64,
}

/// Reads a catalog file. See [`parse_catalog`].
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<StarRecord>, CatalogError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
    parse_catalog(file)
}

/// Parses catalog CSV text, grouping rows by `star_id` and validating every
/// resulting record. Row numbers in errors are 1-based file lines, so the
/// first data row is row 2.
pub fn parse_catalog<R: Read>(reader: R) -> Result<Vec<StarRecord>, CatalogError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CatalogError::Row { row: 1, message: e.to_string() })?;
    if headers.iter().ne(CATALOG_HEADER.iter().copied()) {
        return Err(CatalogError::Header { found: headers.iter().collect::<Vec<_>>().join(",") });
    }

    let mut stars: Vec<StarRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, result) in rdr.deserialize::<CatalogRow>().enumerate() {
        let row_no = i + 2;
        let row = result.map_err(|e| CatalogError::Row { row: row_no, message: row_message(&e) })?;
        if row.star_id.is_empty() {
            return Err(CatalogError::Row { row: row_no, message: "empty star_id".into() });
        }
        let mode = PulsationMode::new(row.freq_cpd, row.amp_mmag, row.phase);
        match index.get(&row.star_id) {
            Some(&k) => stars[k].modes.push(mode),
            None => {
                index.insert(row.star_id.clone(), stars.len());
                stars.push(StarRecord {
                    id: row.star_id,
                    name: row.name,
                    modes: vec![mode],
                    source: String::new(),
                });
            }
        }
    }

    for star in &stars {
        let violations = validate(star);
        if !violations.is_empty() {
            return Err(CatalogError::Invalid { star_id: star.id.clone(), violations });
        }
    }
    Ok(stars)
}

fn row_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    }
}

/// Writes stars in the catalog CSV format. Floats are written in their
/// shortest round-trip form, so [`parse_catalog`] recovers them exactly.
pub fn write_catalog<W: Write>(stars: &[StarRecord], writer: W) -> Result<(), CatalogError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(CATALOG_HEADER).map_err(|e| CatalogError::Write(e.to_string()))?;
    for star in stars {
        for m in &star.modes {
            wtr.serialize(CatalogRow {
                star_id: star.id.clone(),
                name: star.name.clone(),
                freq_cpd: m.frequency_cpd,
                amp_mmag: m.amplitude_mmag,
                phase: m.phase,
            })
            .map_err(|e| CatalogError::Write(e.to_string()))?;
        }
    }
    wtr.flush().map_err(|e| CatalogError::Write(e.to_string()))
}

/// Looks a star up by id.
pub fn find_star<'a>(stars: &'a [StarRecord], id: &str) -> Option<&'a StarRecord> {
    stars.iter().find(|s| s.id == id)
}
