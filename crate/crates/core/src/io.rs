//! File formats: CSV datasets and result tables, version-stamped JSON documents, and
//! run manifests with FNV-1a digests.

use std::collections::BTreeMap;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use fnv::FnvHasher;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiments::{RateStudyResult, SelectionStudyResult};
use crate::model::Dataset;
use crate::scalar::Scalar;

/// Major version written into, and accepted from, every JSON document.
pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_VERSION: &str = "1.0";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// 16-digit lowercase hex FNV-1a digest.
pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    Ok(digest_hex(&buf))
}

/// Digest of a configuration's canonical JSON form.
pub fn config_digest<C: Serialize>(cfg: &C) -> Result<String> {
    Ok(digest_hex(serde_json::to_string(cfg)?.as_bytes()))
}

/// Which column of a CSV file holds the response.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ResponseColumn {
    /// The column named `y` if there is one, otherwise the last column.
    #[default]
    Auto,
    Named(String),
    Last,
}

/// Reads a dataset with a header row. Every other column is a covariate, in file
/// order. Errors name the 1-based file line (the header is line 1).
pub fn load_dataset_csv<T: Scalar>(path: &Path, response: &ResponseColumn) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::input(format!("{} is empty", path.display())));
    }
    if headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "need at least one covariate column and a response column".into(),
        });
    }
    let y_col = match response {
        ResponseColumn::Auto => headers.iter().position(|h| h == "y").unwrap_or(headers.len() - 1),
        ResponseColumn::Last => headers.len() - 1,
        ResponseColumn::Named(name) => headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("no column named {name:?}"),
        })?,
    };
    let dim = headers.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        for (j, field) in row.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {}: {field:?} is not a number", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {}: non-finite value {field:?}", j + 1),
                });
            }
            if j == y_col {
                ys.push(T::c(v));
            } else {
                xs.push(T::c(v));
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::input(format!("{} has no data rows", path.display())));
    }
    Dataset::from_flat(dim, xs, ys)
}

/// Writes `x1,...,xD,y` with shortest round-trip formatting.
pub fn write_dataset_csv<T: Scalar>(path: &Path, data: &Dataset<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = (1..=data.dim()).map(|d| format!("x{d}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(data.dim() + 1);
    for (x, y) in data.iter() {
        row.clear();
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(y.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Stamped<'a, P> {
    format: &'a str,
    version: &'a str,
    #[serde(flatten)]
    payload: &'a P,
}

/// Serialises `payload` with `format` and `version` fields added.
pub fn to_stamped_json<P: Serialize>(format: &str, payload: &P) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Stamped {
        format,
        version: FORMAT_VERSION,
        payload,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<P: Serialize>(path: &Path, format: &str, payload: &P) -> Result<()> {
    std::fs::write(path, to_stamped_json(format, payload)?)?;
    Ok(())
}

/// Parses a document written by [`to_stamped_json`]. Unstamped documents are
/// accepted; stamped ones must have the expected format and major version.
pub fn from_stamped_json<P: DeserializeOwned>(text: &str, format: &str) -> Result<P> {
    let mut value: Value = serde_json::from_str(text)?;
    if let Value::Object(map) = &mut value {
        if let Some(v) = map.remove("version") {
            let found = match &v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let major = found.split('.').next().and_then(|m| m.parse::<u32>().ok());
            if major != Some(FORMAT_MAJOR) {
                return Err(Error::UnsupportedVersion {
                    found,
                    supported: FORMAT_MAJOR,
                });
            }
        }
        if let Some(f) = map.remove("format") {
            if f.as_str() != Some(format) {
                return Err(Error::input(format!("expected a {format:?} document, found {f}")));
            }
        }
    }
    Ok(serde_json::from_value(value)?)
}

pub fn load_json<P: DeserializeOwned>(path: &Path, format: &str) -> Result<P> {
    let text = std::fs::read_to_string(path)?;
    from_stamped_json(&text, format)
}

/// Provenance record written next to the outputs of every command-line run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Fully resolved configuration.
    pub config: Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
    /// Path as given to digest.
    pub inputs: BTreeMap<String, String>,
    /// File name within the output directory to digest.
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Rate-study table: one `rep` row per replication and curve, then one `mean` row per
/// size and curve. Failed replications have an empty value and their error message.
pub fn write_rate_csv(path: &Path, result: &RateStudyResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["row", "curve", "n", "rep", "value", "std", "reps_used", "error"])?;
    for rec in &result.records {
        if let Some(err) = &rec.error {
            w.write_record(["rep", "", &rec.n.to_string(), &rec.rep.to_string(), "", "", "", err])?;
            continue;
        }
        for (curve, v) in &rec.losses {
            w.write_record(["rep", curve, &rec.n.to_string(), &rec.rep.to_string(), &v.to_string(), "", "", ""])?;
        }
    }
    for c in &result.curves {
        for r in &c.rows {
            w.write_record([
                "mean",
                &c.name,
                &r.n.to_string(),
                "",
                &r.mean.to_string(),
                &r.std.to_string(),
                &r.reps_used.to_string(),
                "",
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-column `N mean` file for one curve, with the fitted slope in a comment.
pub fn write_curve_dat(path: &Path, curve: &crate::experiments::RateCurve) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {} ({} loss)", curve.name, curve.loss.name())?;
    if let (Some(s), Some(c)) = (curve.slope, curve.intercept) {
        writeln!(w, "# slope {s} intercept {c}")?;
    }
    for r in &curve.rows {
        writeln!(w, "{} {}", r.n, r.mean)?;
    }
    w.flush()?;
    Ok(())
}

/// Selection-study table: one `rep` row per replication and method, then one
/// `aggregate` row per size and method.
pub fn write_selection_csv(path: &Path, result: &SelectionStudyResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["row", "n", "rep", "method", "chosen", "proportion_correct", "mean_chosen", "reps_used", "error"])?;
    for rec in &result.records {
        if let Some(err) = &rec.error {
            w.write_record(["rep", &rec.n.to_string(), &rec.rep.to_string(), "", "", "", "", "", err])?;
            continue;
        }
        for (m, k) in &rec.chosen {
            w.write_record(["rep", &rec.n.to_string(), &rec.rep.to_string(), m.name(), &k.to_string(), "", "", "", ""])?;
        }
    }
    for r in &result.rows {
        w.write_record([
            "aggregate",
            &r.n.to_string(),
            "",
            r.method.name(),
            "",
            &r.proportion_correct.to_string(),
            &r.mean_chosen.to_string(),
            &r.reps_used.to_string(),
            "",
        ])?;
    }
    w.flush()?;
    Ok(())
}
