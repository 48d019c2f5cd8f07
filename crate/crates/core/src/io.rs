//! Cloud files: CSV with header `x1,…,xm,w` or JSON-lines `{"p":[…],"w":…}`,
//! plus a `<file>.meta.json` sidecar carrying n and provenance.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{CloudMeta, WeightedCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Csv,
    JsonLines,
}

impl CloudFormat {
    /// Guesses the format from the extension; anything but `.jsonl`/`.ndjson` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => CloudFormat::JsonLines,
            _ => CloudFormat::Csv,
        }
    }
}

/// Sidecar written next to every cloud file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub m: usize,
    pub points: usize,
    pub meta: CloudMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Deserialize)]
struct JsonRow {
    p: Vec<f64>,
    w: f64,
}

/// Reads a cloud. The intrinsic dimension comes from `n` when given,
/// otherwise from the sidecar; it is an error if neither is available.
pub fn load_cloud(path: &Path, n: Option<usize>) -> Result<WeightedCloud> {
    let sidecar: Option<Sidecar> = match File::open(sidecar_path(path)) {
        Ok(f) => Some(serde_json::from_reader(BufReader::new(f))?),
        Err(_) => None,
    };
    let n = n.or(sidecar.as_ref().map(|s| s.n)).ok_or_else(|| {
        Error::InvalidData("intrinsic dimension unknown: pass n or provide a .meta.json sidecar".into())
    })?;
    let (dim, coords, weights) = match CloudFormat::from_path(path) {
        CloudFormat::Csv => read_csv(path)?,
        CloudFormat::JsonLines => read_jsonl(path)?,
    };
    let meta = sidecar.map(|s| s.meta).unwrap_or_else(|| CloudMeta {
        source: format!("file:{}", path.display()),
        ..CloudMeta::default()
    });
    WeightedCloud::new(dim, n, coords, weights, meta)
}

fn read_csv(path: &Path) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let cols = headers.len();
    if cols < 2 {
        return Err(Error::InvalidData("CSV needs columns x1..xm,w".into()));
    }
    for (i, h) in headers.iter().enumerate() {
        let want = if i + 1 == cols {
            "w".to_string()
        } else {
            format!("x{}", i + 1)
        };
        if h.trim() != want {
            return Err(Error::InvalidData(format!(
                "bad CSV header column {}: expected '{want}', found '{h}'",
                i + 1
            )));
        }
    }
    let dim = cols - 1;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::InvalidData(format!(
                "row {}: expected {cols} fields, found {}",
                row + 1,
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidData(format!("row {}: cannot parse '{field}'", row + 1))
            })?;
            if j + 1 == cols {
                weights.push(v);
            } else {
                coords.push(v);
            }
        }
    }
    Ok((dim, coords, weights))
}

fn read_jsonl(path: &Path) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut dim = None;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (row, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: JsonRow = serde_json::from_str(&line)?;
        let d = *dim.get_or_insert(r.p.len());
        if r.p.len() != d {
            return Err(Error::InvalidData(format!(
                "line {}: point has dimension {}, expected {d}",
                row + 1,
                r.p.len()
            )));
        }
        coords.extend(r.p);
        weights.push(r.w);
    }
    Ok((dim.unwrap_or(0), coords, weights))
}

/// Writes the cloud and its sidecar. Floats use shortest round-trip form.
pub fn save_cloud(cloud: &WeightedCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        CloudFormat::Csv => {
            let header: Vec<String> = (1..=cloud.dim())
                .map(|i| format!("x{i}"))
                .chain(std::iter::once("w".to_string()))
                .collect();
            writeln!(out, "{}", header.join(","))?;
            for (p, w) in cloud.points().zip(cloud.weights()) {
                for c in p {
                    write!(out, "{c},")?;
                }
                writeln!(out, "{w}")?;
            }
        }
        CloudFormat::JsonLines => {
            for (p, w) in cloud.points().zip(cloud.weights()) {
                let row = serde_json::json!({ "p": p, "w": w });
                writeln!(out, "{row}")?;
            }
        }
    }
    out.flush()?;
    let sidecar = Sidecar {
        n: cloud.n(),
        m: cloud.dim(),
        points: cloud.len(),
        meta: cloud.meta().clone(),
    };
    let mut f = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}
