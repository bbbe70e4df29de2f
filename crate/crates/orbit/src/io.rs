//! Dataset, group and table files.
//!
//! Text files start with one `#META <json>` line. Floats are written with 17
//! significant digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use orbit_core::linalg::Mat;
use orbit_core::model::{Dataset, DatasetMeta, HLaw};
use orbit_core::GroupAction;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};

/// Magic bytes of the binary dataset format.
pub const BIN_MAGIC: [u8; 8] = *b"ORBITDS1";
const BIN_HEADER: usize = 8 + 8 + 8 + 8 + 8;

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn dataset_meta(data: &Dataset) -> Value {
    json!({
        "format": "orbit-dataset",
        "n": data.n(),
        "d": data.dim(),
        "sigma": data.sigma(),
        "seed": data.seed(),
        "theta_star": data.meta.theta_star,
        "group": data.meta.group,
        "h_law": data.meta.h_law.as_ref().map(|h| h.label()),
    })
}

/// Writes `#META` then one comma-separated row per observation.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = format!("#META {}\n", dataset_meta(data));
    for i in 0..data.n() {
        let row: Vec<String> = data.row(i).iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    format: Option<String>,
    n: usize,
    d: usize,
    sigma: f64,
    seed: u64,
    theta_star: Option<Vec<f64>>,
    group: Option<String>,
    h_law: Option<String>,
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::format(path, msg);
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let json = first
        .strip_prefix("#META ")
        .ok_or_else(|| bad("first line must be '#META <json>'".into()))?;
    let header: DatasetHeader =
        serde_json::from_str(json).map_err(|e| bad(format!("malformed header: {e}")))?;
    if let Some(f) = &header.format {
        if f != "orbit-dataset" {
            return Err(bad(format!("unexpected format '{f}'")));
        }
    }
    let d = header.d;
    let mut y = Vec::with_capacity(header.n * d);
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {row}: cannot parse '{}'", field.trim())))?;
            if !v.is_finite() {
                return Err(bad(format!("row {row}: non-finite value {v}")));
            }
            y.push(v);
            count += 1;
        }
        if count != d {
            return Err(bad(format!("row {row}: expected {d} values, found {count}")));
        }
        rows += 1;
    }
    if rows != header.n {
        return Err(bad(format!("header says n = {}, file has {rows} rows", header.n)));
    }
    let h_law = header.h_law.as_deref().map(HLaw::parse).transpose()?;
    let meta = DatasetMeta {
        theta_star: header.theta_star,
        group: header.group,
        h_law,
    };
    Ok(Dataset::new(d, y, header.sigma, header.seed, meta)?)
}

/// Little-endian: magic, `n`, `d`, `σ`, seed, then `n·d` values.
pub fn write_dataset_bin(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = Vec::with_capacity(BIN_HEADER + 8 * data.values().len());
    out.extend_from_slice(&BIN_MAGIC);
    out.extend_from_slice(&(data.n() as u64).to_le_bytes());
    out.extend_from_slice(&(data.dim() as u64).to_le_bytes());
    out.extend_from_slice(&data.sigma().to_le_bytes());
    out.extend_from_slice(&data.seed().to_le_bytes());
    for v in data.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

pub fn read_dataset_bin(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::format(path, msg);
    if bytes.len() < BIN_HEADER || bytes[..8] != BIN_MAGIC {
        return Err(bad("missing binary dataset header".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
    let n = u64::from_le_bytes(word(0)) as usize;
    let d = u64::from_le_bytes(word(1)) as usize;
    let sigma = f64::from_le_bytes(word(2));
    let seed = u64::from_le_bytes(word(3));
    let body = &bytes[BIN_HEADER..];
    if n.checked_mul(d).and_then(|c| c.checked_mul(8)) != Some(body.len()) {
        return Err(bad(format!(
            "header says {n}x{d} values, body holds {} bytes",
            body.len()
        )));
    }
    let y: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(bad(format!("row {}: non-finite value", i / d.max(1) + 1)));
    }
    Ok(Dataset::new(d, y, sigma, seed, DatasetMeta::default())?)
}

fn is_bin(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

/// Writes CSV or, for a `.bin` extension, the binary format.
pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    if is_bin(path) {
        write_dataset_bin(path, data)
    } else {
        write_dataset_csv(path, data)
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    if is_bin(path) {
        read_dataset_bin(path)
    } else {
        read_dataset_csv(path)
    }
}

/// Serialized group: elements as row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRecord {
    pub name: String,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub elements: Vec<Vec<Vec<f64>>>,
}

impl GroupRecord {
    pub fn from_group(g: &GroupAction) -> Self {
        GroupRecord {
            name: g.name().to_string(),
            d: g.dim(),
            k: g.order(),
            elements: g.elements().iter().map(|m| m.to_rows()).collect(),
        }
    }

    pub fn to_group(&self) -> Result<GroupAction> {
        if self.elements.len() != self.k {
            return Err(CliError::Config(format!(
                "group '{}' declares K = {} but lists {} elements",
                self.name,
                self.k,
                self.elements.len()
            )));
        }
        let mats = self
            .elements
            .iter()
            .map(|rows| {
                if rows.len() != self.d || rows.iter().any(|r| r.len() != self.d) {
                    return Err(CliError::Config(format!(
                        "group '{}': every element must be {}x{}",
                        self.name, self.d, self.d
                    )));
                }
                Ok(Mat::from_rows(rows)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupAction::new(self.name.clone(), self.d, mats)?)
    }
}

pub fn write_group_json(path: &Path, g: &GroupAction) -> Result<()> {
    let text = serde_json::to_string_pretty(&GroupRecord::from_group(g))
        .map_err(|e| CliError::Config(e.to_string()))?;
    write_file(path, text.as_bytes())
}

pub fn read_group_json(path: &Path) -> Result<GroupAction> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let rec: GroupRecord =
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    rec.to_group()
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// A table rendered as `#META` line, header row and data rows.
#[derive(Clone, Debug)]
pub struct Table {
    pub meta: Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(meta: Value, columns: &[&str]) -> Self {
        Table {
            meta,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = format!("#META {}\n{}\n", self.meta, self.columns.join(","));
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match c {
                    Cell::F(v) => out.push_str(&fmt_f64(*v)),
                    Cell::I(v) => {
                        let _ = write!(out, "{v}");
                    }
                    Cell::S(s) => out.push_str(s),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.render().as_bytes())
    }
}

/// Writes pretty JSON.
pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(path, format!("{text}\n").as_bytes())
}

/// Writes a text file, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

/// Splits a `#META` table file into its metadata and parsed rows.
pub fn read_table(path: &Path) -> Result<(Value, Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: &str| CliError::format(path, msg);
    let mut lines = text.lines();
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix("#META "))
        .ok_or_else(|| bad("missing #META line"))?;
    let meta: Value = serde_json::from_str(meta).map_err(|e| CliError::format(path, e.to_string()))?;
    let columns = lines
        .next()
        .ok_or_else(|| bad("missing header row"))?
        .split(',')
        .map(String::from)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    Ok((meta, columns, rows))
}
