//! CSV persistence for datasets, fingerprints, numeric matrices and factors.
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite f64 exactly.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Dataset;
use crate::lowrank::GramFactor;

pub const LABEL_COLUMN: &str = "label";
pub const PROPERTY_COLUMN: &str = "property";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => parse_err(path, line, 0, format!("{kind:?}")),
    }
}

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, col: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let line = rec.position().map(|p| p.line()).unwrap_or(0);
    let raw = rec.get(col).ok_or_else(|| parse_err(path, line, col + 1, "missing field"))?;
    raw.parse::<T>()
        .map_err(|e| parse_err(path, line, col + 1, format!("cannot parse `{raw}`: {e}")))
}

fn check_width(path: &Path, rec: &csv::StringRecord, width: usize) -> Result<()> {
    if rec.len() != width {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        return Err(parse_err(
            path,
            line,
            rec.len().min(width) + 1,
            format!("expected {width} fields, found {}", rec.len()),
        ));
    }
    Ok(())
}

/// Headered CSV: a `label` column (integers) and a `property` column (reals)
/// are picked out when present; every other column is a feature.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = reader(path, true)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_col = header.iter().position(|h| h == LABEL_COLUMN);
    let prop_col = header.iter().position(|h| h == PROPERTY_COLUMN);
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|c| Some(*c) != label_col && Some(*c) != prop_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(parse_err(path, 1, 1, "no feature columns"));
    }
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut props = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        check_width(path, &rec, header.len())?;
        for &c in &feature_cols {
            feats.push(field::<f64>(path, &rec, c)?);
        }
        if let Some(c) = label_col {
            labels.push(field::<i64>(path, &rec, c)?);
        }
        if let Some(c) = prop_col {
            props.push(field::<f64>(path, &rec, c)?);
        }
        rows += 1;
    }
    let x = Array2::from_shape_vec((rows, feature_cols.len()), feats).expect("row-major");
    Dataset::new(x, label_col.map(|_| labels), prop_col.map(|_| props))
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    if ds.labels().is_some() {
        header.push(LABEL_COLUMN.into());
    }
    if ds.properties().is_some() {
        header.push(PROPERTY_COLUMN.into());
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, row) in ds.features().rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        if let Some(l) = ds.labels() {
            rec.push(l[i].to_string());
        }
        if let Some(p) = ds.properties() {
            rec.push(fmt_f64(p[i]));
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header-less numeric CSV.
pub fn save_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut rdr = reader(path, false)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let w = *width.get_or_insert(rec.len());
        check_width(path, &rec, w)?;
        for c in 0..w {
            data.push(field::<f64>(path, &rec, c)?);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, width.unwrap_or(0)), data).expect("row-major"))
}

/// Headered CSV of 0/1 bit columns plus a `property` column.
pub fn load_fingerprints(path: impl AsRef<Path>) -> Result<(Array2<u8>, Vec<f64>)> {
    let path = path.as_ref();
    let mut rdr = reader(path, true)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let prop_col = header
        .iter()
        .position(|h| h == PROPERTY_COLUMN)
        .ok_or(Error::MissingProperties)?;
    let bit_cols: Vec<usize> = (0..header.len()).filter(|c| *c != prop_col).collect();
    let mut bits = Vec::new();
    let mut props = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        check_width(path, &rec, header.len())?;
        for &c in &bit_cols {
            let b: u8 = field(path, &rec, c)?;
            if b > 1 {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                return Err(parse_err(path, line, c + 1, format!("fingerprint bit must be 0 or 1, got {b}")));
            }
            bits.push(b);
        }
        props.push(field::<f64>(path, &rec, prop_col)?);
        rows += 1;
    }
    let fp = Array2::from_shape_vec((rows, bit_cols.len()), bits).expect("row-major");
    Ok((fp, props))
}

pub fn save_fingerprints(path: impl AsRef<Path>, fp: &Array2<u8>, props: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if props.len() != fp.nrows() {
        return Err(Error::shape("fingerprint properties", fp.nrows(), props.len()));
    }
    let mut w = writer(path)?;
    let mut header: Vec<String> = (0..fp.ncols()).map(|j| format!("b{j}")).collect();
    header.push(PROPERTY_COLUMN.into());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (row, p) in fp.rows().into_iter().zip(props) {
        let mut rec: Vec<String> = row.iter().map(|b| b.to_string()).collect();
        rec.push(fmt_f64(*p));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const FACTOR_PHI: &str = "phi.csv";
pub const FACTOR_WEIGHTS: &str = "weights.csv";
pub const FACTOR_HEADER: &str = "factor.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorHeader {
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    pub residual_trace: f64,
    pub clipped_mass: f64,
}

/// Factor as a directory holding `phi.csv` (n×m), `weights.csv` (one row sum
/// per line) and a `factor.json` header.
pub fn save_factor(dir: impl AsRef<Path>, f: &GramFactor) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_matrix(dir.join(FACTOR_PHI), f.phi())?;
    let w = f.weights().view().insert_axis(Axis(1)).to_owned();
    save_matrix(dir.join(FACTOR_WEIGHTS), &w)?;
    let header = FactorHeader {
        n: f.n(),
        m: f.rank(),
        eta: f.eta(),
        residual_trace: f.residual_trace(),
        clipped_mass: f.clipped_mass(),
    };
    write_json(dir.join(FACTOR_HEADER), &header)
}

pub fn load_factor(dir: impl AsRef<Path>) -> Result<GramFactor> {
    let dir = dir.as_ref();
    let header: FactorHeader = read_json(dir.join(FACTOR_HEADER))?;
    let phi_path = dir.join(FACTOR_PHI);
    let phi = if header.m == 0 {
        Array2::zeros((header.n, 0))
    } else {
        load_matrix(&phi_path)?
    };
    if phi.dim() != (header.n, header.m) {
        return Err(Error::shape(
            "factor phi",
            format!("{}x{}", header.n, header.m),
            format!("{}x{}", phi.nrows(), phi.ncols()),
        ));
    }
    let w = load_matrix(dir.join(FACTOR_WEIGHTS))?;
    if w.dim() != (header.n, 1) {
        return Err(Error::shape("factor weights", format!("{}x1", header.n), format!("{}x{}", w.nrows(), w.ncols())));
    }
    GramFactor::from_parts(phi, w.column(0).to_owned(), header.residual_trace, header.clipped_mass, header.eta)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })
}

/// Embeddings or generated samples, one row per point, with `name{j}` headers.
pub fn save_table(path: impl AsRef<Path>, prefix: &str, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut rdr = reader(path, true)?;
    let width = rdr.headers().map_err(|e| csv_error(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        check_width(path, &rec, width)?;
        for c in 0..width {
            data.push(field::<f64>(path, &rec, c)?);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, width), data).expect("row-major"))
}
