//! PFD binary and CSV readers/writers.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "PCMF" | version u32 = 1 | n_samples u32 | K u32 | L u32 | d_f u32
//! features f32[n_samples × (K+1) × d_f]   (slot K of each sample is g)
//! labels   u32[n_samples]
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3};

use super::PartFeatureDataset;
use crate::error::{Error, Result};

pub const PFD_MAGIC: &[u8; 4] = b"PCMF";
const PFD_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    BinaryPfd,
    Csv,
}

impl DatasetFormat {
    /// `.csv` files are CSV; everything else is treated as PFD.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::BinaryPfd,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<PartFeatureDataset> {
    load_dataset_with(path, format, None)
}

/// Like [`load_dataset`]; `n_classes` pins L for CSV input (otherwise it
/// is inferred as the largest label + 1). Binary files carry L themselves.
pub fn load_dataset_with(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    n_classes: Option<usize>,
) -> Result<PartFeatureDataset> {
    match format {
        DatasetFormat::BinaryPfd => decode_pfd(&fs::read(path)?),
        DatasetFormat::Csv => read_csv(path.as_ref(), n_classes),
    }
}

pub fn save_dataset(
    ds: &PartFeatureDataset,
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<()> {
    ds.validate()?;
    match format {
        DatasetFormat::BinaryPfd => {
            let mut f = fs::File::create(path)?;
            f.write_all(&encode_pfd(ds))?;
            Ok(())
        }
        DatasetFormat::Csv => write_csv(ds, path.as_ref()),
    }
}

pub(crate) fn encode_pfd(ds: &PartFeatureDataset) -> Vec<u8> {
    let (n, k, d) = (ds.n_samples(), ds.n_parts(), ds.feat_dim());
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n * (k + 1) * d + 4 * n);
    buf.extend_from_slice(PFD_MAGIC);
    for v in [PFD_VERSION, n as u32, k as u32, ds.n_classes() as u32, d as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..n {
        for v in ds.sample_parts(i).iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in ds.nonproto_row(i).iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for &y in ds.labels() {
        buf.extend_from_slice(&(y as u32).to_le_bytes());
    }
    buf
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub(crate) fn decode_pfd(bytes: &[u8]) -> Result<PartFeatureDataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != PFD_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"PCMF\"",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let version = read_u32(bytes, 4);
    if version != PFD_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = read_u32(bytes, 8) as usize;
    let k = read_u32(bytes, 12) as usize;
    let l = read_u32(bytes, 16) as usize;
    let d = read_u32(bytes, 20) as usize;
    let expected = (n as u128) * ((k as u128 + 1) * d as u128 + 1) * 4 + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        return Err(Error::Format(format!(
            "payload length mismatch: header implies {expected} bytes, file has {}",
            bytes.len()
        )));
    }

    let mut parts = Array3::<f32>::zeros((n, k, d));
    let mut nonproto = Array2::<f32>::zeros((n, d));
    let mut at = HEADER_LEN;
    let mut next_f32 = || {
        let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"));
        at += 4;
        v
    };
    for i in 0..n {
        for p in 0..k {
            for j in 0..d {
                parts[[i, p, j]] = next_f32();
            }
        }
        for j in 0..d {
            nonproto[[i, j]] = next_f32();
        }
    }
    let label_start = HEADER_LEN + 4 * n * (k + 1) * d;
    let labels = (0..n)
        .map(|i| read_u32(bytes, label_start + 4 * i) as usize)
        .collect();
    PartFeatureDataset::new(l, parts, nonproto, labels)
}

fn csv_header(k: usize, d: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity((k + 1) * d + 1);
    for p in 0..k {
        for j in 0..d {
            cols.push(format!("part{p}_{j}"));
        }
    }
    for j in 0..d {
        cols.push(format!("g_{j}"));
    }
    cols.push("label".to_string());
    cols
}

fn write_csv(ds: &PartFeatureDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(ds.n_parts(), ds.feat_dim()))?;
    for i in 0..ds.n_samples() {
        let mut row: Vec<String> = ds.sample_parts(i).iter().map(|v| v.to_string()).collect();
        row.extend(ds.nonproto_row(i).iter().map(|v| v.to_string()));
        row.push(ds.labels()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv(path: &Path, n_classes: Option<usize>) -> Result<PartFeatureDataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let d = header.iter().filter(|h| h.starts_with("g_")).count();
    if d == 0 || header.last().map(String::as_str) != Some("label") {
        return Err(Error::Format(
            "csv header must contain g_* columns and end with 'label'".into(),
        ));
    }
    let part_cols = header.len() - d - 1;
    if part_cols % d != 0 {
        return Err(Error::Format(format!(
            "{part_cols} part columns is not a multiple of d_f={d}"
        )));
    }
    let k = part_cols / d;
    if header != csv_header(k, d) {
        return Err(Error::Format(format!(
            "csv header does not match the expected layout for K={k}, d_f={d}"
        )));
    }

    let mut feats: Vec<f32> = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        if rec.len() != header.len() {
            return Err(Error::validation(
                format!("row {row}"),
                format!("{} fields, expected {}", rec.len(), header.len()),
            ));
        }
        for (col, field) in rec.iter().take(header.len() - 1).enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| {
                Error::Format(format!("row {row}, column {}: not a number", header[col]))
            })?;
            if !v.is_finite() {
                return Err(Error::validation(
                    "features",
                    format!("sample {} (row {row}) contains a non-finite value", row - 1),
                ));
            }
            feats.push(v);
        }
        let y: usize = rec[header.len() - 1]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("row {row}: label is not a class index")))?;
        if let Some(l) = n_classes {
            if y >= l {
                return Err(Error::validation(
                    format!("row {row}"),
                    format!("label {y} >= n_classes {l}"),
                ));
            }
        }
        labels.push(y);
    }
    let n = labels.len();
    let l = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let mut parts = Array3::<f32>::zeros((n, k, d));
    let mut nonproto = Array2::<f32>::zeros((n, d));
    let stride = (k + 1) * d;
    for i in 0..n {
        let row = &feats[i * stride..(i + 1) * stride];
        for p in 0..k {
            for j in 0..d {
                parts[[i, p, j]] = row[p * d + j];
            }
        }
        for j in 0..d {
            nonproto[[i, j]] = row[k * d + j];
        }
    }
    PartFeatureDataset::new(l, parts, nonproto, labels)
}
