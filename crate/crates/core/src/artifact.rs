//! Reading and writing model artifacts: prototype centers, concept books and
//! heads, each as JSON or as a little-endian binary file.
//!
//! Binary layouts (all integers u32, all reals f64, little-endian):
//!
//! * centers `PCMC`: magic, version, K, d_f, hash, `K·d_f` reals
//! * book `PCMB`: magic, version, d_f, n, hash, then per entry
//!   class, part, local_id, member_count and `d_f` reals
//! * head `PCMH`: magic, version, d_c, d_f, L, hash, λ, γ, W1 `[d_c × L]`,
//!   W2 `[d_f × L]`, b `[L]`
//!
//! `hash` is a u32 byte length followed by that many UTF-8 bytes (0 when the
//! artifact carries no config hash). The JSON form is chosen for paths ending
//! in `.json`, the binary form otherwise.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::head::SparseHead;
use crate::mining::{ConceptBook, ConceptEntry};
use crate::partproto::PrototypeCenters;

pub const CENTERS_MAGIC: &[u8; 4] = b"PCMC";
pub const BOOK_MAGIC: &[u8; 4] = b"PCMB";
pub const HEAD_MAGIC: &[u8; 4] = b"PCMH";
pub const VERSION: u32 = 1;

pub fn is_json(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn count(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| Error::Format(format!("{v} does not fit a u32 field")))?;
        self.u32(v);
        Ok(())
    }

    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn hash(&mut self, h: &Option<String>) -> Result<()> {
        let bytes = h.as_deref().unwrap_or("").as_bytes();
        self.count(bytes.len())?;
        self.0.extend_from_slice(bytes);
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if buf.len() < 8 || &buf[..4] != magic {
            return Err(Error::Format(format!(
                "{what}: expected magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut r = Reader { buf, pos: 4, what };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("{what}: unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("{}: truncated file", self.what)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Format(format!("{}: size overflow", self.what))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn hash(&mut self) -> Result<Option<String>> {
        let n = self.usize()?;
        let bytes = self.take(n)?;
        if n == 0 {
            return Ok(None);
        }
        String::from_utf8(bytes.to_vec())
            .map(Some)
            .map_err(|_| Error::Format(format!("{}: config hash is not UTF-8", self.what)))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_centers(c: &PrototypeCenters) -> Result<Vec<u8>> {
    let mut w = Writer::new(CENTERS_MAGIC);
    w.count(c.n_parts())?;
    w.count(c.feat_dim())?;
    w.hash(&c.config_hash)?;
    w.f64s(c.centers.iter());
    Ok(w.0)
}

pub fn decode_centers(buf: &[u8]) -> Result<PrototypeCenters> {
    let mut r = Reader::new(buf, CENTERS_MAGIC, "centers")?;
    let (k, d) = (r.usize()?, r.usize()?);
    let hash = r.hash()?;
    let data = r.f64s(k * d)?;
    r.finish()?;
    let mut c = PrototypeCenters::new(matrix(k, d, data)?)?;
    c.config_hash = hash;
    Ok(c)
}

pub fn encode_book(book: &ConceptBook) -> Result<Vec<u8>> {
    let mut w = Writer::new(BOOK_MAGIC);
    w.count(book.feat_dim)?;
    w.count(book.entries.len())?;
    w.hash(&book.config_hash)?;
    for e in &book.entries {
        w.count(e.class)?;
        w.count(e.part)?;
        w.count(e.local_id)?;
        w.count(e.member_count)?;
        w.f64s(&e.centroid);
    }
    Ok(w.0)
}

pub fn decode_book(buf: &[u8]) -> Result<ConceptBook> {
    let mut r = Reader::new(buf, BOOK_MAGIC, "book")?;
    let (d, n) = (r.usize()?, r.usize()?);
    let hash = r.hash()?;
    let mut entries = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        entries.push(ConceptEntry {
            class: r.usize()?,
            part: r.usize()?,
            local_id: r.usize()?,
            member_count: r.usize()?,
            centroid: r.f64s(d)?,
        });
    }
    r.finish()?;
    let mut book = ConceptBook::new(d, entries)?;
    book.config_hash = hash;
    Ok(book)
}

pub fn encode_head(head: &SparseHead) -> Result<Vec<u8>> {
    head.validate()?;
    let mut w = Writer::new(HEAD_MAGIC);
    w.count(head.d_c())?;
    w.count(head.feat_dim())?;
    w.count(head.n_classes())?;
    w.hash(&head.config_hash)?;
    w.f64s([&head.lambda, &head.gamma]);
    w.f64s(head.w1.iter());
    w.f64s(head.w2.iter());
    w.f64s(head.b.iter());
    Ok(w.0)
}

pub fn decode_head(buf: &[u8]) -> Result<SparseHead> {
    let mut r = Reader::new(buf, HEAD_MAGIC, "head")?;
    let (dc, df, l) = (r.usize()?, r.usize()?, r.usize()?);
    let config_hash = r.hash()?;
    let lambda = r.f64()?;
    let gamma = r.f64()?;
    let w1 = matrix(dc, l, r.f64s(dc * l)?)?;
    let w2 = matrix(df, l, r.f64s(df * l)?)?;
    let b = Array1::from(r.f64s(l)?);
    r.finish()?;
    let head = SparseHead {
        w1,
        w2,
        b,
        lambda,
        gamma,
        config_hash,
    };
    head.validate()?;
    Ok(head)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Centers JSON is a bare array of rows; with a config hash it becomes
/// `{"centers": [...], "config_hash": "..."}`. Both forms load.
#[derive(Deserialize)]
#[serde(untagged)]
enum CentersJson {
    Bare(#[serde(with = "crate::linalg::rows")] Array2<f64>),
    Tagged(PrototypeCenters),
}

pub fn save_centers(c: &PrototypeCenters, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_json(path) {
        if c.config_hash.is_none() {
            let rows: Vec<Vec<f64>> = c.centers.outer_iter().map(|r| r.to_vec()).collect();
            write_json(&rows, path)
        } else {
            write_json(c, path)
        }
    } else {
        std::fs::write(path, encode_centers(c)?)?;
        Ok(())
    }
}

pub fn load_centers(path: impl AsRef<Path>) -> Result<PrototypeCenters> {
    let path = path.as_ref();
    if is_json(path) {
        match serde_json::from_slice::<CentersJson>(&std::fs::read(path)?)? {
            CentersJson::Bare(m) => PrototypeCenters::new(m),
            CentersJson::Tagged(c) => {
                let hash = c.config_hash;
                let mut out = PrototypeCenters::new(c.centers)?;
                out.config_hash = hash;
                Ok(out)
            }
        }
    } else {
        decode_centers(&std::fs::read(path)?)
    }
}

pub fn save_book(book: &ConceptBook, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_json(path) {
        write_json(book, path)
    } else {
        std::fs::write(path, encode_book(book)?)?;
        Ok(())
    }
}

pub fn load_book(path: impl AsRef<Path>) -> Result<ConceptBook> {
    let path = path.as_ref();
    if is_json(path) {
        let book: ConceptBook = serde_json::from_slice(&std::fs::read(path)?)?;
        book.validate()?;
        Ok(book)
    } else {
        decode_book(&std::fs::read(path)?)
    }
}

pub fn save_head(head: &SparseHead, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_json(path) {
        write_json(head, path)
    } else {
        std::fs::write(path, encode_head(head)?)?;
        Ok(())
    }
}

pub fn load_head(path: impl AsRef<Path>) -> Result<SparseHead> {
    let path = path.as_ref();
    if is_json(path) {
        let head: SparseHead = serde_json::from_slice(&std::fs::read(path)?)?;
        head.validate()?;
        Ok(head)
    } else {
        decode_head(&std::fs::read(path)?)
    }
}

pub fn save_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    write_json(gt, path.as_ref())
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_json(value, path.as_ref())
}
