//! The DUPR binary container shared with the embedding exporter.
//!
//! Layout (v1, little-endian):
//!
//! ```text
//! 0..4    magic "DUPR"
//! 4..8    u32 version (= 1)
//! 8       u8 kind: 0 prompt tensor, 1 image set, 2 unified reps
//! 9..13   u32 d
//! 13..17  u32 rows_a   (M for kind 0, N for kind 1, C for kind 2)
//! 17..21  u32 rows_b   (C for kind 0, 0 otherwise)
//! 21..25  u32 L, metadata length
//! 25..    L bytes of UTF-8 JSON {"domains", "classes", "template", "domain_tag"}
//!         kind 1 only: rows_a u32 labels
//!         f32 payload, row-major; kind 0 rows are domain-major (row j*C + i)
//! ```
//!
//! Prompt tensors and image sets are L2-normalized on load. Unified reps are
//! stored means and are returned untouched.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DUPR";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Prompts = 0,
    Images = 1,
    Reps = 2,
}

impl Kind {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Kind::Prompts),
            1 => Ok(Kind::Images),
            2 => Ok(Kind::Reps),
            other => Err(Error::UnknownKind(other)),
        }
    }
}

/// M x C grid of prompt embeddings, stored as an (M*C) x d matrix with
/// row `j * C + i` holding domain `j`, class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTensor {
    domain_names: Vec<String>,
    class_names: Vec<String>,
    template: String,
    data: Array2<f64>,
}

impl PromptTensor {
    pub fn new(
        domain_names: Vec<String>,
        class_names: Vec<String>,
        template: impl Into<String>,
        data: Array2<f64>,
    ) -> Result<Self> {
        let t = Self {
            domain_names,
            class_names,
            template: template.into(),
            data,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let (m, c, d) = (self.domains(), self.classes(), self.dim());
        if m < 1 || c < 2 || d < 2 {
            return Err(Error::Shape(format!(
                "prompt tensor needs M >= 1, C >= 2, d >= 2 (got M={m}, C={c}, d={d})"
            )));
        }
        if self.data.nrows() != m * c {
            return Err(Error::Shape(format!(
                "prompt tensor has {} rows, expected M*C = {}",
                self.data.nrows(),
                m * c
            )));
        }
        check_rows(&self.data)
    }

    pub fn domains(&self) -> usize {
        self.domain_names.len()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// All rows, domain-major.
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn layout(&self) -> Layout {
        Layout {
            domains: self.domains(),
            classes: self.classes(),
        }
    }

    pub fn row(&self, domain: usize, class: usize) -> ArrayView1<'_, f64> {
        self.data.row(self.layout().index(domain, class))
    }

    /// Scales rows to unit norm, as done on load.
    pub fn normalized(mut self) -> Self {
        normalize_stored_rows(&mut self.data);
        self
    }

    /// Replaces the embedding rows, keeping the metadata.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(
            self.domain_names.clone(),
            self.class_names.clone(),
            self.template.clone(),
            data,
        )
    }
}

/// Row arrangement of an M x C grid flattened domain-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub domains: usize,
    pub classes: usize,
}

impl Layout {
    #[inline]
    pub fn index(&self, domain: usize, class: usize) -> usize {
        domain * self.classes + class
    }

    pub fn rows(&self) -> usize {
        self.domains * self.classes
    }
}

/// N image embeddings with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    class_names: Vec<String>,
    labels: Vec<u32>,
    domain_tag: Option<String>,
    data: Array2<f64>,
}

impl ImageSet {
    pub fn new(
        class_names: Vec<String>,
        labels: Vec<u32>,
        domain_tag: Option<String>,
        data: Array2<f64>,
    ) -> Result<Self> {
        let s = Self {
            class_names,
            labels,
            domain_tag,
            data,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() || self.data.ncols() == 0 || self.data.nrows() == 0 {
            return Err(Error::Shape(format!(
                "image set needs N >= 1, C >= 1, d >= 1 (got N={}, C={}, d={})",
                self.data.nrows(),
                self.class_names.len(),
                self.data.ncols()
            )));
        }
        if self.labels.len() != self.data.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} image rows",
                self.labels.len(),
                self.data.nrows()
            )));
        }
        let classes = self.class_names.len();
        if let Some((index, &label)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= classes)
        {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
        check_rows(&self.data)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn domain_tag(&self) -> Option<&str> {
        self.domain_tag.as_deref()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Scales rows to unit norm, as done on load.
    pub fn normalized(mut self) -> Self {
        normalize_stored_rows(&mut self.data);
        self
    }
}

/// One representation per class. Rows are means and are not unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedReps {
    class_names: Vec<String>,
    data: Array2<f64>,
}

impl UnifiedReps {
    pub fn new(class_names: Vec<String>, data: Array2<f64>) -> Result<Self> {
        if class_names.is_empty() || data.ncols() == 0 {
            return Err(Error::Shape(format!(
                "unified reps need C >= 1, d >= 1 (got C={}, d={})",
                class_names.len(),
                data.ncols()
            )));
        }
        if data.nrows() != class_names.len() {
            return Err(Error::Shape(format!(
                "{} rows for {} classes",
                data.nrows(),
                class_names.len()
            )));
        }
        for (row, r) in data.outer_iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row });
            }
        }
        Ok(Self { class_names, data })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

fn check_rows(data: &Array2<f64>) -> Result<()> {
    for (row, r) in data.outer_iter().enumerate() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row });
        }
        if r.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroNorm { row });
        }
    }
    Ok(())
}

/// Like [`normalize_rows`], but rows already unit-norm to float32 precision
/// are kept as stored so a loaded file re-encodes to the same bytes.
fn normalize_stored_rows(data: &mut Array2<f64>) {
    for mut r in data.axis_iter_mut(Axis(0)) {
        let n = r.dot(&r).sqrt();
        if n > 0.0 && (n - 1.0).abs() > UNIT_TOLERANCE {
            r.mapv_inplace(|v| v / n);
        }
    }
}

const UNIT_TOLERANCE: f64 = 1e-6;

pub(crate) fn normalize_rows(data: &mut Array2<f64>) {
    for mut r in data.axis_iter_mut(Axis(0)) {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r.mapv_inplace(|v| v / n);
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Metadata {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    domains: Vec<String>,
    #[serde(default)]
    classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_tag: Option<String>,
}

struct Header {
    kind: Kind,
    d: usize,
    rows_a: usize,
    rows_b: usize,
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Shape(format!("{what} = {v} does not fit in u32")))
}

fn encode(
    header: &Header,
    meta: &Metadata,
    labels: Option<&[u32]>,
    data: &Array2<f64>,
) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(meta)?;
    let payload = data.len() * 4 + labels.map_or(0, |l| l.len() * 4);
    let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(header.kind as u8);
    out.extend_from_slice(&dim_u32(header.d, "d")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(header.rows_a, "rows_a")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(header.rows_b, "rows_b")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(meta.len(), "metadata length")?.to_le_bytes());
    out.extend_from_slice(&meta);
    if let Some(labels) = labels {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    for &v in data.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Bounds-checked little-endian reader over a byte slice.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available: self.buf.len() - self.pos,
            }),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32_block(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Shape(format!("payload {rows}x{cols} overflows")))?;
        let bytes = self.take(n)?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
    }

    fn finish(&self) -> Result<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(Error::TrailingBytes(extra)),
        }
    }
}

fn decode_header(cur: &mut Cursor<'_>) -> Result<(Header, Metadata)> {
    let magic = cur.take(4)?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = Kind::from_u8(cur.u8()?)?;
    let d = cur.u32()? as usize;
    let rows_a = cur.u32()? as usize;
    let rows_b = cur.u32()? as usize;
    let meta_len = cur.u32()? as usize;
    let meta: Metadata = serde_json::from_slice(cur.take(meta_len)?)?;
    Ok((
        Header {
            kind,
            d,
            rows_a,
            rows_b,
        },
        meta,
    ))
}

fn expect_kind(header: &Header, kind: Kind) -> Result<()> {
    if header.kind != kind {
        return Err(Error::KindMismatch {
            expected: kind as u8,
            found: header.kind as u8,
        });
    }
    Ok(())
}

fn check_count(what: &str, header: usize, meta: usize) -> Result<()> {
    if header != meta {
        return Err(Error::Shape(format!(
            "header declares {header} {what} but metadata lists {meta}"
        )));
    }
    Ok(())
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_prompts(t: &PromptTensor) -> Result<Vec<u8>> {
    t.validate()?;
    let header = Header {
        kind: Kind::Prompts,
        d: t.dim(),
        rows_a: t.domains(),
        rows_b: t.classes(),
    };
    let meta = Metadata {
        domains: t.domain_names.clone(),
        classes: t.class_names.clone(),
        template: Some(t.template.clone()),
        domain_tag: None,
    };
    encode(&header, &meta, None, &t.data)
}

pub fn decode_prompts(bytes: &[u8]) -> Result<PromptTensor> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let (header, meta) = decode_header(&mut cur)?;
    expect_kind(&header, Kind::Prompts)?;
    check_count("domains", header.rows_a, meta.domains.len())?;
    check_count("classes", header.rows_b, meta.classes.len())?;
    let rows = header
        .rows_a
        .checked_mul(header.rows_b)
        .ok_or_else(|| Error::Shape("M*C overflows".into()))?;
    let data = cur.f32_block(rows, header.d)?;
    cur.finish()?;
    let t = PromptTensor::new(
        meta.domains,
        meta.classes,
        meta.template.unwrap_or_default(),
        data,
    )?;
    Ok(t.normalized())
}

pub fn write_prompts(t: &PromptTensor, path: &Path) -> Result<()> {
    write_atomic(path, &encode_prompts(t)?)
}

pub fn read_prompts(path: &Path) -> Result<PromptTensor> {
    decode_prompts(&read_file(path)?)
}

pub fn encode_images(s: &ImageSet) -> Result<Vec<u8>> {
    s.validate()?;
    let header = Header {
        kind: Kind::Images,
        d: s.dim(),
        rows_a: s.len(),
        rows_b: 0,
    };
    let meta = Metadata {
        classes: s.class_names.clone(),
        domain_tag: s.domain_tag.clone(),
        ..Default::default()
    };
    encode(&header, &meta, Some(&s.labels), &s.data)
}

pub fn decode_images(bytes: &[u8]) -> Result<ImageSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let (header, meta) = decode_header(&mut cur)?;
    expect_kind(&header, Kind::Images)?;
    let label_bytes = cur.take(
        header
            .rows_a
            .checked_mul(4)
            .ok_or_else(|| Error::Shape("N overflows".into()))?,
    )?;
    let labels = label_bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let data = cur.f32_block(header.rows_a, header.d)?;
    cur.finish()?;
    let s = ImageSet::new(meta.classes, labels, meta.domain_tag, data)?;
    Ok(s.normalized())
}

pub fn write_images(s: &ImageSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_images(s)?)
}

pub fn read_images(path: &Path) -> Result<ImageSet> {
    decode_images(&read_file(path)?)
}

pub fn encode_reps(r: &UnifiedReps) -> Result<Vec<u8>> {
    let header = Header {
        kind: Kind::Reps,
        d: r.dim(),
        rows_a: r.classes(),
        rows_b: 0,
    };
    let meta = Metadata {
        classes: r.class_names.clone(),
        ..Default::default()
    };
    encode(&header, &meta, None, &r.data)
}

pub fn decode_reps(bytes: &[u8]) -> Result<UnifiedReps> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let (header, meta) = decode_header(&mut cur)?;
    expect_kind(&header, Kind::Reps)?;
    check_count("classes", header.rows_a, meta.classes.len())?;
    let data = cur.f32_block(header.rows_a, header.d)?;
    cur.finish()?;
    UnifiedReps::new(meta.classes, data)
}

pub fn write_reps(r: &UnifiedReps, path: &Path) -> Result<()> {
    write_atomic(path, &encode_reps(r)?)
}

pub fn read_reps(path: &Path) -> Result<UnifiedReps> {
    decode_reps(&read_file(path)?)
}
