//! Embedding matrices, their on-disk format and the per-class reference store.
//!
//! The binary layout is little-endian:
//!
//! ```text
//! offset  size     field
//! 0       4        magic "EMB1"
//! 4       4        u32 version (= 1)
//! 8       8        u64 n (rows)
//! 16      8        u64 d (columns)
//! 24      4·n·d    f32 row-major data
//! ```
//!
//! Each embedding file is paired with a JSON manifest: an array of
//! `{"id": string, "class": string | null}` objects, one per row, optionally
//! carrying an informational `"augmentation"` tag.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

/// Tolerance on row norms for a matrix flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at offset 0: expected \"EMB1\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} at offset 4 (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("truncated file: header needs {expected} bytes but only {found} present (offset {offset})")]
    Truncated { offset: u64, expected: u64, found: u64 },
    #[error("{extra} trailing bytes after offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("empty matrix: n = {n}, d = {d}")]
    Empty { n: u64, d: u64 },
    #[error("header declares n = {header} rows but manifest has {manifest} entries")]
    CountMismatch { header: usize, manifest: usize },
    #[error("data length {len} is not n·d = {n}·{d}")]
    DataLength { n: usize, d: usize, len: usize },
    #[error("non-finite value {value} at row {row} (id {id:?}), column {col}, byte offset {offset}")]
    NonFinite { row: usize, col: usize, offset: u64, id: String, value: f32 },
    #[error("duplicate id {id:?} at rows {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("row {row} (id {id:?}) has zero norm")]
    ZeroNorm { row: usize, id: String },
    #[error("row {row} (id {id:?}) has norm {norm}, but matrix is flagged normalized")]
    NotUnitNorm { row: usize, id: String, norm: f64 },
    #[error("dimension mismatch: expected d = {expected}, found d = {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("reference row {row} (id {id:?}) has no class label")]
    MissingClass { row: usize, id: String },
    #[error("unknown class {class:?}; available: {}", available.join(", "))]
    UnknownClass { class: String, available: Vec<String> },
    #[error("row index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("reference count must be positive")]
    ZeroCount,
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<String>,
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>, class: Option<String>) -> Self {
        ManifestEntry { id: id.into(), class, augmentation: None }
    }
}

/// Lowercases a class label and collapses internal whitespace runs.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// An `n × d` matrix of row embeddings with per-row metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    meta: Vec<ManifestEntry>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Builds and validates a matrix. The result is flagged as not
    /// normalized, whatever the row norms happen to be.
    pub fn new(d: usize, data: Vec<f32>, meta: Vec<ManifestEntry>) -> Result<Self, StoreError> {
        let n = meta.len();
        if n == 0 || d == 0 {
            return Err(StoreError::Empty { n: n as u64, d: d as u64 });
        }
        if data.len() != n * d {
            return Err(StoreError::DataLength { n, d, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            let (row, col) = (pos / d, pos % d);
            return Err(StoreError::NonFinite {
                row,
                col,
                offset: (HEADER_LEN + 4 * pos) as u64,
                id: meta[row].id.clone(),
                value: data[pos],
            });
        }
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(n);
        for (row, entry) in meta.iter().enumerate() {
            if let Some(first) = seen.insert(entry.id.as_str(), row) {
                return Err(StoreError::DuplicateId { id: entry.id.clone(), first, second: row });
            }
        }
        Ok(EmbeddingMatrix { n, d, data, meta, normalized: false })
    }

    /// Convenience constructor from nested rows with generated ids `"0"`, `"1"`, ...
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, StoreError> {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(StoreError::DimensionMismatch { expected: d, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        let meta = (0..rows.len()).map(|i| ManifestEntry::new(i.to_string(), None)).collect();
        Self::new(d, data, meta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn id(&self, i: usize) -> &str {
        &self.meta[i].id
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.meta.iter().map(|m| m.id.as_str())
    }

    pub fn class(&self, i: usize) -> Option<&str> {
        self.meta[i].class.as_deref()
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.meta
    }

    /// Divides every row by its Euclidean norm. Idempotent: a matrix already
    /// flagged as normalized is returned unchanged.
    pub fn normalize_rows(mut self) -> Result<Self, StoreError> {
        if self.normalized {
            return Ok(self);
        }
        let d = self.d;
        for (row, chunk) in self.data.chunks_exact_mut(d).enumerate() {
            let norm = chunk.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(StoreError::ZeroNorm { row, id: self.meta[row].id.clone() });
            }
            for x in chunk.iter_mut() {
                *x = (*x as f64 / norm) as f32;
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Flags the matrix as normalized after checking every row norm.
    pub fn assume_normalized(mut self) -> Result<Self, StoreError> {
        for (row, chunk) in self.rows().enumerate() {
            let norm = chunk.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(StoreError::NotUnitNorm { row, id: self.meta[row].id.clone(), norm });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Copies the given rows, in order, into a new matrix. The normalized
    /// flag carries over.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, StoreError> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        let mut meta = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n {
                return Err(StoreError::IndexOutOfRange { index: i, n: self.n });
            }
            data.extend_from_slice(self.row(i));
            meta.push(self.meta[i].clone());
        }
        let mut m = Self::new(self.d, data, meta)?;
        m.normalized = self.normalized;
        Ok(m)
    }

    /// Stacks `other` below `self`. The result is normalized only if both are.
    pub fn vstack(&self, other: &Self) -> Result<Self, StoreError> {
        if other.d != self.d {
            return Err(StoreError::DimensionMismatch { expected: self.d, found: other.d });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut meta = self.meta.clone();
        meta.extend(other.meta.iter().cloned());
        let mut m = Self::new(self.d, data, meta)?;
        m.normalized = self.normalized && other.normalized;
        Ok(m)
    }

    /// Encodes the matrix in the binary format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Decodes the binary format against an already-parsed manifest.
    pub fn from_bytes(bytes: &[u8], meta: Vec<ManifestEntry>) -> Result<Self, StoreError> {
        let (n, d, payload) = parse_header(bytes)?;
        if meta.len() != n {
            return Err(StoreError::CountMismatch { header: n, manifest: meta.len() });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(d, data, meta)
    }
}

fn parse_header(bytes: &[u8]) -> Result<(usize, usize, &[u8]), StoreError> {
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::Truncated {
            offset: bytes.len() as u64,
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(StoreError::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion { found: version });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let d = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if n == 0 || d == 0 {
        return Err(StoreError::Empty { n, d });
    }
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .and_then(|x| x.checked_add(HEADER_LEN as u64))
        .unwrap_or(u64::MAX);
    let found = bytes.len() as u64;
    if found < expected {
        return Err(StoreError::Truncated { offset: found, expected, found });
    }
    if found > expected {
        return Err(StoreError::TrailingBytes { offset: expected, extra: found - expected });
    }
    Ok((n as usize, d as usize, &bytes[HEADER_LEN..]))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Manifest { path: path.to_path_buf(), source })
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(entries)
        .map_err(|source| StoreError::Manifest { path: path.to_path_buf(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Reads an embedding file and its manifest. Rows are left as stored.
pub fn load_embeddings(path: &Path, manifest_path: &Path) -> Result<EmbeddingMatrix, StoreError> {
    let meta = read_manifest(manifest_path)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    EmbeddingMatrix::from_bytes(&bytes, meta)
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path, manifest_path: &Path) -> Result<(), StoreError> {
    fs::write(path, m.to_bytes()).map_err(io_err(path))?;
    write_manifest(manifest_path, m.manifest())
}

/// Default manifest location for an embedding file: same path, `.json` extension.
pub fn manifest_path_for(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Reference embeddings grouped by class label.
#[derive(Debug, Clone)]
pub struct ReferenceStore {
    matrix: EmbeddingMatrix,
    by_class: BTreeMap<String, Vec<usize>>,
}

impl ReferenceStore {
    /// Groups rows by their (normalized) class label. Every row must carry a class.
    pub fn new(matrix: EmbeddingMatrix) -> Result<Self, StoreError> {
        let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for row in 0..matrix.n() {
            let class = matrix
                .class(row)
                .ok_or_else(|| StoreError::MissingClass { row, id: matrix.id(row).to_string() })?;
            by_class.entry(normalize_label(class)).or_default().push(row);
        }
        Ok(ReferenceStore { matrix, by_class })
    }

    pub fn load(path: &Path, manifest_path: &Path) -> Result<Self, StoreError> {
        Self::new(load_embeddings(path, manifest_path)?)
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> + '_ {
        self.by_class.keys().map(String::as_str)
    }

    pub fn contains(&self, class: &str) -> bool {
        self.by_class.contains_key(&normalize_label(class))
    }

    pub fn count(&self, class: &str) -> usize {
        self.by_class.get(&normalize_label(class)).map_or(0, Vec::len)
    }

    /// First `min(count, available)` reference rows of `class`, in stored order.
    pub fn lookup_references(&self, class: &str, count: usize) -> Result<&[usize], StoreError> {
        if count == 0 {
            return Err(StoreError::ZeroCount);
        }
        let key = normalize_label(class);
        let rows = self.by_class.get(&key).ok_or_else(|| StoreError::UnknownClass {
            class: key.clone(),
            available: self.by_class.keys().cloned().collect(),
        })?;
        Ok(&rows[..count.min(rows.len())])
    }
}
