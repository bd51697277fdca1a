//! Word vector tables and the vector series derived from token series.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TokenSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSource {
    Pretrained(PathBuf),
    Random { seed: u64 },
}

/// Word to dense vector map. Vectors are stored contiguously as `f32`.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    source: EmbeddingSource,
    duplicates_skipped: usize,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn source(&self) -> &EmbeddingSource {
        &self.source
    }

    /// Number of repeated words ignored while loading (the first entry wins).
    pub fn duplicates_skipped(&self) -> usize {
        self.duplicates_skipped
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    fn empty(dim: usize, source: EmbeddingSource) -> Self {
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
            source,
            duplicates_skipped: 0,
        }
    }

    fn push(&mut self, word: &str, vector: impl IntoIterator<Item = f32>) -> bool {
        if self.index.contains_key(word) {
            self.duplicates_skipped += 1;
            return false;
        }
        let row = self.index.len();
        self.data.extend(vector);
        debug_assert_eq!(self.data.len(), (row + 1) * self.dim);
        self.index.insert(word.to_string(), row);
        true
    }

    /// Reads a GloVe-style text table, keeping only the words accepted by `keep`.
    ///
    /// Every line is still validated, so a malformed line is reported even if its
    /// word would have been skipped.
    pub fn read_text<R: BufRead>(
        reader: R,
        source: EmbeddingSource,
        keep: impl Fn(&str) -> bool,
    ) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| match e.kind() {
                std::io::ErrorKind::InvalidData => Error::Format {
                    line: line_no,
                    message: "line is not valid UTF-8".to_string(),
                },
                _ => Error::Io(e),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line has a field");
            let rest: Vec<&str> = fields.collect();

            if line_no == 1 && rest.len() == 1 && is_uint(word) && is_uint(rest[0]) {
                // word2vec-style "count dim" header
                continue;
            }
            if rest.is_empty() {
                return Err(Error::Format {
                    line: line_no,
                    message: "line has no vector components".to_string(),
                });
            }
            let table = table.get_or_insert_with(|| EmbeddingTable::empty(rest.len(), source.clone()));
            if rest.len() != table.dim {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("expected {} components, found {}", table.dim, rest.len()),
                });
            }
            if !keep(word) {
                continue;
            }
            let mut vector = Vec::with_capacity(rest.len());
            for field in rest {
                let v: f32 = field.parse().map_err(|_| Error::Format {
                    line: line_no,
                    message: format!("component {field:?} is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Format {
                        line: line_no,
                        message: format!("component {field:?} is not finite"),
                    });
                }
                vector.push(v);
            }
            table.push(word, vector);
        }
        let table = table.unwrap_or_else(|| EmbeddingTable::empty(0, source));
        if table.duplicates_skipped > 0 {
            log::warn!("{} duplicate words ignored in embedding table", table.duplicates_skipped);
        }
        Ok(table)
    }
}

fn is_uint(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Loads a pretrained table in GloVe text format.
pub fn load_pretrained(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    load_pretrained_filtered(path, |_| true)
}

/// Loads only the rows whose word passes `keep`; useful for large tables.
pub fn load_pretrained_filtered(
    path: impl AsRef<Path>,
    keep: impl Fn(&str) -> bool,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::from_io_at(e, path))?;
    EmbeddingTable::read_text(
        BufReader::with_capacity(1 << 20, file),
        EmbeddingSource::Pretrained(path.to_path_buf()),
        keep,
    )
}

fn word_rng(word: &str, seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(word.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Random bag-of-words table: i.i.d. Normal(0, 1/sqrt(d)) components.
///
/// Each vector depends only on `(word, seed)`, never on the other words.
pub fn random_table<'a>(
    vocab: impl IntoIterator<Item = &'a str>,
    d: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if d < 1 {
        return Err(Error::Param("embedding dimension must be at least 1".to_string()));
    }
    let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std dev");
    let mut table = EmbeddingTable::empty(d, EmbeddingSource::Random { seed });
    for word in vocab {
        if table.contains(word) {
            continue;
        }
        let mut rng = word_rng(word, seed);
        table.push(word, (0..d).map(|_| normal.sample(&mut rng) as f32));
    }
    Ok(table)
}

/// What to do with tokens missing from the table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    #[default]
    Drop,
    Zero,
}

impl std::str::FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(OovPolicy::Drop),
            "zero" => Ok(OovPolicy::Zero),
            other => Err(Error::Param(format!("unknown oov policy {other:?}"))),
        }
    }
}

/// A sequence of d-dimensional vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSeries {
    data: Vec<f64>,
    dim: usize,
    centered: bool,
    window: usize,
    source_id: String,
}

impl VectorSeries {
    pub fn from_flat(data: Vec<f64>, dim: usize, source_id: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Param("vector dimension must be at least 1".to_string()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Param(format!(
                "flat buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("vector series contains non-finite values".to_string()));
        }
        Ok(VectorSeries {
            data,
            dim,
            centered: false,
            window: 1,
            source_id: source_id.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source_id: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Param("rows have differing lengths".to_string()));
        }
        Self::from_flat(rows.concat(), dim, source_id)
    }

    /// Scalar series (d = 1).
    pub fn from_scalars(values: &[f64], source_id: impl Into<String>) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1, source_id)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    /// Marks the series as centered without touching the values.
    ///
    /// For random bag-of-words vectors, whose mean is zero in expectation, this
    /// replicates the uncentered procedure.
    pub fn assume_centered(mut self) -> Self {
        self.centered = true;
        self
    }

    /// Component-wise mean over the whole series.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Root mean square vector norm.
    pub fn rms(&self) -> f64 {
        let n = self.len().max(1) as f64;
        (self.data.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        VectorSeries {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// The same vectors in reverse time order.
    pub fn reversed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.rchunks_exact(self.dim) {
            data.extend_from_slice(row);
        }
        VectorSeries { data, ..self.clone() }
    }

    fn subtract_mean(&mut self) {
        // Second pass removes the rounding residue of the first.
        for _ in 0..2 {
            let mean = self.mean();
            for row in self.data.chunks_exact_mut(self.dim) {
                for (v, m) in row.iter_mut().zip(&mean) {
                    *v -= m;
                }
            }
        }
    }
}

/// Maps tokens to their table vectors.
pub fn embed(ts: &TokenSeries, table: &EmbeddingTable, oov: OovPolicy) -> Result<VectorSeries> {
    if table.is_empty() {
        return Err(Error::Param("embedding table is empty".to_string()));
    }
    let dim = table.dim();
    let mut data = Vec::with_capacity(ts.len() * dim);
    for token in ts.tokens() {
        match (table.get(token), oov) {
            (Some(v), _) => data.extend(v.iter().map(|&x| x as f64)),
            (None, OovPolicy::Zero) => data.extend(std::iter::repeat_n(0.0, dim)),
            (None, OovPolicy::Drop) => {}
        }
    }
    if data.is_empty() {
        return Err(Error::EmptySeries);
    }
    VectorSeries::from_flat(data, dim, ts.source_id())
}

/// Subtracts the whole-series mean vector.
pub fn center(vs: &VectorSeries) -> Result<VectorSeries> {
    if vs.is_empty() {
        return Err(Error::Param("cannot center an empty series".to_string()));
    }
    let mut out = vs.clone();
    out.subtract_mean();
    out.centered = true;
    Ok(out)
}

/// Averages `a` consecutive vectors, keeping only full windows.
///
/// The output has `len - a + 1` rows. A centered input stays centered: the
/// small mean offset left by the dropped edge windows is subtracted again.
pub fn window_average(vs: &VectorSeries, a: usize) -> Result<VectorSeries> {
    let n = vs.len();
    if a < 1 || a > n {
        return Err(Error::Param(format!("window {a} must lie in [1, {n}]")));
    }
    let d = vs.dim;
    let mut out = VectorSeries {
        data: Vec::with_capacity((n - a + 1) * d),
        window: a,
        ..vs.clone()
    };
    if a == 1 {
        out.data.clone_from(&vs.data);
        return Ok(out);
    }
    let inv = 1.0 / a as f64;
    let mut sum = vec![0.0; d];
    for t in 0..=(n - a) {
        // Fresh sum once per window length keeps running-sum drift bounded.
        if t % a == 0 {
            sum.iter_mut().for_each(|s| *s = 0.0);
            for s in t..t + a {
                for (acc, v) in sum.iter_mut().zip(vs.row(s)) {
                    *acc += v;
                }
            }
        } else {
            let (leaving, entering) = (vs.row(t - 1), vs.row(t + a - 1));
            for k in 0..d {
                sum[k] += entering[k] - leaving[k];
            }
        }
        out.data.extend(sum.iter().map(|s| s * inv));
    }
    if vs.centered {
        out.subtract_mean();
    }
    Ok(out)
}
