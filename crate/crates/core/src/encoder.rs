//! Context coding: triad text to a pooled feature vector.
//!
//! Two encoders are provided. [`HashEncoder`] gives every token a seeded
//! pseudo-random vector and needs no model files. [`FileEncoder`] serves
//! vectors computed elsewhere (e.g. by a pretrained transformer) from a TSV
//! feature file.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ReasoningSample, Triad};
use crate::{Error, Result};

pub const DEFAULT_DIM: usize = 64;

/// Per-token embeddings of one triad, `T x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("embedding matrix", "needs at least one row"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(EmbeddingMatrix(values))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Pooled representation `z_j` of one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Array1<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(FeatureVector(Array1::from(values)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }
}

/// The feature vectors of one sample, in hypothesis order.
pub type FeatureSequence = Vec<FeatureVector>;

/// Column-wise sum over the token axis.
pub fn pool(matrix: &EmbeddingMatrix) -> FeatureVector {
    FeatureVector(matrix.0.sum_axis(Axis(0)))
}

pub trait Encoder: Send + Sync {
    /// Width `d` of every row this encoder produces.
    fn dim(&self) -> usize;

    fn encode(&self, triad: &Triad) -> Result<EmbeddingMatrix>;

    fn feature(&self, triad: &Triad) -> Result<FeatureVector> {
        self.encode(triad).map(|m| pool(&m))
    }

    fn encode_sample(&self, sample: &ReasoningSample) -> Result<FeatureSequence> {
        sample.triads().iter().map(|t| self.feature(t)).collect()
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Hashing encoder: every token maps to a fixed vector drawn uniformly from
/// `[-1/sqrt(d), 1/sqrt(d)]` by a generator keyed on `(seed, token bytes)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEncoder {
    seed: u64,
    dim: usize,
}

impl HashEncoder {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        Ok(HashEncoder { seed, dim })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn token_vector(&self, token: &str) -> Array1<f64> {
        let token = token.to_lowercase();
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, token.as_bytes()));
        let bound = 1.0 / (self.dim as f64).sqrt();
        (0..self.dim).map(|_| rng.random_range(-bound..=bound)).collect()
    }
}

/// Shorthand for [`HashEncoder::new`].
pub fn toy_encoder(vocab_seed: u64, dim: usize) -> Result<HashEncoder> {
    HashEncoder::new(vocab_seed, dim)
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, triad: &Triad) -> Result<EmbeddingMatrix> {
        let tokens = tokenize(&triad.text);
        let mut m = Array2::zeros((tokens.len(), self.dim));
        for (mut row, tok) in m.rows_mut().into_iter().zip(&tokens) {
            row.assign(&self.token_vector(tok));
        }
        EmbeddingMatrix::new(m)
    }
}

/// Serves stored feature vectors keyed by `(sample_id, hypothesis_index)`.
#[derive(Debug, Clone, Default)]
pub struct FileEncoder {
    dim: usize,
    vectors: HashMap<(String, usize), FeatureVector>,
}

impl FileEncoder {
    pub fn new(dim: usize) -> Self {
        FileEncoder {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, sample_id: &str, hypothesis_index: usize, vector: FeatureVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::Shape {
                what: "feature width",
                expected: self.dim,
                got: vector.dim(),
            });
        }
        let key = (sample_id.to_owned(), hypothesis_index);
        if self.vectors.contains_key(&key) {
            return Err(Error::invalid(
                "feature key",
                format!("duplicate ({sample_id}, {hypothesis_index})"),
            ));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, sample_id: &str, hypothesis_index: usize) -> Option<&FeatureVector> {
        self.vectors.get(&(sample_id.to_owned(), hypothesis_index))
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<(&str, usize, &FeatureVector)> {
        let mut out: Vec<_> = self.vectors.iter().map(|((id, j), v)| (id.as_str(), *j, v)).collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    /// Captures another encoder's features for every hypothesis of `samples`.
    pub fn capture(encoder: &dyn Encoder, samples: &[ReasoningSample]) -> Result<Self> {
        let mut out = FileEncoder::new(encoder.dim());
        for sample in samples {
            for triad in sample.triads() {
                out.insert(&sample.sample_id, triad.hypothesis_index, encoder.feature(&triad)?)?;
            }
        }
        Ok(out)
    }

    pub fn to_tsv(&self) -> Result<String> {
        let mut out = format!("#dim={}\n", self.dim);
        for (id, j, v) in self.entries() {
            if id.contains(['\t', '\n', '\r']) {
                return Err(Error::invalid("sample_id", format!("{id:?} contains a tab or newline")));
            }
            write!(out, "{id}\t{j}").unwrap();
            for x in v.0.iter() {
                write!(out, "\t{x:?}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_tsv(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing #dim header".into()))?;
        let dim: usize = header
            .strip_prefix("#dim=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| err(1, format!("bad header {header:?}")))?;
        let mut enc = FileEncoder::new(dim);
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or_default();
            let j: usize = cols
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| err(i + 1, "bad hypothesis index".into()))?;
            let values = cols
                .map(|c| c.parse::<f64>().map_err(|e| err(i + 1, format!("{c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != dim {
                return Err(err(
                    i + 1,
                    format!("dimension mismatch: expected {dim} values, got {}", values.len()),
                ));
            }
            let v = FeatureVector::new(values).map_err(|e| err(i + 1, e.to_string()))?;
            enc.insert(id, j, v).map_err(|e| err(i + 1, e.to_string()))?;
        }
        Ok(enc)
    }
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<FileEncoder> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FileEncoder::parse_tsv(path, &text)
}

pub fn write_feature_file(path: impl AsRef<Path>, encoder: &FileEncoder) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encoder.to_tsv()?).map_err(|e| Error::io(path, e))
}

impl Encoder for FileEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    /// A single row holding the stored vector, so pooling returns it unchanged.
    fn encode(&self, triad: &Triad) -> Result<EmbeddingMatrix> {
        let v = self
            .get(&triad.sample_id, triad.hypothesis_index)
            .ok_or_else(|| Error::MissingEmbedding {
                sample_id: triad.sample_id.clone(),
                hypothesis_index: triad.hypothesis_index,
            })?;
        EmbeddingMatrix::new(v.0.clone().insert_axis(Axis(0)))
    }
}
