//! Pretrained word vectors aligned with a [`Vocabulary`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Vocabulary, PAD};
use crate::nn::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot read embeddings {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("embeddings {0} contain no usable vectors")]
    NoUsableLines(String),
    #[error("embeddings {path} have dimension {found}, expected {expected}")]
    DimMismatch {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding dimension must be positive")]
    ZeroDim,
}

/// `|V| × D` lookup table; row `i` belongs to vocabulary index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    matrix: Tensor<T>,
}

/// Counters reported by [`load_embeddings`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines_read: usize,
    pub vectors_loaded: usize,
    pub skipped_wrong_arity: usize,
    pub vocab_hits: usize,
    pub vocab_misses: usize,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn from_matrix(matrix: Tensor<T>) -> Self {
        EmbeddingTable { matrix }
    }

    /// Seeded random vectors, uniform in `(-scale, scale)`, with a zero PAD row.
    /// Used when no pretrained file is supplied.
    pub fn random(vocab_size: usize, dim: usize, scale: f64, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut matrix = Tensor::from_fn(&[vocab_size, dim], |_| T::of(rng.gen_range(-scale..scale)));
        if vocab_size > PAD {
            matrix.row_mut(PAD).iter_mut().for_each(|x| *x = T::zero());
        }
        EmbeddingTable { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn row(&self, id: usize) -> &[T] {
        self.matrix.row(id)
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.matrix
    }
}

fn open(path: &Path) -> std::io::Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

fn parse_vector(fields: &[&str]) -> Option<Vec<f64>> {
    fields
        .iter()
        .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Reads `word v1 … vD` lines (plain or `.gz`) and aligns them to `vocab`.
///
/// Vocabulary words found in the file get their vector; the remaining words
/// and UNK get the element-wise mean of every loaded vector; PAD is zero.
/// The first vector line fixes the file arity, which must equal `dim`; later
/// lines of a different arity are skipped and counted. A leading
/// `count dim` header line is ignored. When a word occurs twice the first
/// vector wins.
pub fn load_embeddings<T: Scalar>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<(EmbeddingTable<T>, LoadStats), EmbedError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    if dim == 0 {
        return Err(EmbedError::ZeroDim);
    }
    let io = |source| EmbedError::Io {
        path: shown.clone(),
        source,
    };
    let reader = open(path).map_err(io)?;
    let mut stats = LoadStats::default();
    let mut found: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut sum = vec![0.0f64; dim];
    let mut arity: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        stats.lines_read += 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            continue;
        }
        let n = fields.len() - 1;
        match arity {
            None if n == dim => arity = Some(n),
            None if n > 0 && parse_vector(&fields[1..]).is_some() => {
                return Err(EmbedError::DimMismatch {
                    path: shown,
                    expected: dim,
                    found: n,
                })
            }
            Some(a) if a == n => {}
            _ => {
                stats.skipped_wrong_arity += 1;
                continue;
            }
        }
        let Some(vector) = parse_vector(&fields[1..]) else {
            stats.skipped_wrong_arity += 1;
            continue;
        };
        stats.vectors_loaded += 1;
        for (s, v) in sum.iter_mut().zip(&vector) {
            *s += v;
        }
        if let Some(id) = vocab.get(fields[0]) {
            found.entry(id).or_insert(vector);
        }
    }
    if stats.vectors_loaded == 0 {
        return Err(EmbedError::NoUsableLines(shown));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / stats.vectors_loaded as f64).collect();
    let mut matrix = Tensor::<T>::zeros(&[vocab.len(), dim]);
    for id in 0..vocab.len() {
        if id == PAD {
            continue;
        }
        let src = match found.get(&id) {
            Some(v) => {
                stats.vocab_hits += 1;
                v
            }
            None => {
                if id > 1 {
                    stats.vocab_misses += 1;
                }
                &mean
            }
        };
        for (dst, &v) in matrix.row_mut(id).iter_mut().zip(src) {
            *dst = T::of(v);
        }
    }
    Ok((EmbeddingTable { matrix }, stats))
}
