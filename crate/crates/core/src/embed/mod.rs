//! Text encoders.
//!
//! The built-in [`HashEncoder`] is a signed feature-hashing featurizer over
//! lowercased word unigrams and character n-grams. [`LookupEncoder`] serves
//! vectors produced elsewhere and loaded from a TOPOEMB1 file.

pub mod file;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::router::is_separator;

/// A unit-norm dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Normalizes `values` to unit length. An all-zero input maps to `e_0`.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Embedding::basis(values.len().max(1), 0);
        }
        for v in &mut values {
            *v = (*v as f64 / norm) as f32;
        }
        Embedding(values)
    }

    /// Wraps values already known to be unit norm (e.g. read back from an
    /// index written by this crate).
    pub fn from_unit(values: Vec<f32>) -> Self {
        Embedding(values)
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Embedding(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

/// Dot product accumulated in f64 over eight fixed lanes.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x as f64 * y as f64).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] as f64 * y[i] as f64;
        }
    }
    acc.iter().sum::<f64>() + tail
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Embedding>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub char_ngram: usize,
    pub hash_seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            dim: 256,
            char_ngram: 3,
            hash_seed: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::Config(format!("embedding dim {} < 8", self.dim)));
        }
        if self.char_ngram == 0 {
            return Err(Error::Config("char n-gram length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HashEncoder {
    cfg: EmbedderConfig,
}

impl HashEncoder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(HashEncoder { cfg })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    pub fn embed(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f32; self.cfg.dim];
        let mut buf = String::new();
        for word in words(text) {
            self.add_feature(&mut acc, b'w', &word);
            buf.clear();
            buf.push('#');
            buf.push_str(&word);
            buf.push('#');
            let chars: Vec<(usize, char)> = buf.char_indices().collect();
            let n = self.cfg.char_ngram;
            if chars.len() <= n {
                self.add_feature(&mut acc, b't', &buf);
            } else {
                for i in 0..=chars.len() - n {
                    let start = chars[i].0;
                    let end = chars.get(i + n).map_or(buf.len(), |c| c.0);
                    self.add_feature(&mut acc, b't', &buf[start..end]);
                }
            }
        }
        Embedding::normalized(acc)
    }

    fn add_feature(&self, acc: &mut [f32], kind: u8, feature: &str) {
        let h = feature_hash(self.cfg.hash_seed, kind, feature.as_bytes());
        let bucket = (h % acc.len() as u64) as usize;
        if h >> 63 == 0 {
            acc[bucket] += 1.0;
        } else {
            acc[bucket] -= 1.0;
        }
    }
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        Ok(self.embed(text))
    }
}

/// Convenience wrapper: embeds `text` with a fresh featurizer.
pub fn embed_text(text: &str, cfg: &EmbedderConfig) -> Result<Embedding> {
    Ok(HashEncoder::new(*cfg)?.embed(text))
}

/// One vector per whitespace token of `query`, separator tokens dropped.
pub fn embed_query_tokens(query: &str, encoder: &dyn Encoder) -> Result<Vec<(String, Embedding)>> {
    query
        .split_whitespace()
        .filter(|t| !is_separator(t))
        .map(|t| Ok((t.to_string(), encoder.encode(t)?)))
        .collect()
}

/// FNV-1a over `seed || kind || bytes`, finished with a splitmix64 mix so the
/// top bit (the sign) is well distributed.
fn feature_hash(seed: u64, kind: u8, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in seed.to_le_bytes().iter().chain([kind].iter()).chain(bytes) {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Lowercased words: maximal alphanumeric runs, where a `.` or `,` between
/// two digits stays inside the word ("0.85", "1,250").
pub fn words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins_digits = matches!(c, '.' | ',')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(char::is_ascii_digit);
        if c.is_alphanumeric() || joins_digits {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Encoder backed by precomputed vectors keyed by the exact text they encode.
#[derive(Debug, Clone)]
pub struct LookupEncoder {
    dim: usize,
    vectors: BTreeMap<String, Embedding>,
}

impl LookupEncoder {
    pub fn new(dim: usize, vectors: BTreeMap<String, Embedding>) -> Result<Self> {
        if let Some(bad) = vectors.values().find(|v| v.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(LookupEncoder { dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl Encoder for LookupEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding(text.to_string()))
    }
}
