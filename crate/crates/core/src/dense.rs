//! Narrative route: one vector per block, exact cosine top-k.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::embed::{Embedding, Encoder};
use crate::error::{Error, Result};
use crate::model::BlockRef;
use crate::router::{Route, RoutedBlock, RoutedContent};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseEntry {
    pub block_ref: BlockRef,
    key: String,
    pub vector: Embedding,
}

impl DenseEntry {
    pub fn key(&self) -> &str {
        &self.key
    }
}

/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    entries: Vec<DenseEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseHit {
    pub block_ref: BlockRef,
    pub score: f64,
}

impl DenseIndex {
    pub fn from_entries(dim: usize, entries: Vec<(BlockRef, Embedding)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        let mut out = Vec::with_capacity(entries.len());
        for (block_ref, vector) in entries {
            if vector.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: vector.dim(),
                });
            }
            let key = block_ref.to_string();
            if !seen.insert(key.clone()) {
                return Err(Error::DuplicateEntry(key));
            }
            out.push(DenseEntry {
                block_ref,
                key,
                vector,
            });
        }
        Ok(DenseIndex { dim, entries: out })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DenseEntry] {
        &self.entries
    }

    /// Top `k` entries by dot product, ties broken by rendered block ref.
    pub fn search(&self, q: &Embedding, k: usize) -> Result<Vec<DenseHit>> {
        if q.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        let mut scored: Vec<(f64, &DenseEntry)> =
            self.entries.iter().map(|e| (e.vector.dot(q), e)).collect();
        scored.sort_by(|a, b| by_score_then_key(a.0, &a.1.key, b.0, &b.1.key));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(score, e)| DenseHit {
                block_ref: e.block_ref.clone(),
                score,
            })
            .collect())
    }
}

pub(crate) fn by_score_then_key(sa: f64, ka: &str, sb: f64, kb: &str) -> Ordering {
    sb.total_cmp(&sa).then_with(|| ka.cmp(kb))
}

/// Embeds every narrative block in input order. Structured blocks are
/// ignored.
pub fn build_dense_index(blocks: &[RoutedBlock], encoder: &dyn Encoder) -> Result<DenseIndex> {
    let mut entries = Vec::new();
    for b in blocks {
        if b.route != Route::Narrative {
            continue;
        }
        let RoutedContent::Text(text) = &b.content else {
            continue;
        };
        entries.push((b.source.clone(), encoder.encode(text)?));
    }
    DenseIndex::from_entries(encoder.dim(), entries)
}
