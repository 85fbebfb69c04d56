//! Binary-relevance ranking metrics.

use std::collections::{BTreeSet, HashSet};

use crate::error::{Error, Result};

/// nDCG@k with binary gains: `DCG = Σ_{i ≤ k, r_i ∈ gold} 1 / log2(i + 1)`
/// (1-based `i`), normalized by the ideal DCG of `min(|gold|, k)` hits.
/// Repeated ids in `ranking` only count at their first position.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut seen = HashSet::new();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .map(AsRef::as_ref)
        .enumerate()
        .filter(|&(_, r)| gold.contains(r) && seen.insert(r))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=gold.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// `|top-k ∩ gold| / |gold|`.
pub fn recall_at_k<S: AsRef<str>>(ranking: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let hits: HashSet<&str> = ranking
        .iter()
        .take(k)
        .map(AsRef::as_ref)
        .filter(|r| gold.contains(*r))
        .collect();
    Ok(hits.len() as f64 / gold.len() as f64)
}
