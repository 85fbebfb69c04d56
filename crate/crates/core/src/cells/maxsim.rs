//! Late-interaction scoring with tables as the document unit.
//!
//! ```text
//! score(Q, T) = Σ_{q ∈ Q} max(0, max_{v ∈ T} q · v)
//! ```
//!
//! Negative similarities are clamped to zero, so the score of a table lies
//! in `[0, |Q|]` for unit vectors and adding cells to a table can only raise
//! it.

use crate::embed::{dot, Embedding};
use crate::error::{Error, Result};

/// Unchecked kernel over raw slices. Empty query or empty table scores 0.
pub fn maxsim(query: &[&[f32]], cells: &[&[f32]]) -> f64 {
    if cells.is_empty() {
        return 0.0;
    }
    query
        .iter()
        .map(|q| cells.iter().map(|c| dot(q, c).max(0.0)).fold(0.0, f64::max))
        .sum()
}

pub fn maxsim_score<'a, C>(query: &[Embedding], cells: C) -> Result<f64>
where
    C: IntoIterator<Item = &'a Embedding>,
{
    let cells: Vec<&[f32]> = cells.into_iter().map(Embedding::as_slice).collect();
    let dim = query.first().map(Embedding::dim);
    if let Some(dim) = dim {
        if let Some(bad) = cells.iter().find(|c| c.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if let Some(bad) = query.iter().find(|q| q.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
    }
    let q: Vec<&[f32]> = query.iter().map(Embedding::as_slice).collect();
    Ok(maxsim(&q, &cells))
}
