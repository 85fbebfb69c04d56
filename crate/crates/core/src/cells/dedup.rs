//! Centroid deduplication: cell vectors within cosine 0.9999 of an earlier
//! survivor are folded into it. The survivor keeps its own vector, its
//! multiplicity grows, and the member list keeps every folded cell ref.

use std::collections::{BTreeMap, HashMap};

use super::{CellRef, CellVector};
use crate::embed::dot;

pub const DEDUP_COSINE: f64 = 0.9999;

/// Bound on |r·a − r·b| for unit r when cos(a, b) ≥ [`DEDUP_COSINE`]:
/// ‖a − b‖ = sqrt(2 − 2·cos) ≈ 0.01414, padded for f32 rounding.
const PROJECTION_SLACK: f64 = 0.015;

#[derive(Debug, Clone, PartialEq)]
pub struct Dedup {
    pub centroids: Vec<CellVector>,
    /// Cell refs folded into each centroid, survivor first.
    pub members: Vec<Vec<CellRef>>,
    /// For every input vector, the index of the centroid that represents it.
    pub assignment: Vec<usize>,
}

pub fn dedup_centroids(vectors: Vec<CellVector>) -> Dedup {
    let dim = vectors.first().map_or(0, |v| v.vector.dim());
    let r1 = probe_direction(dim, 1);
    let r2 = probe_direction(dim, 2);

    let mut exact: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut by_projection: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut projections: Vec<(f64, f64)> = Vec::new();
    let mut norms: Vec<f64> = Vec::new();
    let mut out = Dedup {
        centroids: Vec::new(),
        members: Vec::new(),
        assignment: Vec::with_capacity(vectors.len()),
    };

    for cv in vectors {
        let v = cv.vector.as_slice();
        let bits: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
        let found = exact.get(&bits).copied().or_else(|| {
            let p1 = dot(v, &r1);
            let p2 = dot(v, &r2);
            let norm = cv.vector.norm();
            let lo = order_key(p1 - PROJECTION_SLACK);
            let hi = order_key(p1 + PROJECTION_SLACK);
            by_projection
                .range(lo..=hi)
                .flat_map(|(_, ids)| ids.iter().copied())
                .filter(|&c| (projections[c].1 - p2).abs() <= PROJECTION_SLACK)
                .filter(|&c| {
                    let cos = dot(v, out.centroids[c].vector.as_slice()) / (norm * norms[c]);
                    cos >= DEDUP_COSINE
                })
                .min()
        });
        match found {
            Some(c) => {
                out.centroids[c].multiplicity += cv.multiplicity;
                out.members[c].push(cv.cell_ref);
                out.assignment.push(c);
            }
            None => {
                let c = out.centroids.len();
                let p1 = dot(v, &r1);
                let p2 = dot(v, &r2);
                exact.insert(bits, c);
                by_projection.entry(order_key(p1)).or_default().push(c);
                projections.push((p1, p2));
                norms.push(cv.vector.norm());
                out.members.push(vec![cv.cell_ref.clone()]);
                out.assignment.push(c);
                out.centroids.push(cv);
            }
        }
    }
    out
}

/// Maps f64 to u64 preserving order.
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Fixed pseudo-random unit direction.
fn probe_direction(dim: usize, salt: u64) -> Vec<f32> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(salt);
    let mut v: Vec<f32> = (0..dim)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f32 / (1u64 << 53) as f32 - 0.5
        })
        .collect();
    let n = crate::embed::l2_norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
    }
    v
}
