//! 4-bit product quantization.
//!
//! A vector of dim `d` is cut into `m` contiguous sub-vectors of `d / m`
//! dims; each is replaced by the index of its nearest centroid among 16
//! learned per subspace. Subspaces holding at most 16 distinct sub-vectors
//! use those points as centroids, making reconstruction exact.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Centroids per subspace (4-bit codes).
pub const PQ_K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PqConfig {
    pub m: usize,
    pub seed: u32,
    pub iters: usize,
}

impl Default for PqConfig {
    fn default() -> Self {
        PqConfig {
            m: 16,
            seed: 42,
            iters: 25,
        }
    }
}

const MAX_TRAINING_POINTS: usize = 1 << 16;
const REL_INERTIA_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    dim: usize,
    m: usize,
    seed: u32,
    /// `m × PQ_K × (dim / m)`, subspace-major.
    centroids: Vec<f32>,
}

impl PqCodebook {
    pub fn from_parts(dim: usize, m: usize, seed: u32, centroids: Vec<f32>) -> Result<Self> {
        check_shape(dim, m)?;
        if centroids.len() != dim * PQ_K {
            return Err(Error::Config(format!(
                "codebook holds {} floats, expected {}",
                centroids.len(),
                dim * PQ_K
            )));
        }
        Ok(PqCodebook {
            dim,
            m,
            seed,
            centroids,
        })
    }

    /// Trains one k-means quantizer per subspace (k-means++ seeding, at most
    /// `cfg.iters` Lloyd rounds or until inertia changes by less than 1e-4
    /// relative).
    pub fn train(vectors: &[&[f32]], cfg: &PqConfig) -> Result<Self> {
        let first = vectors.first().ok_or(Error::EmptyTrainingSet)?;
        let dim = first.len();
        check_shape(dim, cfg.m)?;
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let sub = dim / cfg.m;
        let per_subspace: Vec<Vec<f32>> = (0..cfg.m)
            .into_par_iter()
            .map(|s| {
                let points: Vec<&[f32]> = vectors.iter().map(|v| &v[s * sub..(s + 1) * sub]).collect();
                train_subspace(&points, sub, cfg, s)
            })
            .collect();
        Ok(PqCodebook {
            dim,
            m: cfg.m,
            seed: cfg.seed,
            centroids: per_subspace.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u32 {
        self.seed
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.m
    }

    pub fn raw_centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, subspace: usize, code: usize) -> &[f32] {
        let sub = self.sub_dim();
        let at = (subspace * PQ_K + code) * sub;
        &self.centroids[at..at + sub]
    }

    pub fn encode(&self, v: &[f32]) -> Result<Vec<u8>> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let sub = self.sub_dim();
        Ok((0..self.m)
            .map(|s| {
                let x = &v[s * sub..(s + 1) * sub];
                let cents: Vec<&[f32]> = (0..PQ_K).map(|c| self.centroid(s, c)).collect();
                nearest(x, &cents).0 as u8
            })
            .collect())
    }

    pub fn decode(&self, codes: &[u8]) -> Result<Vec<f32>> {
        if codes.len() != self.m {
            return Err(Error::DimMismatch {
                expected: self.m,
                got: codes.len(),
            });
        }
        let mut out = Vec::with_capacity(self.dim);
        for (s, &c) in codes.iter().enumerate() {
            if c as usize >= PQ_K {
                return Err(Error::Config(format!("code {c} out of range")));
            }
            out.extend_from_slice(self.centroid(s, c as usize));
        }
        Ok(out)
    }

    /// Per-subspace dot products of `q` with every centroid, `m × PQ_K`.
    /// Summing the entries selected by a code gives `q · decode(code)`.
    pub fn dot_table(&self, q: &[f32]) -> Vec<f64> {
        let sub = self.sub_dim();
        let mut table = Vec::with_capacity(self.m * PQ_K);
        for s in 0..self.m {
            let qs = &q[s * sub..(s + 1) * sub];
            for c in 0..PQ_K {
                table.push(crate::embed::dot(qs, self.centroid(s, c)));
            }
        }
        table
    }
}

fn check_shape(dim: usize, m: usize) -> Result<()> {
    if m == 0 || dim % m != 0 {
        return Err(Error::Config(format!(
            "PQ subspace count {m} must divide dim {dim}"
        )));
    }
    Ok(())
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Index of the nearest centroid (lowest index on ties) and its distance.
fn nearest(x: &[f32], centroids: &[&[f32]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn train_subspace(points: &[&[f32]], sub: usize, cfg: &PqConfig, subspace: usize) -> Vec<f32> {
    let mut distinct: Vec<&[f32]> = Vec::new();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    for p in points {
        if seen.insert(p.iter().map(|x| x.to_bits()).collect()) {
            distinct.push(p);
            if distinct.len() > PQ_K {
                break;
            }
        }
    }
    if distinct.len() <= PQ_K {
        let mut out = Vec::with_capacity(PQ_K * sub);
        for i in 0..PQ_K {
            out.extend_from_slice(distinct[i.min(distinct.len() - 1)]);
        }
        // unused slots repeat the last point; encode keeps the lowest index
        return out;
    }

    let sample: Vec<&[f32]> = if points.len() > MAX_TRAINING_POINTS {
        let step = points.len() as f64 / MAX_TRAINING_POINTS as f64;
        (0..MAX_TRAINING_POINTS)
            .map(|i| points[(i as f64 * step) as usize])
            .collect()
    } else {
        points.to_vec()
    };

    let seed = ((cfg.seed as u64) << 32) | subspace as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(&sample, &mut rng);
    let mut assign = vec![0usize; sample.len()];
    let mut prev_inertia = f64::INFINITY;

    for _ in 0..cfg.iters.max(1) {
        let refs: Vec<&[f32]> = centroids.iter().map(Vec::as_slice).collect();
        let mut inertia = 0.0;
        let mut dists = vec![0.0; sample.len()];
        for (i, p) in sample.iter().enumerate() {
            let (c, d) = nearest(p, &refs);
            assign[i] = c;
            dists[i] = d;
            inertia += d;
        }

        let mut sums = vec![vec![0.0f64; sub]; PQ_K];
        let mut counts = vec![0usize; PQ_K];
        for (p, &c) in sample.iter().zip(&assign) {
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x as f64;
            }
        }
        for c in 0..PQ_K {
            if counts[c] == 0 {
                // re-seed an empty cluster at the worst-served point
                let (far, _) = dists
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
                centroids[c] = sample[far].to_vec();
                dists[far] = 0.0;
            } else {
                centroids[c] = sums[c].iter().map(|s| (s / counts[c] as f64) as f32).collect();
            }
        }

        let converged = prev_inertia.is_finite()
            && (prev_inertia == 0.0 || (prev_inertia - inertia).abs() / prev_inertia < REL_INERTIA_TOL);
        prev_inertia = inertia;
        if converged {
            break;
        }
    }
    centroids.concat()
}

fn kmeans_pp_init(points: &[&[f32]], rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < PQ_K {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}
