//! Table route: cell-aware late interaction.
//!
//! Each table cell is serialized with its column header, pruned when empty
//! or stopword-only, embedded, deduplicated into centroids across the
//! corpus, and product-quantized. Tables are scored with MaxSim over the
//! centroids they reference.

pub mod dedup;
pub mod maxsim;
pub mod pq;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dedup::{dedup_centroids, Dedup, DEDUP_COSINE};
pub use maxsim::{maxsim, maxsim_score};
pub use pq::{PqCodebook, PqConfig, PQ_K};

use crate::dense::by_score_then_key;
use crate::embed::{Embedding, Encoder};
use crate::error::{Error, Result};
use crate::model::{extract_cells, Cell, Table};
use crate::router::{Route, RoutedBlock, RoutedContent};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub table_id: String,
    pub row: usize,
    pub col: usize,
}

impl From<&Cell> for CellRef {
    fn from(c: &Cell) -> Self {
        CellRef {
            table_id: c.table_id.clone(),
            row: c.row,
            col: c.col,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellVector {
    pub cell_ref: CellRef,
    pub vector: Embedding,
    pub multiplicity: usize,
}

/// `[COL: <header>] [VAL: <value>]`.
///
/// Panics on an empty value: empty cells must be pruned first.
pub fn serialize_cell(cell: &Cell) -> String {
    assert!(
        !cell.value.trim().is_empty(),
        "empty cell {}({}, {}) reached serialization",
        cell.table_id,
        cell.row,
        cell.col
    );
    format!("[COL: {}] [VAL: {}]", cell.header, cell.value)
}

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "-", "—", "n/a", "na", "none", "null", "a", "an", "and", "of", "the", "de", "del", "el", "la",
    "las", "los", "y", "en",
];

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

pub fn is_prunable(value: &str, stopwords: &HashSet<String>) -> bool {
    let mut tokens = value.split_whitespace().peekable();
    tokens.peek().is_none() || tokens.all(|t| stopwords.contains(&t.to_lowercase()))
}

/// Drops cells whose value is blank or made only of stopwords
/// (case-insensitive). `stopwords` must be lowercase.
pub fn prune_cells(cells: Vec<Cell>, stopwords: &HashSet<String>) -> Vec<Cell> {
    cells
        .into_iter()
        .filter(|c| !is_prunable(&c.value, stopwords))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    Exact,
    #[default]
    Pq,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Exact => "exact",
            SearchMode::Pq => "pq",
        }
    }
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SearchMode::Exact),
            "pq" => Ok(SearchMode::Pq),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub table_id: String,
    pub doc_id: String,
    /// Distinct centroid ids referenced by the table's surviving cells.
    pub centroids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CentroidMeta {
    pub multiplicity: usize,
    pub members: Vec<CellRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellIndexStats {
    pub tables: usize,
    pub cells_before_prune: usize,
    pub cells_after_prune: usize,
    pub centroids: usize,
}

impl CellIndexStats {
    /// Fraction of cells removed by pruning.
    pub fn prune_reduction(&self) -> f64 {
        if self.cells_before_prune == 0 {
            0.0
        } else {
            1.0 - self.cells_after_prune as f64 / self.cells_before_prune as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellIndexConfig {
    pub stopwords: HashSet<String>,
    pub pq: PqConfig,
    pub dedup: bool,
}

impl Default for CellIndexConfig {
    fn default() -> Self {
        CellIndexConfig {
            stopwords: default_stopwords(),
            pq: PqConfig::default(),
            dedup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableHit {
    pub table_id: String,
    pub doc_id: String,
    pub score: f64,
}

/// Immutable after build.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIndex {
    dim: usize,
    tables: Vec<TableEntry>,
    centroids: Vec<Embedding>,
    meta: Vec<CentroidMeta>,
    codebook: Option<PqCodebook>,
    /// `centroids.len() × m` codes, one per byte.
    codes: Vec<u8>,
    stats: CellIndexStats,
}

/// A table to index: id, owning document, contents.
#[derive(Debug, Clone, Copy)]
pub struct TableSource<'a> {
    pub table_id: &'a str,
    pub doc_id: &'a str,
    pub table: &'a Table,
}

impl CellIndex {
    /// Indexes every structured block in `blocks`.
    pub fn build_from_routed(
        blocks: &[RoutedBlock],
        encoder: &dyn Encoder,
        cfg: &CellIndexConfig,
    ) -> Result<Self> {
        let ids: Vec<String> = blocks.iter().map(|b| b.source.to_string()).collect();
        let sources: Vec<TableSource<'_>> = blocks
            .iter()
            .zip(&ids)
            .filter_map(|(b, id)| match (&b.content, b.route) {
                (RoutedContent::Table(t), Route::Structured) => Some(TableSource {
                    table_id: id,
                    doc_id: &b.source.doc_id,
                    table: t,
                }),
                _ => None,
            })
            .collect();
        Self::build(&sources, encoder, cfg)
    }

    pub fn build(tables: &[TableSource<'_>], encoder: &dyn Encoder, cfg: &CellIndexConfig) -> Result<Self> {
        let dim = encoder.dim();
        let mut seen_ids = HashSet::new();
        let mut stats = CellIndexStats {
            tables: tables.len(),
            ..Default::default()
        };
        let mut cache: HashMap<String, Embedding> = HashMap::new();
        let mut vectors = Vec::new();
        let mut owner = Vec::new();
        for (ti, src) in tables.iter().enumerate() {
            if !seen_ids.insert(src.table_id) {
                return Err(Error::DuplicateEntry(src.table_id.to_string()));
            }
            let cells = extract_cells(src.table, src.table_id);
            stats.cells_before_prune += cells.len();
            let kept = prune_cells(cells, &cfg.stopwords);
            stats.cells_after_prune += kept.len();
            for cell in &kept {
                let text = serialize_cell(cell);
                let vector = match cache.get(&text) {
                    Some(v) => v.clone(),
                    None => {
                        let v = encoder.encode(&text)?;
                        if v.dim() != dim {
                            return Err(Error::DimMismatch {
                                expected: dim,
                                got: v.dim(),
                            });
                        }
                        cache.insert(text, v.clone());
                        v
                    }
                };
                vectors.push(CellVector {
                    cell_ref: cell.into(),
                    vector,
                    multiplicity: 1,
                });
                owner.push(ti);
            }
        }

        let dd = if cfg.dedup {
            dedup_centroids(vectors)
        } else {
            let n = vectors.len();
            Dedup {
                members: vectors.iter().map(|v| vec![v.cell_ref.clone()]).collect(),
                centroids: vectors,
                assignment: (0..n).collect(),
            }
        };

        let mut per_table: Vec<Vec<u32>> = vec![Vec::new(); tables.len()];
        let mut seen: Vec<HashSet<u32>> = vec![HashSet::new(); tables.len()];
        for (&ti, &c) in owner.iter().zip(&dd.assignment) {
            if seen[ti].insert(c as u32) {
                per_table[ti].push(c as u32);
            }
        }
        let entries = tables
            .iter()
            .zip(per_table)
            .map(|(src, centroids)| TableEntry {
                table_id: src.table_id.to_string(),
                doc_id: src.doc_id.to_string(),
                centroids,
            })
            .collect();

        let meta = dd
            .centroids
            .iter()
            .zip(dd.members)
            .map(|(c, members)| CentroidMeta {
                multiplicity: c.multiplicity,
                members,
            })
            .collect();
        let centroids: Vec<Embedding> = dd.centroids.into_iter().map(|c| c.vector).collect();
        stats.centroids = centroids.len();

        let (codebook, codes) = if centroids.is_empty() {
            (None, Vec::new())
        } else {
            let refs: Vec<&[f32]> = centroids.iter().map(Embedding::as_slice).collect();
            let cb = PqCodebook::train(&refs, &cfg.pq)?;
            let mut codes = Vec::with_capacity(centroids.len() * cb.m());
            for v in &refs {
                codes.extend(cb.encode(v)?);
            }
            (Some(cb), codes)
        };

        Ok(CellIndex {
            dim,
            tables: entries,
            centroids,
            meta,
            codebook,
            codes,
            stats,
        })
    }

    /// Reassembles an index from stored parts, re-checking its invariants.
    pub fn from_parts(
        dim: usize,
        tables: Vec<TableEntry>,
        centroids: Vec<Embedding>,
        meta: Vec<CentroidMeta>,
        codebook: Option<PqCodebook>,
        codes: Vec<u8>,
        stats: CellIndexStats,
    ) -> Result<Self> {
        let bad = |r: String| Err(Error::Config(r));
        if meta.len() != centroids.len() {
            return bad(format!("{} centroid records for {} centroids", meta.len(), centroids.len()));
        }
        if let Some(v) = centroids.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        match &codebook {
            Some(cb) => {
                if cb.dim() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: cb.dim(),
                    });
                }
                if codes.len() != centroids.len() * cb.m() {
                    return bad(format!("{} codes for {} centroids", codes.len(), centroids.len()));
                }
                if codes.iter().any(|&c| c as usize >= PQ_K) {
                    return bad("code out of range".into());
                }
            }
            None if !centroids.is_empty() => return bad("centroids without a codebook".into()),
            None => {}
        }
        let mut ids = HashSet::new();
        for t in &tables {
            if !ids.insert(t.table_id.as_str()) {
                return Err(Error::DuplicateEntry(t.table_id.clone()));
            }
            if t.centroids.iter().any(|&c| c as usize >= centroids.len()) {
                return bad(format!("table {} references a missing centroid", t.table_id));
            }
        }
        let counted: usize = meta.iter().map(|m| m.multiplicity).sum();
        if stats.centroids != centroids.len()
            || stats.tables != tables.len()
            || stats.cells_after_prune != counted
            || stats.cells_after_prune > stats.cells_before_prune
        {
            return bad(format!("inconsistent stats {stats:?}"));
        }
        Ok(CellIndex {
            dim,
            tables,
            centroids,
            meta,
            codebook,
            codes,
            stats,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tables(&self) -> &[TableEntry] {
        &self.tables
    }

    pub fn centroids(&self) -> &[Embedding] {
        &self.centroids
    }

    pub fn centroid_meta(&self) -> &[CentroidMeta] {
        &self.meta
    }

    pub fn codebook(&self) -> Option<&PqCodebook> {
        self.codebook.as_ref()
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn stats(&self) -> &CellIndexStats {
        &self.stats
    }

    pub fn table(&self, table_id: &str) -> Option<&TableEntry> {
        self.tables.iter().find(|t| t.table_id == table_id)
    }

    pub fn table_ids(&self) -> BTreeSet<&str> {
        self.tables.iter().map(|t| t.table_id.as_str()).collect()
    }

    /// PQ reconstruction of centroid `i`.
    pub fn decoded(&self, i: usize) -> Option<Vec<f32>> {
        let cb = self.codebook.as_ref()?;
        let m = cb.m();
        cb.decode(&self.codes[i * m..(i + 1) * m]).ok()
    }

    /// Clamped similarity of every query vector to every centroid,
    /// `query.len() × centroids.len()`.
    fn centroid_sims(&self, query: &[Embedding], mode: SearchMode) -> Vec<Vec<f64>> {
        match (mode, &self.codebook) {
            (SearchMode::Pq, Some(cb)) => {
                let m = cb.m();
                query
                    .iter()
                    .map(|q| {
                        let table = cb.dot_table(q.as_slice());
                        self.codes
                            .par_chunks_exact(m)
                            .map(|code| {
                                let s: f64 = code
                                    .iter()
                                    .enumerate()
                                    .map(|(s, &c)| table[s * PQ_K + c as usize])
                                    .sum();
                                s.max(0.0)
                            })
                            .collect()
                    })
                    .collect()
            }
            _ => {
                // centroid-major so each stored vector is read once
                let by_centroid: Vec<Vec<f64>> = self
                    .centroids
                    .par_iter()
                    .map(|c| query.iter().map(|q| c.dot(q).max(0.0)).collect())
                    .collect();
                (0..query.len())
                    .map(|qi| by_centroid.iter().map(|row| row[qi]).collect())
                    .collect()
            }
        }
    }

    /// MaxSim score of every table, in index order.
    pub fn score_all(&self, query: &[Embedding], mode: SearchMode) -> Result<Vec<f64>> {
        if let Some(q) = query.iter().find(|q| q.dim() != self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        let sims = self.centroid_sims(query, mode);
        Ok(self
            .tables
            .iter()
            .map(|t| {
                if t.centroids.is_empty() {
                    return 0.0;
                }
                sims.iter()
                    .map(|row| t.centroids.iter().map(|&c| row[c as usize]).fold(0.0, f64::max))
                    .sum()
            })
            .collect())
    }

    /// Top `k` tables, descending score, ties by table id.
    pub fn search_tables(&self, query: &[Embedding], k: usize, mode: SearchMode) -> Result<Vec<TableHit>> {
        let scores = self.score_all(query, mode)?;
        let mut order: Vec<usize> = (0..self.tables.len()).collect();
        order.sort_by(|&a, &b| {
            by_score_then_key(scores[a], &self.tables[a].table_id, scores[b], &self.tables[b].table_id)
        });
        order.truncate(k);
        Ok(order
            .into_iter()
            .map(|i| TableHit {
                table_id: self.tables[i].table_id.clone(),
                doc_id: self.tables[i].doc_id.clone(),
                score: scores[i],
            })
            .collect())
    }

    /// Bytes of the compressed vector payload: codebook plus packed codes.
    pub fn pq_payload_bytes(&self) -> usize {
        match &self.codebook {
            Some(cb) => cb.raw_centroids().len() * 4 + self.centroids.len() * cb.m().div_ceil(2),
            None => 0,
        }
    }
}
