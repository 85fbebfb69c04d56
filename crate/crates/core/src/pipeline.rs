//! End-to-end dual-route index and query path, plus the linearize-everything
//! baseline it is measured against.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Mutex;
use std::str::FromStr;

use crate::cells::{prune_cells, serialize_cell, CellIndex, CellIndexConfig, SearchMode};
use crate::dense::{build_dense_index, DenseIndex};
use crate::embed::{embed_query_tokens, Embedding, Encoder};
use crate::error::{Error, Result};
use crate::fusion::{fuse_candidates, lexical_tokens, rerank, Candidate, CrossScorer, RouteTag, QUERY_STOPWORDS};
use crate::model::{extract_cells, Block, BlockRef, Document};
use crate::router::{segment, Route, RoutedBlock, RoutedContent, RouterConfig};

/// Which retrieval paths a query goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteSelect {
    /// Both paths; the query itself is not routed.
    #[default]
    Auto,
    Text,
    Table,
    Both,
}

impl RouteSelect {
    fn uses_text(self) -> bool {
        !matches!(self, RouteSelect::Table)
    }

    fn uses_tables(self) -> bool {
        !matches!(self, RouteSelect::Text)
    }
}

impl FromStr for RouteSelect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(RouteSelect::Auto),
            "text" => Ok(RouteSelect::Text),
            "table" => Ok(RouteSelect::Table),
            "both" => Ok(RouteSelect::Both),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub route: RouteSelect,
    pub mode: SearchMode,
    /// Candidates taken from the dense route.
    pub k_text: usize,
    /// Candidates taken from the table route.
    pub k_table: usize,
    pub final_k: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            route: RouteSelect::Auto,
            mode: SearchMode::Pq,
            k_text: 20,
            k_table: 20,
            final_k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub router: RouterConfig,
    pub cells: CellIndexConfig,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            router: RouterConfig::default(),
            cells: CellIndexConfig::default(),
        }
    }
}

/// The dual index over a corpus. Candidate texts for reranking are kept in
/// memory and rebuilt from the corpus on load.
#[derive(Debug, Clone, PartialEq)]
pub struct TopoIndex {
    config: IndexConfig,
    docs: Vec<Document>,
    dense: DenseIndex,
    cells: CellIndex,
    texts: HashMap<String, String>,
}

impl TopoIndex {
    pub fn build(docs: Vec<Document>, encoder: &dyn Encoder, config: IndexConfig) -> Result<Self> {
        config.router.validate()?;
        let routed = route_corpus(&docs, &config.router);
        let dense = build_dense_index(&routed, encoder)?;
        let cells = CellIndex::build_from_routed(&routed, encoder, &config.cells)?;
        let texts = candidate_texts(&routed, &config.cells);
        log::info!(
            "indexed {} docs: {} narrative blocks, {} tables, {} centroids",
            docs.len(),
            dense.len(),
            cells.tables().len(),
            cells.centroids().len()
        );
        Ok(TopoIndex {
            config,
            docs,
            dense,
            cells,
            texts,
        })
    }

    /// Reassembles an index from stored parts. The corpus is re-routed and the
    /// stored indexes must cover exactly the blocks routing produces.
    pub fn from_parts(docs: Vec<Document>, dense: DenseIndex, cells: CellIndex, config: IndexConfig) -> Result<Self> {
        config.router.validate()?;
        let routed = route_corpus(&docs, &config.router);
        let narrative: Vec<String> = routed
            .iter()
            .filter(|b| b.route == Route::Narrative)
            .map(|b| b.source.to_string())
            .collect();
        let stored: Vec<String> = dense.entries().iter().map(|e| e.block_ref.to_string()).collect();
        if narrative != stored {
            return Err(Error::Config(
                "dense index blocks do not match the routed corpus".into(),
            ));
        }
        let tables: Vec<String> = routed
            .iter()
            .filter(|b| b.route == Route::Structured)
            .map(|b| b.source.to_string())
            .collect();
        let stored: Vec<String> = cells.tables().iter().map(|t| t.table_id.clone()).collect();
        if tables != stored {
            return Err(Error::Config("cell index tables do not match the routed corpus".into()));
        }
        if dense.dim() != cells.dim() {
            return Err(Error::DimMismatch {
                expected: dense.dim(),
                got: cells.dim(),
            });
        }
        let texts = candidate_texts(&routed, &config.cells);
        Ok(TopoIndex {
            config,
            docs,
            dense,
            cells,
            texts,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    pub fn cells(&self) -> &CellIndex {
        &self.cells
    }

    pub fn dim(&self) -> usize {
        self.dense.dim()
    }

    /// Text a cross-scorer sees for a candidate reference.
    pub fn candidate_text(&self, reference: &str) -> Option<&str> {
        self.texts.get(reference).map(String::as_str)
    }

    /// Per-route candidates, normalized and fused, before reranking.
    pub fn fused(&self, query: &str, encoder: &dyn Encoder, opts: &SearchOptions) -> Result<Vec<Candidate>> {
        let text = |r: &str| self.texts.get(r).cloned().unwrap_or_default();
        let mut dense = Vec::new();
        if opts.route.uses_text() && !self.dense.is_empty() {
            let q = encoder.encode(query)?;
            for hit in self.dense.search(&q, opts.k_text)? {
                let r = hit.block_ref.to_string();
                let t = text(&r);
                dense.push(Candidate::new(r, hit.block_ref.doc_id, RouteTag::A, hit.score, t));
            }
        }
        let mut tables = Vec::new();
        if opts.route.uses_tables() && !self.cells.tables().is_empty() {
            let q = table_query_vectors(query, encoder)?;
            for hit in self.cells.search_tables(&q, opts.k_table, opts.mode)? {
                let t = text(&hit.table_id);
                tables.push(Candidate::new(hit.table_id, hit.doc_id, RouteTag::B, hit.score, t));
            }
        }
        Ok(fuse_candidates(dense, tables))
    }

    /// Fused candidates reranked by `scorer`, best `final_k` kept.
    pub fn search(
        &self,
        qid: &str,
        query: &str,
        encoder: &dyn Encoder,
        scorer: &dyn CrossScorer,
        opts: &SearchOptions,
    ) -> Result<Vec<Candidate>> {
        let fused = self.fused(query, encoder, opts)?;
        Ok(rerank(qid, query, fused, scorer, opts.final_k))
    }
}

/// Token vectors for the table route. Function words carry no cell
/// content, so tokens whose normalized form is a query stopword are
/// dropped, as stopword-only cells are dropped from the index.
pub fn table_query_vectors(query: &str, encoder: &dyn Encoder) -> Result<Vec<Embedding>> {
    Ok(embed_query_tokens(query, encoder)?
        .into_iter()
        .filter(|(tok, _)| {
            let norm: Vec<String> = lexical_tokens(tok).collect();
            norm.is_empty() || !norm.iter().all(|t| QUERY_STOPWORDS.contains(&t.as_str()))
        })
        .map(|(_, e)| e)
        .collect())
}

/// Encoder that hands out a fixed vector and remembers what it was asked.
struct Recorder {
    dim: usize,
    seen: Mutex<BTreeSet<String>>,
}

impl Recorder {
    fn new(dim: usize) -> Self {
        Recorder {
            dim,
            seen: Mutex::new(BTreeSet::new()),
        }
    }

    fn into_texts(self) -> BTreeSet<String> {
        self.seen.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl Encoder for Recorder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        self.seen
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(text.to_string());
        Ok(Embedding::basis(self.dim, 0))
    }
}

/// Every text [`TopoIndex::build`] encodes for `docs`, sorted. An external
/// embedding file must cover all of them.
pub fn index_texts(docs: &[Document], config: &IndexConfig) -> Result<BTreeSet<String>> {
    config.router.validate()?;
    let routed = route_corpus(docs, &config.router);
    let rec = Recorder::new(config.cells.pq.m);
    build_dense_index(&routed, &rec)?;
    CellIndex::build_from_routed(&routed, &rec, &config.cells)?;
    Ok(rec.into_texts())
}

/// Texts a query is encoded from: the whole query and each of its tokens.
pub fn query_texts(query: &str) -> Result<BTreeSet<String>> {
    let rec = Recorder::new(1);
    rec.encode(query)?;
    embed_query_tokens(query, &rec)?;
    Ok(rec.into_texts())
}

fn route_corpus(docs: &[Document], cfg: &RouterConfig) -> Vec<RoutedBlock> {
    docs.iter().flat_map(|d| segment(d, cfg)).collect()
}

/// Narrative spans keep their text; tables become their serialized,
/// non-pruned cells, one row per line.
fn candidate_texts(routed: &[RoutedBlock], cfg: &CellIndexConfig) -> HashMap<String, String> {
    routed
        .iter()
        .map(|b| {
            let r = b.source.to_string();
            let text = match &b.content {
                RoutedContent::Text(t) => t.clone(),
                RoutedContent::Table(t) => {
                    let cells = prune_cells(extract_cells(t, &r), &cfg.stopwords);
                    let mut lines: Vec<String> = Vec::new();
                    let mut row = usize::MAX;
                    for c in &cells {
                        if c.row != row {
                            lines.push(String::new());
                            row = c.row;
                        } else {
                            lines.last_mut().expect("row started").push(' ');
                        }
                        lines.last_mut().expect("row started").push_str(&serialize_cell(c));
                    }
                    lines.join("\n")
                }
            };
            (r, text)
        })
        .collect()
}

/// Document ids in first-appearance order.
pub fn doc_ranking(candidates: &[Candidate]) -> Vec<String> {
    let mut seen = HashSet::new();
    candidates
        .iter()
        .filter(|c| seen.insert(c.doc_id.as_str()))
        .map(|c| c.doc_id.clone())
        .collect()
}

/// Whole document as one string: title, text blocks verbatim, tables as
/// Markdown.
pub fn linearize(doc: &Document) -> String {
    let mut parts = vec![doc.title.clone()];
    for b in &doc.blocks {
        parts.push(match b {
            Block::Text { content } => content.clone(),
            Block::Table(t) => t.to_markdown(),
        });
    }
    parts.join("\n\n")
}

/// One vector per linearized document, no routing.
#[derive(Debug, Clone)]
pub struct NaiveIndex {
    dense: DenseIndex,
}

impl NaiveIndex {
    pub fn build(docs: &[Document], encoder: &dyn Encoder) -> Result<Self> {
        let entries = docs
            .iter()
            .map(|d| Ok((BlockRef::whole(&d.id, 0), encoder.encode(&linearize(d))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(NaiveIndex {
            dense: DenseIndex::from_entries(encoder.dim(), entries)?,
        })
    }

    /// Ranked document ids.
    pub fn search(&self, query: &str, encoder: &dyn Encoder, k: usize) -> Result<Vec<String>> {
        let q = encoder.encode(query)?;
        Ok(self
            .dense
            .search(&q, k)?
            .into_iter()
            .map(|h| h.block_ref.doc_id)
            .collect())
    }
}
