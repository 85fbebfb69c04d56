//! Evaluation: corpus and query generation, ranking metrics, the dilution
//! experiment, and a harness that scores retrieval systems per query type.

pub mod dilution;
pub mod gen;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::Encoder;
use crate::error::{Error, Result};
use crate::fusion::CrossScorer;
use crate::model::{Query, QueryType};
use crate::pipeline::{doc_ranking, NaiveIndex, RouteSelect, SearchOptions, TopoIndex};

pub use metrics::{ndcg_at_k, recall_at_k};

pub const NDCG_K: usize = 10;
pub const RECALL_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum System {
    /// Every document linearized into one vector.
    Naive,
    /// Dense route only.
    TopoText,
    /// Cell route only.
    TopoTable,
    /// Both routes fused, no reranking.
    TopoFused,
    /// Both routes fused and reranked.
    Topo,
}

impl System {
    pub const ALL: [System; 5] = [
        System::Naive,
        System::TopoText,
        System::TopoTable,
        System::TopoFused,
        System::Topo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            System::Naive => "naive",
            System::TopoText => "topo-text",
            System::TopoTable => "topo-table",
            System::TopoFused => "topo-fused",
            System::Topo => "topo",
        }
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|sys| sys.as_str() == s)
            .ok_or_else(|| Error::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub n_queries: usize,
    pub ndcg_at_10: f64,
    pub recall_at_20: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    /// Keyed by query type ("A", "B", "C").
    pub per_type: BTreeMap<String, TypeMetrics>,
    pub overall: TypeMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n_queries: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub systems: Vec<SystemReport>,
    /// On-disk size per index file, when the index was loaded from disk.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub index_bytes: BTreeMap<String, u64>,
    /// Wall-clock figures vary run to run, so they are only filled on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
}

impl EvalReport {
    pub fn system(&self, name: &str) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.system == name)
    }

    /// One line per system and query type, plus an `all` line per system.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("system,type,n_queries,ndcg_at_10,recall_at_20\n");
        for sys in &self.systems {
            let rows = sys.per_type.iter().map(|(t, m)| (t.as_str(), m)).chain([("all", &sys.overall)]);
            for (t, m) in rows {
                writeln!(
                    s,
                    "{},{},{},{:.6},{:.6}",
                    sys.system, t, m.n_queries, m.ndcg_at_10, m.recall_at_20
                )
                .expect("string write");
            }
        }
        s
    }
}

/// Everything a system needs to answer queries.
pub struct EvalContext<'a> {
    pub index: &'a TopoIndex,
    pub encoder: &'a dyn Encoder,
    pub scorer: &'a dyn CrossScorer,
    pub options: SearchOptions,
}

impl EvalContext<'_> {
    /// Ranked document ids for one query.
    pub fn rank(&self, system: System, naive: Option<&NaiveIndex>, q: &Query) -> Result<Vec<String>> {
        let opts = |route| SearchOptions { route, ..self.options };
        let cands = match system {
            System::Naive => {
                let naive = naive.ok_or_else(|| Error::Config("naive index not built".into()))?;
                return naive.search(&q.text, self.encoder, self.options.final_k);
            }
            System::TopoText => self.index.fused(&q.text, self.encoder, &opts(RouteSelect::Text))?,
            System::TopoTable => self.index.fused(&q.text, self.encoder, &opts(RouteSelect::Table))?,
            System::TopoFused => self.index.fused(&q.text, self.encoder, &opts(RouteSelect::Auto))?,
            System::Topo => {
                self.index
                    .search(&q.qid, &q.text, self.encoder, self.scorer, &opts(RouteSelect::Auto))?
            }
        };
        let mut ranking = doc_ranking(&cands);
        ranking.truncate(self.options.final_k);
        Ok(ranking)
    }
}

/// Mean nDCG@10 and Recall@20 per system and query type. Queries run in
/// parallel; aggregation is in query order so the result is deterministic.
pub fn evaluate(ctx: &EvalContext<'_>, queries: &[Query], systems: &[System]) -> Result<EvalReport> {
    let naive = if systems.contains(&System::Naive) {
        Some(NaiveIndex::build(ctx.index.docs(), ctx.encoder)?)
    } else {
        None
    };
    let mut report = EvalReport::default();
    for &system in systems {
        let scored: Vec<(QueryType, f64, f64)> = queries
            .par_iter()
            .map(|q| {
                let ranking = ctx.rank(system, naive.as_ref(), q)?;
                Ok((
                    q.qtype,
                    ndcg_at_k(&ranking, &q.gold_doc_ids, NDCG_K)?,
                    recall_at_k(&ranking, &q.gold_doc_ids, RECALL_K)?,
                ))
            })
            .collect::<Result<_>>()?;
        let mut per_type = BTreeMap::new();
        for t in QueryType::ALL {
            let rows: Vec<_> = scored.iter().filter(|(qt, ..)| *qt == t).collect();
            if !rows.is_empty() {
                per_type.insert(t.as_str().to_string(), mean(rows.into_iter()));
            }
        }
        report.systems.push(SystemReport {
            system: system.as_str().to_string(),
            per_type,
            overall: mean(scored.iter()),
        });
    }
    Ok(report)
}

fn mean<'a>(rows: impl Iterator<Item = &'a (QueryType, f64, f64)>) -> TypeMetrics {
    let mut m = TypeMetrics::default();
    for (_, n, r) in rows {
        m.n_queries += 1;
        m.ndcg_at_10 += n;
        m.recall_at_20 += r;
    }
    if m.n_queries > 0 {
        m.ndcg_at_10 /= m.n_queries as f64;
        m.recall_at_20 /= m.n_queries as f64;
    }
    m
}

/// Sequential end-to-end query latency of the full pipeline.
pub fn measure_latency(ctx: &EvalContext<'_>, queries: &[Query]) -> Result<LatencyStats> {
    let mut ms = Vec::with_capacity(queries.len());
    for q in queries {
        let start = Instant::now();
        ctx.index.search(&q.qid, &q.text, ctx.encoder, ctx.scorer, &ctx.options)?;
        ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        n_queries: ms.len(),
        p50_ms: percentile(&ms, 0.50),
        p95_ms: percentile(&ms, 0.95),
    })
}

/// Nearest-rank percentile of sorted values; 0 when empty.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
