//! Merging the two routes: per-route min-max scaling, a fused order used to
//! pick candidates, and a cross-scorer that decides the final ranking.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::is_separator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RouteTag {
    /// Narrative, dense single-vector route.
    A,
    /// Table, cell-aware late-interaction route.
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    /// Block ref for route A, table id for route B.
    #[serde(rename = "ref")]
    pub reference: String,
    pub doc_id: String,
    pub route: RouteTag,
    pub raw_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    #[serde(skip)]
    pub text: String,
}

impl Candidate {
    pub fn new(reference: String, doc_id: String, route: RouteTag, raw_score: f64, text: String) -> Self {
        Candidate {
            reference,
            doc_id,
            route,
            raw_score,
            norm_score: None,
            rerank_score: None,
            text,
        }
    }
}

/// `(s - min) / (max - min)`; every score maps to 0.5 when all are equal.
pub fn minmax_normalize(scores: &[f64]) -> Vec<f64> {
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if scores.is_empty() {
        return Vec::new();
    }
    if hi == lo {
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
}

/// Normalizes each route's list on its own, then merges by normalized score
/// (ties: route A first, then reference).
pub fn fuse_candidates(dense: Vec<Candidate>, tables: Vec<Candidate>) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(dense.len() + tables.len());
    for mut list in [dense, tables] {
        let raw: Vec<f64> = list.iter().map(|c| c.raw_score).collect();
        for (c, n) in list.iter_mut().zip(minmax_normalize(&raw)) {
            c.norm_score = Some(n);
        }
        out.extend(list);
    }
    out.sort_by(|a, b| {
        let (na, nb) = (a.norm_score.unwrap_or(0.0), b.norm_score.unwrap_or(0.0));
        nb.total_cmp(&na)
            .then(a.route.cmp(&b.route))
            .then_with(|| a.reference.cmp(&b.reference))
    });
    out
}

pub trait CrossScorer: Send + Sync {
    fn score(&self, query: &str, text: &str) -> Result<f64>;

    /// Scores a batch; one result per candidate, in order.
    fn score_batch(&self, _qid: &str, query: &str, candidates: &[Candidate]) -> Vec<Result<f64>> {
        candidates.iter().map(|c| self.score(query, &c.text)).collect()
    }
}

/// Re-sorts `candidates` by cross-scorer output, keeping the incoming
/// (fusion) order among equal scores, and keeps the best `final_k`.
/// Candidates the scorer fails on are dropped with a warning.
pub fn rerank(
    qid: &str,
    query: &str,
    candidates: Vec<Candidate>,
    scorer: &dyn CrossScorer,
    final_k: usize,
) -> Vec<Candidate> {
    let scores = scorer.score_batch(qid, query, &candidates);
    let mut kept: Vec<Candidate> = candidates
        .into_iter()
        .zip(scores)
        .filter_map(|(mut c, s)| match s {
            Ok(s) => {
                c.rerank_score = Some(s);
                Some(c)
            }
            Err(e) => {
                log::warn!("dropping candidate {} for query {qid:?}: {e}", c.reference);
                None
            }
        })
        .collect();
    kept.sort_by(|a, b| b.rerank_score.unwrap().total_cmp(&a.rerank_score.unwrap()));
    kept.truncate(final_k);
    kept
}

static COL_SPAN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[COL:([^\]]*)\]").expect("column span pattern"));

/// Lowercased whitespace tokens with separators dropped and surrounding
/// punctuation trimmed.
pub fn lexical_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .filter(|t| !is_separator(t))
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
}

/// Term-overlap scorer: each distinct query term found in the candidate
/// earns 1, plus 0.5 when it appears inside a `[COL: ...]` header span.
/// Terms in `ignore` are skipped.
#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    pub ignore: HashSet<String>,
}

pub const QUERY_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "by", "de", "did", "does", "for", "from", "how", "in", "is", "it",
    "of", "on", "or", "the", "to", "was", "were", "what", "which", "who", "with",
];

impl LexicalScorer {
    pub fn with_stopwords() -> Self {
        LexicalScorer {
            ignore: QUERY_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl CrossScorer for LexicalScorer {
    fn score(&self, query: &str, text: &str) -> Result<f64> {
        let terms: HashSet<String> = lexical_tokens(query).filter(|t| !self.ignore.contains(t)).collect();
        if terms.is_empty() {
            return Ok(0.0);
        }
        let body: HashSet<String> = lexical_tokens(text).collect();
        let headers: HashSet<String> = COL_SPAN
            .captures_iter(text)
            .flat_map(|c| lexical_tokens(c.get(1).map_or("", |m| m.as_str())).collect::<Vec<_>>())
            .collect();
        Ok(terms
            .iter()
            .map(|t| {
                let mut s = 0.0;
                if body.contains(t) {
                    s += 1.0;
                }
                if headers.contains(t) {
                    s += 0.5;
                }
                s
            })
            .sum())
    }
}

/// Overlap score with no ignored terms.
pub fn lexical_cross_score(query: &str, text: &str) -> f64 {
    LexicalScorer::default()
        .score(query, text)
        .expect("lexical scoring is infallible")
}

/// Runs an external reranker process once per query. Candidates are written
/// to its stdin as `{"qid","ref","text"}` lines; it must answer with
/// `{"ref","score"}` lines. Candidates it does not score are dropped.
#[derive(Debug, Clone)]
pub struct ExternalScorer {
    pub program: String,
    pub args: Vec<String>,
}

#[derive(Serialize)]
struct ScorerRequest<'a> {
    qid: &'a str,
    #[serde(rename = "ref")]
    reference: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct ScorerReply {
    #[serde(rename = "ref")]
    reference: String,
    score: f64,
}

impl ExternalScorer {
    /// Splits a command line on whitespace.
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty scorer command".into()))?;
        Ok(ExternalScorer {
            program,
            args: parts.collect(),
        })
    }

    fn run(&self, qid: &str, candidates: &[Candidate]) -> Result<HashMap<String, f64>> {
        let fail = |e: std::io::Error| Error::Scorer(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(fail)?;
        let mut input = Vec::new();
        for c in candidates {
            serde_json::to_writer(
                &mut input,
                &ScorerRequest {
                    qid,
                    reference: &c.reference,
                    text: &c.text,
                },
            )
            .map_err(|e| Error::Scorer(e.to_string()))?;
            input.push(b'\n');
        }
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&input));
        let stdout = child.stdout.take().expect("piped stdout");
        let mut scores = HashMap::new();
        for line in BufReader::new(stdout).lines() {
            let line = line.map_err(fail)?;
            if line.trim().is_empty() {
                continue;
            }
            let reply: ScorerReply = serde_json::from_str(&line)
                .map_err(|e| Error::Scorer(format!("bad reply {line:?}: {e}")))?;
            scores.insert(reply.reference, reply.score);
        }
        writer
            .join()
            .map_err(|_| Error::Scorer("stdin writer panicked".into()))?
            .map_err(fail)?;
        let status = child.wait().map_err(fail)?;
        if !status.success() {
            return Err(Error::Scorer(format!("{} exited with {status}", self.program)));
        }
        Ok(scores)
    }
}

impl CrossScorer for ExternalScorer {
    fn score(&self, query: &str, text: &str) -> Result<f64> {
        let c = Candidate::new("0".into(), String::new(), RouteTag::A, 0.0, text.to_string());
        self.score_batch("q", query, &[c]).pop().expect("one result")
    }

    fn score_batch(&self, qid: &str, _query: &str, candidates: &[Candidate]) -> Vec<Result<f64>> {
        match self.run(qid, candidates) {
            Ok(scores) => candidates
                .iter()
                .map(|c| {
                    scores
                        .get(&c.reference)
                        .copied()
                        .ok_or_else(|| Error::Scorer(format!("no score for {}", c.reference)))
                })
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                candidates.iter().map(|_| Err(Error::Scorer(msg.clone()))).collect()
            }
        }
    }
}
