//! Structural Density Score routing.
//!
//! Every whitespace token is put in exactly one class (Separator, Numeric,
//! EntityLike, Plain, in that priority order). The score of a span is the
//! fraction of its tokens that are not Plain. Text spans scoring above `tau`
//! go to the table route; the rest go to the dense narrative route.

use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::model::{Block, BlockRef, Document, Table};

const SEPARATOR_CHARS: &[char] = &['|', ';', ',', ':', '—', '-'];
const SEPARATOR_TAGS: &[&str] = &["<td>", "</td>", "<tr>", "</tr>", "<th>", "</th>"];

static NUMERIC: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[+-]?(?:[€$£](?:\d+(?:\.\d*)?|\.\d+)|(?:\d+(?:\.\d*)?|\.\d+)[%€$£]?)$")
        .expect("numeric token pattern")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Separator,
    Numeric,
    EntityLike,
    Plain,
}

impl TokenClass {
    pub fn is_structural(self) -> bool {
        self != TokenClass::Plain
    }
}

/// A whitespace-delimited token with its byte span in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub class: TokenClass,
    pub start: usize,
    pub end: usize,
}

pub fn is_separator(tok: &str) -> bool {
    (!tok.is_empty() && tok.chars().all(|c| SEPARATOR_CHARS.contains(&c)))
        || SEPARATOR_TAGS.contains(&tok)
}

pub fn is_numeric(tok: &str) -> bool {
    NUMERIC.is_match(tok)
}

fn ends_sentence(tok: &str) -> bool {
    tok.ends_with(['.', '!', '?'])
}

pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut sentence_start = true;
    let mut iter = text.char_indices().peekable();
    while let Some(&(start, c)) = iter.peek() {
        if c.is_whitespace() {
            iter.next();
            continue;
        }
        let mut end = start;
        while let Some(&(i, c)) = iter.peek() {
            if c.is_whitespace() {
                break;
            }
            end = i + c.len_utf8();
            iter.next();
        }
        let tok = &text[start..end];
        let class = if is_separator(tok) {
            TokenClass::Separator
        } else if is_numeric(tok) {
            TokenClass::Numeric
        } else if !sentence_start && tok.chars().next().is_some_and(char::is_uppercase) {
            TokenClass::EntityLike
        } else {
            TokenClass::Plain
        };
        sentence_start = ends_sentence(tok);
        tokens.push(Token {
            text: tok,
            class,
            start,
            end,
        });
    }
    tokens
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenStats {
    pub n_num: usize,
    pub n_sep: usize,
    pub n_ent: usize,
    pub n_total: usize,
}

impl TokenStats {
    pub fn from_tokens(tokens: &[Token<'_>]) -> Self {
        let mut s = TokenStats {
            n_total: tokens.len(),
            ..Default::default()
        };
        for t in tokens {
            match t.class {
                TokenClass::Numeric => s.n_num += 1,
                TokenClass::Separator => s.n_sep += 1,
                TokenClass::EntityLike => s.n_ent += 1,
                TokenClass::Plain => {}
            }
        }
        s
    }

    /// Structural density; an empty span scores 0.
    pub fn density(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            (self.n_num + self.n_sep + self.n_ent) as f64 / self.n_total as f64
        }
    }
}

pub fn sds(tokens: &[Token<'_>]) -> f64 {
    TokenStats::from_tokens(tokens).density()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterConfig {
    pub tau: f64,
    pub window_tokens: usize,
    pub stride_tokens: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            tau: 0.4,
            window_tokens: 64,
            stride_tokens: 32,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.window_tokens == 0 {
            return Err(Error::Config("window must be at least 1 token".into()));
        }
        if self.stride_tokens == 0 || self.stride_tokens > self.window_tokens {
            return Err(Error::Config(format!(
                "stride {} must be in 1..={}",
                self.stride_tokens, self.window_tokens
            )));
        }
        Ok(())
    }

    pub fn route_for(&self, sds: f64) -> Route {
        if sds > self.tau {
            Route::Structured
        } else {
            Route::Narrative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Narrative,
    Structured,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoutedContent {
    Text(String),
    Table(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedBlock {
    pub source: BlockRef,
    pub route: Route,
    /// `None` for native tables, which are never scored. For a span merged
    /// from several windows this is the mean of the window scores.
    pub sds: Option<f64>,
    pub content: RoutedContent,
}

/// Routes every block of `doc`. Native tables go straight to the table
/// route; text blocks are scored, windowed when longer than the window.
pub fn segment(doc: &Document, cfg: &RouterConfig) -> Vec<RoutedBlock> {
    let mut out = Vec::new();
    for (bi, block) in doc.blocks.iter().enumerate() {
        match block {
            Block::Table(t) => out.push(RoutedBlock {
                source: BlockRef::whole(&doc.id, bi),
                route: Route::Structured,
                sds: None,
                content: RoutedContent::Table(t.clone()),
            }),
            Block::Text { content } => segment_text(&doc.id, bi, content, cfg, &mut out),
        }
    }
    out
}

struct Span {
    start: usize,
    end: usize,
    route: Route,
    sds_sum: f64,
    windows: usize,
}

fn segment_text(doc_id: &str, bi: usize, text: &str, cfg: &RouterConfig, out: &mut Vec<RoutedBlock>) {
    let tokens = tokenize(text);
    let n = tokens.len();
    if n <= cfg.window_tokens {
        let score = sds(&tokens);
        let route = cfg.route_for(score);
        out.push(make_block(doc_id, bi, None, text, route, score));
        return;
    }

    let mut spans: Vec<Span> = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + cfg.window_tokens).min(n);
        let score = sds(&tokens[start..end]);
        let route = cfg.route_for(score);
        match spans.last_mut() {
            Some(last) if last.route == route => {
                last.end = end;
                last.sds_sum += score;
                last.windows += 1;
            }
            _ => spans.push(Span {
                start,
                end,
                route,
                sds_sum: score,
                windows: 1,
            }),
        }
        if end == n {
            break;
        }
        start += cfg.stride_tokens;
    }

    // Overlap between spans of different routes is split at its midpoint.
    for i in 1..spans.len() {
        let (prev_end, next_start) = (spans[i - 1].end, spans[i].start);
        if next_start < prev_end {
            let mid = (next_start + prev_end) / 2;
            spans[i - 1].end = mid;
            spans[i].start = mid;
        }
    }

    let whole = spans.len() == 1;
    for s in spans {
        let span_text = &text[tokens[s.start].start..tokens[s.end - 1].end];
        let span = if whole { None } else { Some((s.start, s.end)) };
        let mean = s.sds_sum / s.windows as f64;
        out.push(make_block(doc_id, bi, span, span_text, s.route, mean));
    }
}

fn make_block(
    doc_id: &str,
    bi: usize,
    span: Option<(usize, usize)>,
    text: &str,
    route: Route,
    score: f64,
) -> RoutedBlock {
    let content = match route {
        Route::Narrative => RoutedContent::Text(text.to_string()),
        Route::Structured => RoutedContent::Table(parse_text_table(text)),
    };
    RoutedBlock {
        source: BlockRef {
            doc_id: doc_id.to_string(),
            block: bi,
            span,
        },
        route,
        sds: Some(score),
        content,
    }
}

fn is_rule_row(cells: &[String]) -> bool {
    !cells.is_empty()
        && cells
            .iter()
            .all(|c| !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | '—')))
}

fn split_line(line: &str) -> Vec<String> {
    let line = line.trim();
    if line.contains('|') {
        let inner = line.strip_prefix('|').unwrap_or(line);
        let inner = inner.strip_suffix('|').unwrap_or(inner);
        inner.split('|').map(|c| c.trim().to_string()).collect()
    } else if line.contains('\t') {
        line.split('\t').map(|c| c.trim().to_string()).collect()
    } else {
        vec![line.to_string()]
    }
}

/// Recovers a grid from text the router judged structured. Pipe or tab
/// delimited lines become rows. The first row is taken as the header only
/// when a Markdown rule line follows it; otherwise headers are empty.
/// Short rows are padded with empty cells.
pub fn parse_text_table(text: &str) -> Table {
    let lines: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(split_line)
        .collect();
    let has_header = lines.len() >= 2 && is_rule_row(&lines[1]) && !is_rule_row(&lines[0]);
    let mut rows: Vec<Vec<String>> = lines.into_iter().filter(|r| !is_rule_row(r)).collect();
    let width = rows.iter().map(Vec::len).max().unwrap_or(1).max(1);
    for r in &mut rows {
        r.resize(width, String::new());
    }
    let headers = if has_header && !rows.is_empty() {
        rows.remove(0)
    } else {
        vec![String::new(); width]
    };
    Table::new(headers, rows)
}
