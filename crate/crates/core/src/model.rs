//! Corpus model: documents made of text and table blocks, cells, queries,
//! and the line-delimited JSON formats they travel in.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Block {
    Text { content: String },
    Table(Table),
}

impl Block {
    pub fn text(content: impl Into<String>) -> Self {
        Block::Text {
            content: content.into(),
        }
    }
}

/// A rectangular table: every row has exactly `headers.len()` values.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Table { headers, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    /// Index of the first row whose length differs from the header count.
    pub fn first_ragged_row(&self) -> Option<usize> {
        self.rows.iter().position(|r| r.len() != self.headers.len())
    }

    /// GitHub-style pipe table.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        push_pipe_row(&mut out, self.headers.iter().map(String::as_str));
        push_pipe_row(&mut out, self.headers.iter().map(|_| "---"));
        for row in &self.rows {
            push_pipe_row(&mut out, row.iter().map(String::as_str));
        }
        out
    }
}

fn push_pipe_row<'a>(out: &mut String, cells: impl Iterator<Item = &'a str>) {
    out.push('|');
    for c in cells {
        out.push(' ');
        out.push_str(c);
        out.push_str(" |");
    }
    out.push('\n');
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub table_id: String,
    pub row: usize,
    pub col: usize,
    pub header: String,
    pub value: String,
}

/// All cells of `table` in row-major order, each carrying its column header.
pub fn extract_cells(table: &Table, table_id: &str) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(table.n_rows() * table.n_cols());
    for (row, values) in table.rows.iter().enumerate() {
        for (col, (header, value)) in table.headers.iter().zip(values).enumerate() {
            cells.push(Cell {
                table_id: table_id.to_string(),
                row,
                col,
                header: header.clone(),
                value: value.clone(),
            });
        }
    }
    cells
}

/// Identifies a routed unit: a block of a document, optionally narrowed to a
/// token span `[start, end)` when the router windowed a long text block.
///
/// Rendered as `doc#block` or `doc#block@start-end`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockRef {
    pub doc_id: String,
    pub block: usize,
    pub span: Option<(usize, usize)>,
}

impl BlockRef {
    pub fn whole(doc_id: impl Into<String>, block: usize) -> Self {
        BlockRef {
            doc_id: doc_id.into(),
            block,
            span: None,
        }
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.block)?;
        if let Some((s, e)) = self.span {
            write!(f, "@{s}-{e}")?;
        }
        Ok(())
    }
}

impl FromStr for BlockRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed block ref {s:?}");
        let (doc_id, rest) = s.rsplit_once('#').ok_or_else(bad)?;
        let (block, span) = match rest.split_once('@') {
            None => (rest, None),
            Some((b, span)) => {
                let (a, e) = span.split_once('-').ok_or_else(bad)?;
                let a = a.parse().map_err(|_| bad())?;
                let e = e.parse().map_err(|_| bad())?;
                (b, Some((a, e)))
            }
        };
        Ok(BlockRef {
            doc_id: doc_id.to_string(),
            block: block.parse().map_err(|_| bad())?,
            span,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryType {
    /// Factual retrieval answered by one narrative block.
    A,
    /// Cell-precise lookup.
    B,
    /// Hybrid: needs one narrative document and one table.
    C,
}

impl QueryType {
    pub const ALL: [QueryType; 3] = [QueryType::A, QueryType::B, QueryType::C];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::A => "A",
            QueryType::B => "B",
            QueryType::C => "C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldCell {
    pub doc: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub qid: String,
    #[serde(rename = "type")]
    pub qtype: QueryType,
    pub text: String,
    #[serde(rename = "gold")]
    pub gold_doc_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_cells: Option<Vec<GoldCell>>,
}

fn validate_document(doc: &Document) -> Result<()> {
    let invalid = |reason: &str| Error::InvalidDocument {
        doc_id: doc.id.clone(),
        reason: reason.to_string(),
    };
    if doc.id.is_empty() {
        return Err(invalid("empty id"));
    }
    if doc.blocks.is_empty() {
        return Err(invalid("no blocks"));
    }
    for (bi, block) in doc.blocks.iter().enumerate() {
        if let Block::Table(t) = block {
            if t.headers.is_empty() {
                return Err(invalid(&format!("block {bi}: table without headers")));
            }
            if let Some(row) = t.first_ragged_row() {
                return Err(Error::RaggedTable {
                    doc_id: doc.id.clone(),
                    block: bi,
                    row,
                    got: t.rows[row].len(),
                    expected: t.headers.len(),
                });
            }
        }
    }
    Ok(())
}

/// Parses a JSONL corpus. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("<corpus line {line_no}>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|source| Error::Json {
            line: line_no,
            source,
        })?;
        validate_document(&doc)?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: doc.id,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn parse_corpus_str(s: &str) -> Result<Vec<Document>> {
    parse_corpus(s.as_bytes())
}

pub fn write_corpus<W: Write>(mut w: W, docs: &[Document]) -> std::io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn corpus_to_string(docs: &[Document]) -> String {
    let mut buf = Vec::new();
    write_corpus(&mut buf, docs).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn parse_queries<R: BufRead>(reader: R) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("<queries line {line_no}>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(&line).map_err(|source| Error::Json {
            line: line_no,
            source,
        })?;
        if q.gold_doc_ids.is_empty() {
            return Err(Error::InvalidQuery {
                qid: q.qid,
                reason: "empty gold set".into(),
            });
        }
        if !seen.insert(q.qid.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: q.qid,
            });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries<W: Write>(mut w: W, queries: &[Query]) -> std::io::Result<()> {
    for q in queries {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(headers: &[&str], rows: &[&[&str]]) -> Table {
        Table::new(
            headers.iter().map(|s| s.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
    }

    #[test]
    fn parses_minimal_document() {
        let docs = parse_corpus_str(
            r#"{"id":"d1","title":"t","blocks":[{"type":"text","content":"hello"}]}"#,
        )
        .unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].blocks, vec![Block::text("hello")]);
    }

    #[test]
    fn ragged_row_is_reported_with_doc_and_row() {
        let line = r#"{"id":"d7","title":"t","blocks":[{"type":"table","headers":["A","B"],"rows":[["1"]]}]}"#;
        match parse_corpus_str(line) {
            Err(Error::RaggedTable { doc_id, row, .. }) => {
                assert_eq!(doc_id, "d7");
                assert_eq!(row, 0);
            }
            other => panic!("expected ragged table error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let l = r#"{"id":"d1","title":"t","blocks":[{"type":"text","content":"x"}]}"#;
        let err = parse_corpus_str(&format!("{l}\n{l}\n")).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let l = r#"{"id":"d1","title":"t","blocks":[{"type":"text","content":"x"}]}"#;
        let err = parse_corpus_str(&format!("{l}\n{{not json\n")).unwrap_err();
        assert!(matches!(err, Error::Json { line: 2, .. }), "{err}");
    }

    #[test]
    fn document_without_blocks_rejected() {
        let err = parse_corpus_str(r#"{"id":"d1","title":"t","blocks":[]}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidDocument { .. }));
    }

    #[test]
    fn extract_cells_counts_and_headers() {
        let t = table(&["A", "B"], &[&["1", "2"], &["3", "4"]]);
        let cells = extract_cells(&t, "t");
        assert_eq!(cells.len(), 4);
        let c10 = cells.iter().find(|c| c.row == 1 && c.col == 0).unwrap();
        assert_eq!(c10.header, "A");
        assert_eq!(c10.value, "3");
        // row-major
        let coords: Vec<_> = cells.iter().map(|c| (c.row, c.col)).collect();
        assert_eq!(coords, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn extract_single_price_cell() {
        let t = table(&["Price"], &[&["0.85"]]);
        let cells = extract_cells(&t, "x");
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].header, "Price");
        assert_eq!(cells[0].value, "0.85");
    }

    #[test]
    fn extract_cells_of_empty_table() {
        let t = table(&["A", "B"], &[]);
        assert!(extract_cells(&t, "t").is_empty());
    }

    #[test]
    fn block_ref_display_and_parse() {
        let a = BlockRef::whole("doc#1", 3);
        assert_eq!(a.to_string(), "doc#1#3");
        assert_eq!(a.to_string().parse::<BlockRef>().unwrap(), a);
        let b = BlockRef {
            doc_id: "d".into(),
            block: 0,
            span: Some((32, 96)),
        };
        assert_eq!(b.to_string(), "d#0@32-96");
        assert_eq!("d#0@32-96".parse::<BlockRef>().unwrap(), b);
        assert!("nohash".parse::<BlockRef>().is_err());
    }

    #[test]
    fn markdown_linearization() {
        let t = table(&["A", "B"], &[&["1", "2"]]);
        assert_eq!(t.to_markdown(), "| A | B |\n| --- | --- |\n| 1 | 2 |\n");
    }

    #[test]
    fn query_roundtrip_and_schema() {
        let line = r#"{"qid":"q1","type":"B","text":"x","gold":["d1"],"gold_cells":[{"doc":"d1","row":2,"col":3}]}"#;
        let qs = parse_queries(line.as_bytes()).unwrap();
        assert_eq!(qs[0].qtype, QueryType::B);
        assert_eq!(qs[0].gold_cells.as_ref().unwrap()[0].col, 3);
        let mut out = Vec::new();
        write_queries(&mut out, &qs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().trim_end(), line);
    }

    #[test]
    fn query_with_empty_gold_rejected() {
        let line = r#"{"qid":"q1","type":"A","text":"x","gold":[]}"#;
        assert!(parse_queries(line.as_bytes()).is_err());
    }
}
