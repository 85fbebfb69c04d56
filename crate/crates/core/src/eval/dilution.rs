//! Vector dilution: recall of one Markdown vector per table against the
//! cell-aware index as tables grow wider.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{CellIndex, CellIndexConfig, SearchMode, TableSource};
use crate::dense::DenseIndex;
use crate::embed::Encoder;
use crate::error::{Error, Result};
use crate::eval::gen::{RETAILERS, VARIETIES};
use crate::model::{BlockRef, Table};
use crate::pipeline::table_query_vectors;

const METRICS: &[&str] = &["Price", "Volume", "Discount", "Brix", "Acidity", "Boxes", "Waste", "Juice"];
const QUALIFIERS: &[&str] = &["Net", "Gross", "Target", "Min", "Max", "Avg", "Spot", "Contract"];
const KEYS: [&str; 3] = ["Variety", "Week", "Retailer"];

/// Retailers the tables of one width share, so most tables have a
/// same-retailer neighbour and the week decides.
const SHARED_RETAILERS: usize = 1;
const FIRST_WEEK: usize = 10;

pub const SINGLE_VECTOR: &str = "single-vector";
pub const CELL_AWARE: &str = "cell-aware";

#[derive(Debug, Clone, PartialEq)]
pub struct DilutionConfig {
    pub widths: Vec<usize>,
    pub tables_per_width: usize,
    pub queries_per_width: usize,
    pub rows_per_table: usize,
    pub k: usize,
    /// Exact by default so width is the only variable.
    pub mode: SearchMode,
    pub seed: u64,
}

impl Default for DilutionConfig {
    fn default() -> Self {
        DilutionConfig {
            widths: vec![5, 10, 20, 30, 40, 50],
            tables_per_width: 40,
            queries_per_width: 40,
            rows_per_table: 6,
            k: 10,
            mode: SearchMode::Exact,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionRow {
    pub width: usize,
    pub system: String,
    pub recall_at_10: f64,
    pub n_queries: usize,
}

/// Header pool for the measure columns: every metric with every qualifier.
pub fn measure_headers() -> Vec<String> {
    METRICS
        .iter()
        .flat_map(|m| QUALIFIERS.iter().map(move |q| format!("{m} {q}")))
        .collect()
}

struct Family {
    ids: Vec<String>,
    tables: Vec<Table>,
    queries: Vec<(String, usize)>,
}

fn family(width: usize, cfg: &DilutionConfig, headers: &[String]) -> Family {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (width as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let measures = width - KEYS.len();
    let mut ids = Vec::new();
    let mut tables = Vec::new();
    for j in 0..cfg.tables_per_width {
        let retailer = RETAILERS[j % SHARED_RETAILERS];
        let week = (FIRST_WEEK + j / SHARED_RETAILERS).to_string();
        let cols: Vec<&String> = headers.choose_multiple(&mut rng, measures).collect();
        let varieties: Vec<&&str> = VARIETIES.choose_multiple(&mut rng, cfg.rows_per_table).collect();
        let mut h: Vec<String> = KEYS.iter().map(|s| s.to_string()).collect();
        h.extend(cols.iter().map(|s| s.to_string()));
        let rows = varieties
            .iter()
            .map(|v| {
                let mut row = vec![v.to_string(), week.clone(), retailer.to_string()];
                row.extend((0..measures).map(|_| format!("{:.2}", rng.random_range(0..2000) as f64 / 100.0)));
                row
            })
            .collect();
        ids.push(format!("w{width}-t{j:03}"));
        tables.push(Table::new(h, rows));
    }
    let queries = (0..cfg.queries_per_width)
        .map(|q| {
            let t = q % tables.len();
            let table = &tables[t];
            let row = &table.rows[rng.random_range(0..table.n_rows())];
            let col = rng.random_range(KEYS.len()..table.n_cols());
            let text = format!(
                "What was the {} of {} in week {} at {}?",
                table.headers[col], row[0], row[1], row[2]
            );
            (text, t)
        })
        .collect();
    Family { ids, tables, queries }
}

/// Recall@k of both systems at every width, rows ordered by width then system.
pub fn run_dilution_experiment(cfg: &DilutionConfig, encoder: &dyn Encoder) -> Result<Vec<DilutionRow>> {
    let headers = measure_headers();
    if cfg.widths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("widths must be sorted ascending".into()));
    }
    if let Some(&w) = cfg.widths.iter().find(|&&w| w <= KEYS.len() || w - KEYS.len() > headers.len()) {
        return Err(Error::Config(format!(
            "width {w} outside {}..={}",
            KEYS.len() + 1,
            KEYS.len() + headers.len()
        )));
    }
    if cfg.tables_per_width == 0 || cfg.queries_per_width == 0 || cfg.k == 0 {
        return Err(Error::Config("tables, queries and k must be positive".into()));
    }
    if cfg.rows_per_table == 0 || cfg.rows_per_table > VARIETIES.len() {
        return Err(Error::Config(format!("rows per table must be in 1..={}", VARIETIES.len())));
    }

    let mut out = Vec::with_capacity(cfg.widths.len() * 2);
    for &width in &cfg.widths {
        let fam = family(width, cfg, &headers);

        let entries = fam
            .ids
            .iter()
            .zip(&fam.tables)
            .map(|(id, t)| Ok((BlockRef::whole(id, 0), encoder.encode(&t.to_markdown())?)))
            .collect::<Result<Vec<_>>>()?;
        let dense = DenseIndex::from_entries(encoder.dim(), entries)?;
        let sources: Vec<TableSource<'_>> = fam
            .ids
            .iter()
            .zip(&fam.tables)
            .map(|(id, t)| TableSource {
                table_id: id,
                doc_id: id,
                table: t,
            })
            .collect();
        let cells = CellIndex::build(&sources, encoder, &CellIndexConfig::default())?;

        let (mut single, mut cell) = (0usize, 0usize);
        for (text, gold) in &fam.queries {
            let gold = &fam.ids[*gold];
            let q = encoder.encode(text)?;
            if dense.search(&q, cfg.k)?.iter().any(|h| &h.block_ref.doc_id == gold) {
                single += 1;
            }
            let toks = table_query_vectors(text, encoder)?;
            if cells.search_tables(&toks, cfg.k, cfg.mode)?.iter().any(|h| &h.table_id == gold) {
                cell += 1;
            }
        }
        let n = fam.queries.len();
        log::info!("width {width}: single-vector {single}/{n}, cell-aware {cell}/{n}");
        for (system, hits) in [(SINGLE_VECTOR, single), (CELL_AWARE, cell)] {
            out.push(DilutionRow {
                width,
                system: system.to_string(),
                recall_at_10: hits as f64 / n as f64,
                n_queries: n,
            });
        }
    }
    Ok(out)
}

pub fn dilution_csv(rows: &[DilutionRow]) -> String {
    let mut s = String::from("width,system,recall_at_10,n_queries\n");
    for r in rows {
        writeln!(s, "{},{},{:.4},{}", r.width, r.system, r.recall_at_10, r.n_queries).expect("string write");
    }
    s
}
