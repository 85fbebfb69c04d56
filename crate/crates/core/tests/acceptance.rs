//! Acceptance suite. Every check prints one PASS/FAIL line with its
//! measurement; the process exits non-zero if any check fails.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toporag::cells::{default_stopwords, maxsim_score, CellIndex, CellIndexConfig, SearchMode, TableSource};
use toporag::embed::{Embedding, EmbedderConfig, HashEncoder};
use toporag::eval::dilution::{run_dilution_experiment, DilutionConfig, CELL_AWARE, SINGLE_VECTOR};
use toporag::eval::gen::{generate_corpus, generate_queries, CorpusSpec, GeneratedCorpus, QueryCounts};
use toporag::eval::{evaluate, ndcg_at_k, recall_at_k, EvalContext, System};
use toporag::fusion::LexicalScorer;
use toporag::model::{corpus_to_string, parse_corpus_str, Block, Query, QueryType, Table};
use toporag::pipeline::{table_query_vectors, IndexConfig, SearchOptions, TopoIndex};
use toporag::router::{segment, tokenize, Route, RouterConfig, TokenStats};
use toporag::store::{index_file_sizes, load_index, save_index, EmbedderInfo, Manifest, CELLS_META, CODEBOOK, CODES};
use toporag::Document;

const SEED: u64 = 42;

type Outcome = Result<String, String>;

struct Desk {
    corpus: GeneratedCorpus,
    queries: Vec<Query>,
    index: TopoIndex,
    encoder: HashEncoder,
}

fn encoder() -> HashEncoder {
    HashEncoder::new(EmbedderConfig::default()).expect("default embedder config")
}

fn desk() -> Desk {
    let corpus = generate_corpus(&CorpusSpec {
        seed: SEED,
        ..Default::default()
    })
    .expect("desk corpus");
    let queries = generate_queries(&corpus.docs, &corpus.gold, QueryCounts::default(), SEED).expect("desk queries");
    let encoder = encoder();
    let index = TopoIndex::build(corpus.docs.clone(), &encoder, IndexConfig::default()).expect("desk index");
    Desk {
        corpus,
        queries,
        index,
        encoder,
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- SDS oracle

/// (text, numeric, separator, entity-like, total), counted by hand.
const SDS_FIXTURE: &[(&str, usize, usize, usize, usize)] = &[
    ("", 0, 0, 0, 0),
    ("hello world", 0, 0, 0, 2),
    ("Hello world", 0, 0, 0, 2),
    ("the price of Verna is 0.85", 1, 0, 1, 6),
    ("| Variety | Price |", 0, 3, 2, 5),
    ("Verna | 0.85 | 12%", 2, 2, 0, 5),
    ("a b c 1 2", 2, 0, 0, 5),
    ("€0.50 $3 £.5 -4 +7.25", 5, 0, 0, 5),
    ("5€ 10$ 3.% .5%", 4, 0, 0, 4),
    ("1,250 1.2.3 12a", 0, 0, 0, 3),
    ("- -- — ;; , :", 0, 6, 0, 6),
    ("<td> 5 </td> <tr> x </tr>", 1, 4, 0, 6),
    ("<TD> <td>x</td>", 0, 0, 0, 2),
    ("We met Ana. She left.", 0, 0, 1, 5),
    ("Is it Bob? Yes, Bob!", 0, 0, 2, 5),
    ("price: 3", 1, 0, 0, 2),
    ("price : 3", 1, 1, 0, 3),
    ("Mercadona Lidl Aldi", 0, 0, 2, 3),
    ("contract with Huerta Segura, signed in 2023.", 1, 0, 2, 7),
    ("contract with Huerta Segura signed in 2023 .", 1, 0, 2, 8),
    ("ÉCLAIR Über", 0, 0, 1, 2),
    ("x 3 | y", 1, 1, 0, 4),
    ("Total; 45; 12.5%", 1, 0, 0, 3),
    ("one. Two three. four Five", 0, 0, 1, 5),
    ("A", 0, 0, 0, 1),
    ("a A", 0, 0, 1, 2),
    ("+ +5 5+ ++5", 1, 0, 0, 4),
    ("$ € %", 0, 0, 0, 3),
    ("-0.5 -.5 -5. 5..", 3, 0, 0, 4),
    ("12 34 56 78 90", 5, 0, 0, 5),
    ("|---|---|", 0, 1, 0, 1),
    ("| --- | :---: |", 0, 5, 0, 5),
    ("row one has Verna and row two has Eureka", 0, 0, 2, 9),
    ("In Q3 the EBITDA rose 4%", 1, 0, 2, 6),
    ("iPhone eBay", 0, 0, 0, 2),
    ("The Price/Kg column", 0, 0, 1, 3),
    ("Week 42 , Verna , €0.85 ; Week 43 , Fino , €0.80", 4, 5, 3, 13),
    ("done! Next", 0, 0, 0, 2),
    ("wait... Really", 0, 0, 0, 2),
    ("(Verna) [Fino]", 0, 0, 0, 2),
    ("3", 1, 0, 0, 1),
    ("  spaced   out\ttabs\nnewline  ", 0, 0, 0, 4),
    ("Growers in Murcia and Almeria shipped 1200 boxes to Rewe", 1, 0, 3, 10),
    ("0.85 0.85 0.85 x", 3, 0, 0, 4),
    ("— Verna —", 0, 2, 1, 3),
    ("x, y; z", 0, 0, 0, 3),
    ("N/A n/a NA", 0, 0, 1, 3),
    ("1e5 0x1F 1_000", 0, 0, 0, 3),
    ("Q. Who? A. Me.", 0, 0, 0, 4),
    ("<th> Variety </th> <th> Price </th>", 0, 4, 2, 6),
];

fn sds_oracle() -> Outcome {
    ensure(SDS_FIXTURE.len() == 50, || format!("fixture has {} cases", SDS_FIXTURE.len()))?;
    for &(text, num, sep, ent, total) in SDS_FIXTURE {
        let stats = TokenStats::from_tokens(&tokenize(text));
        let got = (stats.n_num, stats.n_sep, stats.n_ent, stats.n_total);
        ensure(got == (num, sep, ent, total), || {
            format!("{text:?}: counts {got:?}, expected {:?}", (num, sep, ent, total))
        })?;
        let expected = if total == 0 {
            0.0
        } else {
            (num + sep + ent) as f64 / total as f64
        };
        let score = stats.density();
        ensure((score - expected).abs() < 1e-12, || format!("{text:?}: sds {score}, expected {expected}"))?;
    }
    Ok("50/50 cases exact".into())
}

// ------------------------------------------------------- routing semantics

const WORDS: &[&str] = &[
    "the", "lemon", "price", "rose", "Verna", "Mercadona", "0.85", "12%", "|", ";", "-", "week", "42", "and",
    "shipped.", "Fino", "<td>", "€3", "of", "harvest", "Total", "was", "—", ",", "late", "Lidl",
];

fn routing_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut structured, mut narrative, mut ties) = (0usize, 0usize, 0usize);
    for case in 0..10_000 {
        let n = rng.random_range(1..=160);
        let text: Vec<&str> = (0..n).map(|_| *WORDS.choose(&mut rng).expect("non-empty")).collect();
        let text = text.join(" ");
        // Rational thresholds make exact ties with window scores likely.
        let tau = rng.random_range(1..=9) as f64 / 10.0;
        let cfg = RouterConfig {
            tau,
            ..Default::default()
        };
        let doc = Document {
            id: format!("d{case}"),
            title: String::new(),
            blocks: vec![Block::text(text.clone())],
        };
        for b in segment(&doc, &cfg) {
            let s = b.sds.ok_or_else(|| format!("case {case}: text span without a score"))?;
            let want = if s > tau { Route::Structured } else { Route::Narrative };
            ensure(b.route == want, || {
                format!("case {case}: sds {s} tau {tau} routed {:?} ({text:?})", b.route)
            })?;
            if s == tau {
                ties += 1;
            }
            match b.route {
                Route::Structured => structured += 1,
                Route::Narrative => narrative += 1,
            }
        }
    }
    Ok(format!(
        "10000 blocks -> {structured} structured / {narrative} narrative spans, {ties} exact ties"
    ))
}

// ------------------------------------------------------------------ MaxSim

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    Embedding::normalized((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
}

fn oracle_maxsim(query: &[Embedding], cells: &[Embedding]) -> f64 {
    let mut total = 0.0;
    for q in query {
        let mut best = 0.0f64;
        for c in cells {
            let mut d = 0.0f64;
            for i in 0..q.dim() {
                d += q.as_slice()[i] as f64 * c.as_slice()[i] as f64;
            }
            if d > best {
                best = d;
            }
        }
        total += best;
    }
    total
}

fn maxsim_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let dim = rng.random_range(2..=64);
        let query: Vec<Embedding> = (0..rng.random_range(0..=5)).map(|_| random_unit(&mut rng, dim)).collect();
        let mut cells: Vec<Embedding> = (0..rng.random_range(0..=40)).map(|_| random_unit(&mut rng, dim)).collect();
        let got = maxsim_score(&query, &cells).map_err(|e| e.to_string())?;
        let want = oracle_maxsim(&query, &cells);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("case {case}: {got} vs oracle {want}"))?;
        ensure((0.0..=query.len() as f64 + 1e-9).contains(&got), || format!("case {case}: {got} out of bounds"))?;
        cells.push(random_unit(&mut rng, dim));
        let grown = maxsim_score(&query, &cells).map_err(|e| e.to_string())?;
        ensure(grown >= got, || format!("case {case}: superset scored {grown} < {got}"))?;
    }
    Ok(format!("1000 cases, max |diff| {worst:.1e}, monotone on all"))
}

// --------------------------------------------------------- dedup invariance

fn rankings(index: &CellIndex, q: &[Embedding], mode: SearchMode) -> Result<Vec<String>, String> {
    Ok(index
        .search_tables(q, usize::MAX, mode)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|h| h.table_id)
        .collect())
}

fn corpus_tables(docs: &[Document]) -> Vec<(String, String, Table)> {
    docs.iter()
        .flat_map(|d| {
            d.blocks.iter().enumerate().filter_map(move |(bi, b)| match b {
                Block::Table(t) => Some((format!("{}#{bi}", d.id), d.id.clone(), t.clone())),
                _ => None,
            })
        })
        .collect()
}

fn dedup_invariance(d: &Desk) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut tables = corpus_tables(&d.corpus.docs);
    let mut injected = 0;
    for i in 0..tables.len() {
        let donor = tables[rng.random_range(0..tables.len())].2.clone();
        let t = &mut tables[i].2;
        for _ in 0..5 {
            let (r, c) = (rng.random_range(0..donor.n_rows()), rng.random_range(0..donor.n_cols()));
            let (tr, tc) = (rng.random_range(0..t.n_rows()), rng.random_range(0..t.n_cols()));
            t.headers[tc] = donor.headers[c].clone();
            t.rows[tr][tc] = donor.rows[r][c].clone();
            injected += 1;
        }
    }
    let sources: Vec<TableSource<'_>> = tables
        .iter()
        .map(|(id, doc, t)| TableSource {
            table_id: id,
            doc_id: doc,
            table: t,
        })
        .collect();
    let with = CellIndex::build(&sources, &d.encoder, &CellIndexConfig::default()).map_err(|e| e.to_string())?;
    let without = CellIndex::build(
        &sources,
        &d.encoder,
        &CellIndexConfig {
            dedup: false,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let queries = generate_queries(&d.corpus.docs, &d.corpus.gold, QueryCounts { a: 0, b: 200, c: 0 }, SEED + 1)
        .map_err(|e| e.to_string())?;
    for q in &queries {
        let qv = table_query_vectors(&q.text, &d.encoder).map_err(|e| e.to_string())?;
        ensure(
            rankings(&with, &qv, SearchMode::Exact)? == rankings(&without, &qv, SearchMode::Exact)?,
            || format!("{}: ranking changed by dedup", q.qid),
        )?;
    }
    Ok(format!(
        "200 queries identical; {injected} cells injected, {} vectors -> {} centroids",
        without.centroids().len(),
        with.centroids().len()
    ))
}

// ------------------------------------------------------------ PQ fidelity

fn pq_exact_regime(d: &Desk) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let headers = ["Variety", "Price", "Week", "Retailer"];
    let values: [&[&str]; 4] = [&["Verna", "Eureka", "Fino", "Lisbon"], &["0.50", "0.85", "1.10"], &["41", "42", "43"], &["Lidl", "Rewe"]];
    // 4 + 3 + 3 + 2 = 12 distinct cell strings: at most 12 distinct
    // sub-vectors in any subspace.
    let tables: Vec<Table> = (0..60)
        .map(|_| {
            let rows = (0..rng.random_range(1..=6))
                .map(|_| values.iter().map(|v| v.choose(&mut rng).expect("non-empty").to_string()).collect())
                .collect();
            Table::new(headers.iter().map(|h| h.to_string()).collect(), rows)
        })
        .collect();
    let ids: Vec<String> = (0..tables.len()).map(|i| format!("t{i:02}")).collect();
    let sources: Vec<TableSource<'_>> = ids
        .iter()
        .zip(&tables)
        .map(|(id, t)| TableSource {
            table_id: id,
            doc_id: id,
            table: t,
        })
        .collect();
    let index = CellIndex::build(&sources, &d.encoder, &CellIndexConfig::default()).map_err(|e| e.to_string())?;
    ensure(index.centroids().len() <= 16, || format!("{} centroids", index.centroids().len()))?;
    for q in 0..100 {
        let text = format!(
            "{} {} week {} at {}",
            headers.choose(&mut rng).expect("non-empty"),
            values[0].choose(&mut rng).expect("non-empty"),
            values[2].choose(&mut rng).expect("non-empty"),
            values[3].choose(&mut rng).expect("non-empty")
        );
        let qv = table_query_vectors(&text, &d.encoder).map_err(|e| e.to_string())?;
        ensure(
            rankings(&index, &qv, SearchMode::Pq)? == rankings(&index, &qv, SearchMode::Exact)?,
            || format!("query {q} {text:?}: pq ranking differs from exact"),
        )?;
    }

    let agree = top1_agreement(d.index.cells(), d)?;
    let rate = agree as f64 / d.queries.len() as f64;
    if rate < 0.85 {
        // Sensitivity to the subspace count, for the failure report.
        let mut finer = Vec::new();
        for m in [64, 128] {
            let mut cfg = IndexConfig::default();
            cfg.cells.pq.m = m;
            let idx = TopoIndex::build(d.corpus.docs.clone(), &d.encoder, cfg).map_err(|e| e.to_string())?;
            finer.push(format!("m={m}: {:.3}", top1_agreement(idx.cells(), d)? as f64 / d.queries.len() as f64));
        }
        return Err(format!(
            "exact regime: 100/100 rankings equal; general-regime top-1 agreement {rate:.3} < 0.85 at m=16 ({})",
            finer.join(", ")
        ));
    }
    Ok(format!(
        "exact regime: 100/100 rankings equal; desk corpus top-1 agreement {agree}/{} = {rate:.3}",
        d.queries.len()
    ))
}

fn top1_agreement(cells: &CellIndex, d: &Desk) -> Result<usize, String> {
    let mut agree = 0;
    for q in &d.queries {
        let qv = table_query_vectors(&q.text, &d.encoder).map_err(|e| e.to_string())?;
        let top = |mode| cells.search_tables(&qv, 1, mode).map(|h| h.first().map(|h| h.table_id.clone()));
        if top(SearchMode::Pq).map_err(|e| e.to_string())? == top(SearchMode::Exact).map_err(|e| e.to_string())? {
            agree += 1;
        }
    }
    Ok(agree)
}

// ------------------------------------------------------- compression ratio

fn compression_ratio(d: &Desk) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = Manifest::describe(&d.index, EmbedderInfo::hashed(&EmbedderConfig::default()), 0);
    save_index(tmp.path(), &d.index, &manifest).map_err(|e| e.to_string())?;
    let sizes = index_file_sizes(tmp.path()).map_err(|e| e.to_string())?;
    let compressed: u64 = [CELLS_META, CODEBOOK, CODES].iter().map(|f| sizes[*f]).sum();
    let stats = d.index.cells().stats();
    let raw = (stats.cells_before_prune * d.index.dim() * 4) as u64;
    let ratio = compressed as f64 / raw as f64;
    ensure(ratio <= 0.34, || format!("ratio {ratio:.4} > 0.34"))?;
    Ok(format!(
        "{compressed} bytes (cells.meta {} + codebook {} + codes {}) vs {raw} raw float32 bytes: ratio {ratio:.4}",
        sizes[CELLS_META], sizes[CODEBOOK], sizes[CODES]
    ))
}

// ------------------------------------------------------- pruning accounting

fn pruning_accounting(d: &Desk) -> Outcome {
    let stop = default_stopwords();
    let (mut total, mut prunable) = (0usize, 0usize);
    for (_, _, t) in corpus_tables(&d.corpus.docs) {
        for row in &t.rows {
            for v in row {
                total += 1;
                let toks: Vec<String> = v.split_whitespace().map(str::to_lowercase).collect();
                if toks.is_empty() || toks.iter().all(|w| stop.contains(w)) {
                    prunable += 1;
                }
            }
        }
    }
    let stats = d.index.cells().stats();
    let represented: usize = d.index.cells().centroid_meta().iter().map(|m| m.multiplicity).sum();
    let native_tables = corpus_tables(&d.corpus.docs).len();
    ensure(stats.tables >= native_tables, || format!("{} tables indexed, {native_tables} native", stats.tables))?;
    ensure(represented == stats.cells_after_prune, || {
        format!("centroids represent {represented} cells, {} kept", stats.cells_after_prune)
    })?;

    // Count removals against an index of native tables only.
    let tables = corpus_tables(&d.corpus.docs);
    let sources: Vec<TableSource<'_>> = tables
        .iter()
        .map(|(id, doc, t)| TableSource {
            table_id: id,
            doc_id: doc,
            table: t,
        })
        .collect();
    let native = CellIndex::build(&sources, &d.encoder, &CellIndexConfig::default()).map_err(|e| e.to_string())?;
    let ns = native.stats();
    ensure(ns.cells_before_prune == total, || format!("{} cells seen, {total} in corpus", ns.cells_before_prune))?;
    ensure(ns.cells_before_prune - ns.cells_after_prune == prunable, || {
        format!(
            "{} vectors removed, {prunable} empty/stopword-only cells",
            ns.cells_before_prune - ns.cells_after_prune
        )
    })?;
    Ok(format!(
        "removed {prunable} of {total} cells (empty or stopword-only), reduction {:.1}%; full index {:.1}% over {} tables",
        100.0 * ns.prune_reduction(),
        100.0 * stats.prune_reduction(),
        stats.tables
    ))
}

// ------------------------------------------------------------ metric oracles

fn brute_ndcg(ranking: &[&str], gold: &BTreeSet<String>, k: usize) -> f64 {
    let gain = |list: &[&str]| {
        let mut seen = BTreeSet::new();
        let mut dcg = 0.0;
        for (i, r) in list.iter().enumerate().take(k) {
            if gold.contains(*r) && seen.insert(*r) {
                dcg += 1.0 / ((i + 2) as f64).log2();
            }
        }
        dcg
    };
    let ideal: Vec<&str> = gold.iter().map(String::as_str).collect();
    let idcg = gain(&ideal);
    if idcg == 0.0 {
        0.0
    } else {
        gain(ranking) / idcg
    }
}

fn permutations<'a>(pool: &[&'a str], len: usize, prefix: &mut Vec<&'a str>, out: &mut Vec<Vec<&'a str>>) {
    if prefix.len() == len {
        out.push(prefix.clone());
        return;
    }
    for &x in pool {
        if !prefix.contains(&x) {
            prefix.push(x);
            permutations(pool, len, prefix, out);
            prefix.pop();
        }
    }
}

fn metric_oracles() -> Outcome {
    let items = ["d0", "d1", "d2", "d3", "d4", "d5"];
    let mut rankings = Vec::new();
    for len in 0..=items.len() {
        permutations(&items, len, &mut Vec::new(), &mut rankings);
    }
    let mut golds = Vec::new();
    for mask in 1u32..(1 << items.len()) {
        if mask.count_ones() <= 3 {
            golds.push(
                items
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, s)| s.to_string())
                    .collect::<BTreeSet<_>>(),
            );
        }
    }
    let mut checks = 0usize;
    for gold in &golds {
        for r in &rankings {
            for k in 1..=7 {
                let n = ndcg_at_k(r, gold, k).map_err(|e| e.to_string())?;
                let want = brute_ndcg(r, gold, k);
                ensure((n - want).abs() < 1e-12, || format!("ndcg {r:?} {gold:?} k={k}: {n} vs {want}"))?;
                let rec = recall_at_k(r, gold, k).map_err(|e| e.to_string())?;
                let hits = gold.iter().filter(|g| r.iter().take(k).any(|x| x == g)).count();
                let want = hits as f64 / gold.len() as f64;
                ensure((rec - want).abs() < 1e-12, || format!("recall {r:?} {gold:?} k={k}: {rec} vs {want}"))?;
                checks += 2;
            }
        }
    }
    let spot = ndcg_at_k(&["x", "d1"], &BTreeSet::from(["d1".to_string()]), 10).map_err(|e| e.to_string())?;
    ensure((spot - 0.6309).abs() < 1e-4 && (spot - 1.0 / 3f64.log2()).abs() < 1e-6, || {
        format!("spot value {spot}")
    })?;
    Ok(format!(
        "{checks} metric evaluations over {} rankings x {} gold sets match; spot {spot:.6}",
        rankings.len(),
        golds.len()
    ))
}

// ---------------------------------------------------------- dilution trend

fn dilution_trend() -> Outcome {
    let rows = run_dilution_experiment(
        &DilutionConfig {
            seed: SEED,
            ..Default::default()
        },
        &encoder(),
    )
    .map_err(|e| e.to_string())?;
    let series = |sys: &str| -> Vec<(usize, f64)> {
        rows.iter()
            .filter(|r| r.system == sys)
            .map(|r| (r.width, r.recall_at_10))
            .collect()
    };
    let base = series(SINGLE_VECTOR);
    let cell = series(CELL_AWARE);
    let fmt = |s: &[(usize, f64)]| {
        s.iter()
            .map(|(w, r)| format!("{w}:{r:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let detail = format!("single-vector [{}] cell-aware [{}]", fmt(&base), fmt(&cell));
    let at = |s: &[(usize, f64)], w: usize| s.iter().find(|(x, _)| *x == w).map(|p| p.1).unwrap_or(f64::NAN);
    let drop = at(&base, 5) - at(&base, 50);
    ensure(drop >= 0.15, || format!("(a) baseline drop {drop:.3} < 0.15; {detail}"))?;
    let (lo, hi) = cell
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, r)| (lo.min(*r), hi.max(*r)));
    ensure(hi - lo <= 0.10, || format!("(b) cell-aware spread {:.3} > 0.10; {detail}", hi - lo))?;
    for (&(w, b), &(_, c)) in base.iter().zip(&cell) {
        ensure(w < 20 || c >= b, || format!("(b) width {w}: cell-aware {c:.3} < baseline {b:.3}; {detail}"))?;
    }
    Ok(format!("{detail}; baseline drop {drop:.3}, cell-aware spread {:.3}", hi - lo))
}

// ------------------------------------------------------- Type-B superiority

fn type_b_superiority(d: &Desk) -> Outcome {
    let scorer = LexicalScorer::with_stopwords();
    let ctx = EvalContext {
        index: &d.index,
        encoder: &d.encoder,
        scorer: &scorer,
        options: SearchOptions::default(),
    };
    let report = evaluate(&ctx, &d.queries, &[System::Naive, System::TopoTable, System::Topo]).map_err(|e| e.to_string())?;
    let b = |sys: &str| {
        report
            .system(sys)
            .and_then(|s| s.per_type.get(QueryType::B.as_str()))
            .map(|m| m.ndcg_at_10)
            .unwrap_or(f64::NAN)
    };
    let (naive, table, topo) = (b("naive"), b("topo-table"), b("topo"));
    ensure(topo >= naive + 0.10, || format!("topo {topo:.3} < naive {naive:.3} + 0.10"))?;
    Ok(format!(
        "Type-B nDCG@10: topo {topo:.3}, table route alone {table:.3}, naive {naive:.3} (margin {:.3})",
        topo - naive
    ))
}

// ------------------------------------------------------------- determinism

fn determinism(d: &Desk) -> Outcome {
    let again = generate_corpus(&CorpusSpec {
        seed: SEED,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    ensure(corpus_to_string(&again.docs) == corpus_to_string(&d.corpus.docs), || "corpus bytes differ".into())?;
    ensure(
        serde_json::to_string(&again.gold).ok() == serde_json::to_string(&d.corpus.gold).ok(),
        || "gold bytes differ".into(),
    )?;
    let q2 = generate_queries(&again.docs, &again.gold, QueryCounts::default(), SEED).map_err(|e| e.to_string())?;
    ensure(q2 == d.queries, || "queries differ".into())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut snapshots = Vec::new();
    for run in 0..2 {
        let enc = encoder();
        let idx = TopoIndex::build(again.docs.clone(), &enc, IndexConfig::default()).map_err(|e| e.to_string())?;
        let dir = tmp.path().join(format!("run{run}"));
        let m = Manifest::describe(&idx, EmbedderInfo::hashed(&EmbedderConfig::default()), 0);
        save_index(&dir, &idx, &m).map_err(|e| e.to_string())?;
        let files: HashMap<String, Vec<u8>> = index_file_sizes(&dir)
            .map_err(|e| e.to_string())?
            .keys()
            .map(|f| (f.clone(), std::fs::read(dir.join(f)).unwrap_or_default()))
            .collect();
        let scorer = LexicalScorer::with_stopwords();
        let ctx = EvalContext {
            index: &idx,
            encoder: &enc,
            scorer: &scorer,
            options: SearchOptions::default(),
        };
        let report = evaluate(&ctx, &q2, &System::ALL).map_err(|e| e.to_string())?;
        snapshots.push((files, serde_json::to_string(&report).map_err(|e| e.to_string())?));
    }
    ensure(snapshots[0].0 == snapshots[1].0, || "index files differ between runs".into())?;
    ensure(snapshots[0].1 == snapshots[1].1, || "eval reports differ between runs".into())?;
    Ok(format!(
        "corpus, gold, queries, {} index files and eval report identical across runs",
        snapshots[0].0.len()
    ))
}

// -------------------------------------------------------------- round-trips

fn round_trips(d: &Desk) -> Outcome {
    let text = corpus_to_string(&d.corpus.docs);
    let parsed = parse_corpus_str(&text).map_err(|e| e.to_string())?;
    ensure(parsed == d.corpus.docs, || "parsed corpus differs".into())?;
    ensure(corpus_to_string(&parsed) == text, || "re-serialized corpus differs".into())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = Manifest::describe(&d.index, EmbedderInfo::hashed(&EmbedderConfig::default()), 0);
    save_index(tmp.path(), &d.index, &m).map_err(|e| e.to_string())?;
    let (loaded, lm) = load_index(tmp.path()).map_err(|e| e.to_string())?;
    ensure(loaded == d.index, || "loaded index differs".into())?;
    ensure(lm == m, || "loaded manifest differs".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut sample = d.queries.clone();
    sample.shuffle(&mut rng);
    let scorer = LexicalScorer::with_stopwords();
    for q in sample.iter().take(20) {
        let a = d.index.search(&q.qid, &q.text, &d.encoder, &scorer, &SearchOptions::default());
        let b = loaded.search(&q.qid, &q.text, &d.encoder, &scorer, &SearchOptions::default());
        ensure(a.map_err(|e| e.to_string())? == b.map_err(|e| e.to_string())?, || {
            format!("{}: results differ after reload", q.qid)
        })?;
    }
    Ok(format!("{} docs and the full index round-trip; reloaded search identical", parsed.len()))
}

fn main() {
    let checks: Vec<(&str, Duration, Box<dyn FnOnce(&Desk) -> Outcome>)> = vec![
        ("SDS oracle", Duration::from_secs(1), Box::new(|_| sds_oracle())),
        ("Routing semantics", Duration::from_secs(5), Box::new(|_| routing_semantics())),
        ("MaxSim correctness", Duration::from_secs(10), Box::new(|_| maxsim_correctness())),
        ("Dedup invariance", Duration::from_secs(10), Box::new(dedup_invariance)),
        ("PQ fidelity", Duration::from_secs(30), Box::new(pq_exact_regime)),
        ("Compression ratio", Duration::from_secs(60), Box::new(compression_ratio)),
        ("Pruning accounting", Duration::from_secs(60), Box::new(pruning_accounting)),
        ("Metric oracles", Duration::from_secs(5), Box::new(|_| metric_oracles())),
        ("Dilution trend", Duration::from_secs(120), Box::new(|_| dilution_trend())),
        ("Type-B superiority", Duration::from_secs(120), Box::new(type_b_superiority)),
        ("Determinism", Duration::from_secs(120), Box::new(determinism)),
        ("Round-trips", Duration::from_secs(120), Box::new(round_trips)),
    ];
    let setup = Instant::now();
    let d = desk();
    println!(
        "desk corpus: {} docs, {} queries, built in {:.2}s",
        d.corpus.docs.len(),
        d.queries.len(),
        setup.elapsed().as_secs_f64()
    );
    let mut failed = 0;
    for (name, budget, check) in checks {
        let start = Instant::now();
        let outcome = check(&d);
        let took = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if took <= budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {:.2}s, budget {:.0}s", took.as_secs_f64(), budget.as_secs_f64()))
            }
        });
        match outcome {
            Ok(msg) => println!("[PASS] {name} ({:.2}s): {msg}", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {name} ({:.2}s): {msg}", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
