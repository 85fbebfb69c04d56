//! `toporag`: generate corpora, build and query indexes, run evaluations.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use toporag::cells::PqConfig;
use toporag::embed::file::load_external_embeddings;
use toporag::eval::dilution::{dilution_csv, run_dilution_experiment, DilutionConfig};
use toporag::eval::gen::{generate_corpus, generate_queries, CorpusSpec, GoldMeta, QueryCounts};
use toporag::eval::{evaluate, measure_latency, EvalContext, LatencyStats, System};
use toporag::model::{parse_corpus, parse_queries, write_corpus, write_queries};
use toporag::pipeline::{index_texts, linearize, query_texts};
use toporag::store::{index_file_sizes, EmbedderInfo};
use toporag::{
    load_index, save_index, Candidate, CellIndexConfig, CrossScorer, Document, EmbedderConfig, Encoder, Error,
    ExternalScorer, HashEncoder, IndexConfig, LexicalScorer, LookupEncoder, Manifest, Query, RouteSelect,
    RouterConfig, SearchMode, SearchOptions, TopoIndex,
};

const CORPUS_FILE: &str = "corpus.jsonl";
const GOLD_FILE: &str = "gold.json";

#[derive(Parser)]
#[command(name = "toporag", version, about = "Topology-aware retrieval over mixed text and tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus (corpus.jsonl + gold.json).
    GenCorpus(GenCorpusArgs),
    /// Generate Type A/B/C queries with gold labels for a generated corpus.
    GenQueries(GenQueriesArgs),
    /// List every text an external embedder must cover, as JSONL.
    ExportTexts(ExportTextsArgs),
    /// Build an index directory from a corpus.
    Index(IndexArgs),
    /// Run one query and print ranked JSONL results.
    Search(SearchArgs),
    /// Score every system on a query set.
    Eval(EvalArgs),
    /// Recall of single-vector vs cell-aware retrieval as tables widen.
    Dilution(DilutionArgs),
    /// Query latency percentiles and on-disk index size.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 200)]
    docs: usize,
    #[arg(long, env = "TOPO_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    narrative_fraction: f64,
    #[arg(long, default_value_t = 0.15)]
    empty_cell_rate: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenQueriesArgs {
    /// Directory written by gen-corpus.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 40)]
    type_a: usize,
    #[arg(long, default_value_t = 40)]
    type_b: usize,
    #[arg(long, default_value_t = 20)]
    type_c: usize,
    #[arg(long, env = "TOPO_SEED", default_value_t = 42)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RouterArgs {
    #[arg(long, default_value_t = 0.4)]
    tau: f64,
    #[arg(long, default_value_t = 64)]
    window: usize,
    #[arg(long, default_value_t = 32)]
    stride: usize,
}

impl RouterArgs {
    fn config(&self) -> RouterConfig {
        RouterConfig {
            tau: self.tau,
            window_tokens: self.window,
            stride_tokens: self.stride,
        }
    }
}

#[derive(Args)]
struct ExportTextsArgs {
    /// Corpus file, or a directory holding corpus.jsonl.
    #[arg(long)]
    corpus: PathBuf,
    /// Also export the texts these queries are encoded from.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Leave out the whole-document texts the naive baseline encodes.
    #[arg(long)]
    no_baseline: bool,
    #[command(flatten)]
    router: RouterArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    /// Corpus file, or a directory holding corpus.jsonl.
    #[arg(long)]
    corpus: PathBuf,
    /// Index directory to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    router: RouterArgs,
    /// PQ subspaces; must divide the embedding dim.
    #[arg(long, default_value_t = 16)]
    pq_m: usize,
    #[arg(long, default_value_t = 25)]
    pq_iters: usize,
    /// PQ k-means seed.
    #[arg(long, env = "TOPO_SEED", default_value_t = 42)]
    seed: u32,
    #[arg(long)]
    no_dedup: bool,
    /// Dim of the built-in featurizer.
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    hash_seed: u64,
    /// TOPOEMB1 file keyed by text, replacing the built-in featurizer.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// TOPOEMB1 file covering the query texts (required for indexes built
    /// from external embeddings).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// auto, text, table or both.
    #[arg(long, default_value = "auto")]
    route: RouteSelect,
    /// exact or pq.
    #[arg(long, default_value = "pq")]
    mode: SearchMode,
    #[arg(long, default_value_t = 20)]
    k_dense: usize,
    #[arg(long, default_value_t = 20)]
    k_table: usize,
    /// lexical or external.
    #[arg(long, default_value = "lexical")]
    scorer: String,
    /// Command line of the external scorer.
    #[arg(long)]
    scorer_cmd: Option<String>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: QueryArgs,
    #[arg(long)]
    query: String,
    #[arg(long, default_value = "q")]
    qid: String,
    /// Results to print.
    #[arg(long, default_value_t = 20)]
    k: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: QueryArgs,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 20)]
    final_k: usize,
    /// Comma-separated subset of naive, topo-text, topo-table, topo-fused, topo.
    #[arg(long, value_delimiter = ',')]
    systems: Option<Vec<System>>,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: QueryArgs,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 20)]
    final_k: usize,
}

#[derive(Args)]
struct DilutionArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20, 30, 40, 50])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 40)]
    tables: usize,
    #[arg(long, default_value_t = 40)]
    queries: usize,
    #[arg(long, default_value_t = 6)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "exact")]
    mode: SearchMode,
    #[arg(long, env = "TOPO_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A bad combination of otherwise well-formed arguments.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::UnknownMode(_) | Error::InvalidK | Error::CorpusTooSmall(_) => 1,
                Error::EmptyTrainingSet | Error::Scorer(_) => 3,
                _ => 2,
            };
        }
        if cause.is::<io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::GenQueries(a) => gen_queries(a),
        Command::ExportTexts(a) => export_texts(a),
        Command::Index(a) => index(a),
        Command::Search(a) => search(a),
        Command::Eval(a) => eval(a),
        Command::Dilution(a) => dilution(a),
        Command::Bench(a) => bench(a),
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn corpus_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(CORPUS_FILE)
    } else {
        p.to_path_buf()
    }
}

fn read_corpus(p: &Path) -> Result<Vec<Document>> {
    let path = corpus_path(p);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    parse_corpus(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_queries(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let spec = CorpusSpec {
        n_docs: a.docs,
        narrative_fraction: a.narrative_fraction,
        empty_cell_rate: a.empty_cell_rate,
        seed: a.seed,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut bytes = Vec::new();
    write_corpus(&mut bytes, &corpus.docs)?;
    write_output(Some(&a.out.join(CORPUS_FILE)), &bytes)?;
    write_output(Some(&a.out.join(GOLD_FILE)), &pretty_json(&corpus.gold)?)?;
    log::info!("wrote {} documents to {}", corpus.docs.len(), a.out.display());
    Ok(())
}

fn gen_queries(a: GenQueriesArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let gold_path = a.corpus.join(GOLD_FILE);
    let gold_bytes = fs::read(&gold_path).with_context(|| format!("opening {}", gold_path.display()))?;
    let gold: GoldMeta =
        serde_json::from_slice(&gold_bytes).with_context(|| format!("reading {}", gold_path.display()))?;
    let counts = QueryCounts {
        a: a.type_a,
        b: a.type_b,
        c: a.type_c,
    };
    let queries = generate_queries(&docs, &gold, counts, a.seed)?;
    let mut bytes = Vec::new();
    write_queries(&mut bytes, &queries)?;
    write_output(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct TextRecord<'a> {
    id: &'a str,
    text: &'a str,
}

fn export_texts(a: ExportTextsArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let cfg = IndexConfig {
        router: a.router.config(),
        ..Default::default()
    };
    let mut texts = index_texts(&docs, &cfg)?;
    if !a.no_baseline {
        texts.extend(docs.iter().map(linearize));
    }
    if let Some(q) = &a.queries {
        for query in read_queries(q)? {
            texts.extend(query_texts(&query.text)?);
        }
    }
    let mut bytes = Vec::new();
    for t in &texts {
        serde_json::to_writer(&mut bytes, &TextRecord { id: t, text: t })?;
        bytes.push(b'\n');
    }
    log::info!("{} distinct texts", texts.len());
    write_output(a.out.as_deref(), &bytes)
}

fn created_at() -> Result<u64> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("SOURCE_DATE_EPOCH {v:?} is not a number of seconds"))),
        Err(_) => Ok(0),
    }
}

fn lookup_encoder(path: &Path, dim: Option<usize>) -> Result<LookupEncoder> {
    let vectors = load_external_embeddings(path, dim)?;
    let dim = match dim.or_else(|| vectors.values().next().map(|v| v.dim())) {
        Some(d) => d,
        None => return Err(usage(format!("{} holds no vectors", path.display()))),
    };
    Ok(LookupEncoder::new(dim, vectors)?)
}

fn index(a: IndexArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let config = IndexConfig {
        router: a.router.config(),
        cells: CellIndexConfig {
            pq: PqConfig {
                m: a.pq_m,
                seed: a.seed,
                iters: a.pq_iters,
            },
            dedup: !a.no_dedup,
            ..Default::default()
        },
    };
    let (index, embedder) = match &a.embeddings {
        Some(path) => {
            let enc = lookup_encoder(path, None)?;
            (TopoIndex::build(docs, &enc, config)?, EmbedderInfo::External)
        }
        None => {
            let cfg = EmbedderConfig {
                dim: a.dim,
                char_ngram: 3,
                hash_seed: a.hash_seed,
            };
            let enc = HashEncoder::new(cfg)?;
            (TopoIndex::build(docs, &enc, config)?, EmbedderInfo::hashed(&cfg))
        }
    };
    let manifest = Manifest::describe(&index, embedder, created_at()?);
    save_index(&a.out, &index, &manifest)?;
    eprintln!(
        "indexed {} narrative blocks and {} tables ({} -> {} cells, {} centroids) into {}",
        manifest.counts.narrative_blocks,
        manifest.counts.tables,
        manifest.counts.cells_before_prune,
        manifest.counts.cells_after_prune,
        manifest.counts.centroids,
        a.out.display()
    );
    Ok(())
}

/// A loaded index with what it takes to query it.
struct Session {
    index: TopoIndex,
    encoder: Box<dyn Encoder>,
    scorer: Box<dyn CrossScorer>,
    options: SearchOptions,
}

impl Session {
    fn open(q: &QueryArgs, final_k: usize) -> Result<Self> {
        if final_k == 0 || q.k_dense == 0 || q.k_table == 0 {
            return Err(usage("result counts must be at least 1"));
        }
        let (index, manifest) = load_index(&q.index)?;
        let encoder: Box<dyn Encoder> = match (&manifest.embedder, &q.embeddings) {
            (EmbedderInfo::Hashed { char_ngram, hash_seed }, None) => Box::new(HashEncoder::new(EmbedderConfig {
                dim: manifest.dim,
                char_ngram: *char_ngram,
                hash_seed: *hash_seed,
            })?),
            (EmbedderInfo::Hashed { .. }, Some(_)) => {
                return Err(usage("index uses the built-in featurizer; drop --embeddings"))
            }
            (EmbedderInfo::External, Some(path)) => Box::new(lookup_encoder(path, Some(manifest.dim))?),
            (EmbedderInfo::External, None) => {
                return Err(usage("index was built from external embeddings; pass --embeddings"))
            }
        };
        let scorer: Box<dyn CrossScorer> = match (q.scorer.as_str(), &q.scorer_cmd) {
            ("lexical", None) => Box::new(LexicalScorer::with_stopwords()),
            ("external", Some(cmd)) => Box::new(ExternalScorer::from_command_line(cmd)?),
            ("external", None) => return Err(usage("--scorer external needs --scorer-cmd")),
            ("lexical", Some(_)) => return Err(usage("--scorer-cmd only applies to --scorer external")),
            (other, _) => return Err(usage(format!("unknown scorer {other:?} (expected lexical or external)"))),
        };
        Ok(Session {
            index,
            encoder,
            scorer,
            options: SearchOptions {
                route: q.route,
                mode: q.mode,
                k_text: q.k_dense,
                k_table: q.k_table,
                final_k,
            },
        })
    }

    fn context(&self) -> EvalContext<'_> {
        EvalContext {
            index: &self.index,
            encoder: self.encoder.as_ref(),
            scorer: self.scorer.as_ref(),
            options: self.options,
        }
    }
}

#[derive(Serialize)]
struct Ranked<'a> {
    rank: usize,
    #[serde(flatten)]
    candidate: &'a Candidate,
}

fn search(a: SearchArgs) -> Result<()> {
    let s = Session::open(&a.common, a.k)?;
    let hits = s
        .index
        .search(&a.qid, &a.query, s.encoder.as_ref(), s.scorer.as_ref(), &s.options)?;
    let mut bytes = Vec::new();
    for (i, c) in hits.iter().enumerate() {
        serde_json::to_writer(&mut bytes, &Ranked { rank: i + 1, candidate: c })?;
        bytes.push(b'\n');
    }
    write_output(None, &bytes)
}

fn eval(a: EvalArgs) -> Result<()> {
    let s = Session::open(&a.common, a.final_k)?;
    let queries = read_queries(&a.queries)?;
    let systems = a.systems.unwrap_or_else(|| System::ALL.to_vec());
    let mut report = evaluate(&s.context(), &queries, &systems)?;
    report.index_bytes = index_file_sizes(&a.common.index)?;
    if let Some(csv) = &a.csv {
        write_output(Some(csv), report.to_csv().as_bytes())?;
    }
    write_output(a.out.as_deref(), &pretty_json(&report)?)
}

#[derive(Serialize)]
struct BenchReport {
    latency: LatencyStats,
    index_bytes: std::collections::BTreeMap<String, u64>,
    total_index_bytes: u64,
}

fn bench(a: BenchArgs) -> Result<()> {
    let s = Session::open(&a.common, a.final_k)?;
    let queries = read_queries(&a.queries)?;
    let latency = measure_latency(&s.context(), &queries)?;
    let index_bytes = index_file_sizes(&a.common.index)?;
    let total_index_bytes = index_bytes.values().sum();
    write_output(
        None,
        &pretty_json(&BenchReport {
            latency,
            index_bytes,
            total_index_bytes,
        })?,
    )
}

fn dilution(a: DilutionArgs) -> Result<()> {
    let cfg = DilutionConfig {
        widths: a.widths,
        tables_per_width: a.tables,
        queries_per_width: a.queries,
        rows_per_table: a.rows,
        k: a.k,
        mode: a.mode,
        seed: a.seed,
    };
    let rows = run_dilution_experiment(&cfg, &HashEncoder::new(EmbedderConfig::default())?)?;
    write_output(a.out.as_deref(), dilution_csv(&rows).as_bytes())
}
