use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use toporag::eval::gen::{generate_corpus, generate_queries, CorpusSpec, QueryCounts};
use toporag::pipeline::table_query_vectors;
use toporag::{EmbedderConfig, HashEncoder, IndexConfig, LexicalScorer, SearchMode, SearchOptions, TopoIndex};

fn search(c: &mut Criterion) {
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let queries = generate_queries(&corpus.docs, &corpus.gold, QueryCounts::default(), 42).unwrap();
    let enc = HashEncoder::new(EmbedderConfig::default()).unwrap();
    let index = TopoIndex::build(corpus.docs.clone(), &enc, IndexConfig::default()).unwrap();
    let scorer = LexicalScorer::with_stopwords();
    let b_query = queries.iter().find(|q| q.qid.starts_with("qB")).unwrap();
    let qv = table_query_vectors(&b_query.text, &enc).unwrap();

    let mut g = c.benchmark_group("search");
    for mode in [SearchMode::Exact, SearchMode::Pq] {
        g.bench_function(format!("tables/{}", mode.as_str()), |b| {
            b.iter(|| index.cells().search_tables(black_box(&qv), 20, mode).unwrap())
        });
        let opts = SearchOptions {
            mode,
            ..Default::default()
        };
        g.bench_function(format!("pipeline/{}", mode.as_str()), |b| {
            b.iter(|| {
                index
                    .search(&b_query.qid, black_box(&b_query.text), &enc, &scorer, &opts)
                    .unwrap()
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("index");
    g.sample_size(10);
    g.bench_function("build/200-docs", |b| {
        b.iter(|| TopoIndex::build(corpus.docs.clone(), &enc, IndexConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, search);
criterion_main!(benches);
