use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use std::hint::black_box;

use toporag::eval::gen::{generate_corpus, CorpusSpec};
use toporag::router::{segment, tokenize, TokenStats};
use toporag::RouterConfig;

const PROSE: &str = "The quality contract with Huerta Segura sets a minimum Brix of nine for Verna lemons \
                     shipped to Mercadona during the spring campaign, with penalties for late deliveries.";
const GRID: &str = "| Variety | Week | Price/Kg | Discount |\n| --- | --- | --- | --- |\n\
                    | Verna | 42 | 0.85 | 5% |\n| Eureka | 42 | 0.50 | 0% |\n| Fino | 43 | €0.80 | 2% |";

fn sds(c: &mut Criterion) {
    let mut g = c.benchmark_group("sds");
    for (name, text) in [("prose", PROSE), ("grid", GRID)] {
        g.throughput(Throughput::Bytes(text.len() as u64));
        g.bench_function(name, |b| b.iter(|| TokenStats::from_tokens(&tokenize(black_box(text))).density()));
    }
    g.finish();
}

fn segment_corpus(c: &mut Criterion) {
    let docs = generate_corpus(&CorpusSpec {
        n_docs: 50,
        ..Default::default()
    })
    .unwrap()
    .docs;
    let cfg = RouterConfig::default();
    c.bench_function("segment/50-docs", |b| {
        b.iter(|| docs.iter().map(|d| segment(black_box(d), &cfg).len()).sum::<usize>())
    });
}

criterion_group!(benches, sds, segment_corpus);
criterion_main!(benches);
