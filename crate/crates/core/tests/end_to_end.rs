use std::collections::BTreeSet;
use std::fs;

use toporag::eval::gen::{generate_corpus, generate_queries, CorpusSpec, QueryCounts};
use toporag::eval::{evaluate, EvalContext, System};
use toporag::store::{EmbedderInfo, INDEX_FILES};
use toporag::{
    load_index, save_index, EmbedderConfig, Error, HashEncoder, IndexConfig, LexicalScorer, Manifest, RouteSelect,
    RouteTag, SearchOptions, TopoIndex,
};

fn small() -> (Vec<toporag::Document>, Vec<toporag::Query>) {
    let spec = CorpusSpec {
        n_docs: 40,
        seed: 7,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).unwrap();
    let queries = generate_queries(&corpus.docs, &corpus.gold, QueryCounts { a: 8, b: 8, c: 4 }, 7).unwrap();
    (corpus.docs, queries)
}

#[test]
fn gold_docs_are_retrieved_for_table_questions() {
    let (docs, queries) = small();
    let enc = HashEncoder::new(EmbedderConfig::default()).unwrap();
    let index = TopoIndex::build(docs, &enc, IndexConfig::default()).unwrap();
    let scorer = LexicalScorer::with_stopwords();
    let mut found = 0;
    let b: Vec<_> = queries.iter().filter(|q| q.qid.starts_with("qB")).collect();
    for q in &b {
        let hits = index.search(&q.qid, &q.text, &enc, &scorer, &SearchOptions::default()).unwrap();
        assert!(hits.len() <= 20);
        let docs: BTreeSet<&str> = hits.iter().take(10).map(|h| h.doc_id.as_str()).collect();
        if q.gold_doc_ids.iter().any(|g| docs.contains(g.as_str())) {
            found += 1;
        }
    }
    assert!(found * 10 >= b.len() * 8, "{found}/{}", b.len());
}

#[test]
fn forced_routes_only_return_their_tag() {
    let (docs, queries) = small();
    let enc = HashEncoder::new(EmbedderConfig::default()).unwrap();
    let index = TopoIndex::build(docs, &enc, IndexConfig::default()).unwrap();
    let scorer = LexicalScorer::with_stopwords();
    for (route, tag) in [(RouteSelect::Text, RouteTag::A), (RouteSelect::Table, RouteTag::B)] {
        let opts = SearchOptions {
            route,
            ..Default::default()
        };
        for q in &queries {
            let hits = index.search(&q.qid, &q.text, &enc, &scorer, &opts).unwrap();
            assert!(hits.iter().all(|h| h.route == tag));
        }
    }
}

#[test]
fn saved_index_searches_like_the_original() {
    let (docs, queries) = small();
    let enc = HashEncoder::new(EmbedderConfig::default()).unwrap();
    let index = TopoIndex::build(docs, &enc, IndexConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest::describe(&index, EmbedderInfo::hashed(enc.config()), 0);
    save_index(dir.path(), &index, &manifest).unwrap();
    for f in INDEX_FILES {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let (loaded, m) = load_index(dir.path()).unwrap();
    assert_eq!(m, manifest);

    let scorer = LexicalScorer::with_stopwords();
    let ctx = |idx| EvalContext {
        index: idx,
        encoder: &enc,
        scorer: &scorer,
        options: SearchOptions::default(),
    };
    let a = evaluate(&ctx(&index), &queries, &System::ALL).unwrap();
    let b = evaluate(&ctx(&loaded), &queries, &System::ALL).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn corrupted_files_are_rejected() {
    let (docs, _) = small();
    let enc = HashEncoder::new(EmbedderConfig::default()).unwrap();
    let index = TopoIndex::build(docs, &enc, IndexConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest::describe(&index, EmbedderInfo::hashed(enc.config()), 0);
    save_index(dir.path(), &index, &manifest).unwrap();

    let codebook = dir.path().join("codebook.bin");
    let bytes = fs::read(&codebook).unwrap();
    fs::write(&codebook, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_index(dir.path()).is_err());
    fs::write(&codebook, &bytes).unwrap();
    assert!(load_index(dir.path()).is_ok());

    fs::remove_file(dir.path().join("manifest.json")).unwrap();
    assert!(matches!(load_index(dir.path()), Err(Error::NotAnIndex(_))));
}
