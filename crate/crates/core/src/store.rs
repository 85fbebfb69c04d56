//! On-disk index directory.
//!
//! ```text
//! manifest.json   configuration, counts, corpus checksum
//! corpus.jsonl    the indexed documents
//! dense.vec       TOPOEMB1, one record per narrative block (id = block ref)
//! cells.meta      JSON: tables -> centroid ids, centroid -> member cells, stats
//! cells.vec       TOPOEMB1, full-precision centroids (id = centroid index)
//! codebook.bin    "TOPOPQ1\0", u32 dim, u32 m, u32 k, u32 seed, m*k*(dim/m) f32
//! codes.bin       u64 count, then ceil(m/2) bytes per centroid, low nibble first
//! ```
//!
//! All integers are little-endian, all floats IEEE-754 binary32.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cells::{
    CellIndex, CellIndexConfig, CellIndexStats, CentroidMeta, PqCodebook, PqConfig, TableEntry, PQ_K,
};
use crate::dense::DenseIndex;
use crate::embed::file::{read_vectors, write_vectors};
use crate::embed::{l2_norm, EmbedderConfig, Embedding};
use crate::error::{Error, Result};
use crate::model::{corpus_to_string, parse_corpus, BlockRef};
use crate::pipeline::{IndexConfig, TopoIndex};
use crate::router::RouterConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const CODEBOOK_MAGIC: &[u8; 8] = b"TOPOPQ1\0";

pub const MANIFEST: &str = "manifest.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const DENSE: &str = "dense.vec";
pub const CELLS_META: &str = "cells.meta";
pub const CELLS_VEC: &str = "cells.vec";
pub const CODEBOOK: &str = "codebook.bin";
pub const CODES: &str = "codes.bin";

pub const INDEX_FILES: [&str; 7] = [MANIFEST, CORPUS, DENSE, CELLS_META, CELLS_VEC, CODEBOOK, CODES];

/// Stored vectors must be unit length within this tolerance.
const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderInfo {
    Hashed { char_ngram: usize, hash_seed: u64 },
    /// Vectors came from a TOPOEMB1 file; queries need one too.
    External,
}

impl EmbedderInfo {
    pub fn hashed(cfg: &EmbedderConfig) -> Self {
        EmbedderInfo::Hashed {
            char_ngram: cfg.char_ngram,
            hash_seed: cfg.hash_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqInfo {
    pub m: usize,
    pub k: usize,
    pub seed: u32,
    pub iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub narrative_blocks: usize,
    pub tables: usize,
    pub cells_before_prune: usize,
    pub cells_after_prune: usize,
    pub centroids: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dim: usize,
    pub tau: f64,
    pub window_tokens: usize,
    pub stride_tokens: usize,
    pub embedder: EmbedderInfo,
    pub pq: PqInfo,
    pub dedup: bool,
    /// Sorted.
    pub stopwords: Vec<String>,
    pub counts: Counts,
    pub corpus_sha256: String,
    /// Seconds since the Unix epoch; supplied by the caller so rebuilds can
    /// be byte-identical.
    pub created_at: u64,
}

impl Manifest {
    pub fn describe(index: &TopoIndex, embedder: EmbedderInfo, created_at: u64) -> Self {
        let cfg = index.config();
        let stats = index.cells().stats();
        let mut stopwords: Vec<String> = cfg.cells.stopwords.iter().cloned().collect();
        stopwords.sort();
        Manifest {
            format_version: FORMAT_VERSION,
            dim: index.dim(),
            tau: cfg.router.tau,
            window_tokens: cfg.router.window_tokens,
            stride_tokens: cfg.router.stride_tokens,
            embedder,
            pq: PqInfo {
                m: cfg.cells.pq.m,
                k: PQ_K,
                seed: cfg.cells.pq.seed,
                iters: cfg.cells.pq.iters,
            },
            dedup: cfg.cells.dedup,
            stopwords,
            counts: Counts {
                narrative_blocks: index.dense().len(),
                tables: stats.tables,
                cells_before_prune: stats.cells_before_prune,
                cells_after_prune: stats.cells_after_prune,
                centroids: stats.centroids,
            },
            corpus_sha256: sha256_hex(corpus_to_string(index.docs()).as_bytes()),
            created_at,
        }
    }

    pub fn index_config(&self) -> IndexConfig {
        IndexConfig {
            router: RouterConfig {
                tau: self.tau,
                window_tokens: self.window_tokens,
                stride_tokens: self.stride_tokens,
            },
            cells: CellIndexConfig {
                stopwords: self.stopwords.iter().cloned().collect(),
                pq: PqConfig {
                    m: self.pq.m,
                    seed: self.pq.seed,
                    iters: self.pq.iters,
                },
                dedup: self.dedup,
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CellsMeta {
    tables: Vec<TableEntry>,
    centroids: Vec<CentroidMeta>,
    stats: CellIndexStats,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes every index file into `dir`, creating it if needed. Refuses to
/// overwrite an index written by a different format version.
pub fn save_index(dir: &Path, index: &TopoIndex, manifest: &Manifest) -> Result<()> {
    let mpath = dir.join(MANIFEST);
    if let Ok(bytes) = fs::read(&mpath) {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        match serde_json::from_slice::<Version>(&bytes) {
            Ok(v) if v.format_version == FORMAT_VERSION => {}
            Ok(v) => {
                return Err(Error::format(
                    &mpath,
                    format!("existing index has format version {}, refusing to overwrite", v.format_version),
                ))
            }
            Err(e) => return Err(Error::format(&mpath, format!("existing manifest unreadable: {e}"))),
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dim = index.dim();

    write_file(&dir.join(CORPUS), corpus_to_string(index.docs()).as_bytes())?;

    let mut buf = Vec::new();
    let refs: Vec<String> = index.dense().entries().iter().map(|e| e.block_ref.to_string()).collect();
    write_vectors(
        &mut buf,
        dim,
        refs.iter()
            .zip(index.dense().entries())
            .map(|(r, e)| (r.as_str(), e.vector.as_slice())),
    )
    .map_err(|e| Error::io(dir.join(DENSE), e))?;
    write_file(&dir.join(DENSE), &buf)?;

    let cells = index.cells();
    let meta = CellsMeta {
        tables: cells.tables().to_vec(),
        centroids: cells.centroid_meta().to_vec(),
        stats: *cells.stats(),
    };
    let json = serde_json::to_vec(&meta).expect("cell metadata serializes");
    write_file(&dir.join(CELLS_META), &json)?;

    buf.clear();
    let ids: Vec<String> = (0..cells.centroids().len()).map(|i| i.to_string()).collect();
    write_vectors(
        &mut buf,
        dim,
        ids.iter().zip(cells.centroids()).map(|(i, v)| (i.as_str(), v.as_slice())),
    )
    .map_err(|e| Error::io(dir.join(CELLS_VEC), e))?;
    write_file(&dir.join(CELLS_VEC), &buf)?;

    let m = manifest.pq.m;
    buf.clear();
    buf.extend_from_slice(CODEBOOK_MAGIC);
    for v in [dim as u32, m as u32, PQ_K as u32, manifest.pq.seed] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(cb) = cells.codebook() {
        for x in cb.raw_centroids() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_file(&dir.join(CODEBOOK), &buf)?;

    buf.clear();
    buf.extend_from_slice(&(cells.centroids().len() as u64).to_le_bytes());
    buf.extend(pack_codes(cells.codes(), m));
    write_file(&dir.join(CODES), &buf)?;

    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(&mpath, format!("{json}\n").as_bytes())
}

/// Two codes per byte, the first in the low nibble; an odd `m` leaves the
/// last high nibble zero.
pub fn pack_codes(codes: &[u8], m: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(codes.len().div_ceil(2));
    for code in codes.chunks(m) {
        for pair in code.chunks(2) {
            out.push(pair[0] | pair.get(1).map_or(0, |hi| hi << 4));
        }
    }
    out
}

pub fn unpack_codes(packed: &[u8], m: usize, count: usize) -> Vec<u8> {
    let per = m.div_ceil(2);
    let mut out = Vec::with_capacity(count * m);
    for chunk in packed.chunks(per).take(count) {
        for s in 0..m {
            let b = chunk[s / 2];
            out.push(if s % 2 == 0 { b & 0x0f } else { b >> 4 });
        }
    }
    out
}

/// Loads and re-validates an index directory.
pub fn load_index(dir: &Path) -> Result<(TopoIndex, Manifest)> {
    let mpath = dir.join(MANIFEST);
    if !mpath.is_file() {
        return Err(Error::NotAnIndex(dir.to_path_buf()));
    }
    let manifest: Manifest = serde_json::from_slice(&read_file(&mpath)?)
        .map_err(|e| Error::format(&mpath, format!("malformed manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &mpath,
            format!("format version {}, this build reads {FORMAT_VERSION}", manifest.format_version),
        ));
    }
    if manifest.pq.k != PQ_K {
        return Err(Error::format(&mpath, format!("pq.k = {}, only {PQ_K} is supported", manifest.pq.k)));
    }
    let dim = manifest.dim;
    let counts = manifest.counts;

    let cpath = dir.join(CORPUS);
    let corpus = read_file(&cpath)?;
    if sha256_hex(&corpus) != manifest.corpus_sha256 {
        return Err(Error::format(&cpath, "checksum does not match the manifest"));
    }
    let docs = parse_corpus(BufReader::new(Cursor::new(corpus)))?;

    let dpath = dir.join(DENSE);
    let dense_file = read_vectors(Cursor::new(read_file(&dpath)?), &dpath)?;
    check_vectors(&dpath, dim, counts.narrative_blocks, &dense_file.records)?;
    let entries = dense_file
        .records
        .into_iter()
        .map(|(id, v)| {
            let r: BlockRef = id.parse().map_err(|_| Error::format(&dpath, format!("bad block ref {id:?}")))?;
            Ok((r, Embedding::from_unit(v)))
        })
        .collect::<Result<Vec<_>>>()?;
    let dense = DenseIndex::from_entries(dim, entries).map_err(|e| Error::format(&dpath, e.to_string()))?;

    let meta_path = dir.join(CELLS_META);
    let meta: CellsMeta = serde_json::from_slice(&read_file(&meta_path)?)
        .map_err(|e| Error::format(&meta_path, format!("malformed cell metadata: {e}")))?;
    if meta.centroids.len() != counts.centroids || meta.tables.len() != counts.tables {
        return Err(Error::format(&meta_path, "table or centroid count differs from the manifest"));
    }
    let stats = meta.stats;
    if stats.cells_before_prune != counts.cells_before_prune || stats.cells_after_prune != counts.cells_after_prune {
        return Err(Error::format(&meta_path, "cell counts differ from the manifest"));
    }

    let vpath = dir.join(CELLS_VEC);
    let cell_file = read_vectors(Cursor::new(read_file(&vpath)?), &vpath)?;
    check_vectors(&vpath, dim, counts.centroids, &cell_file.records)?;
    let mut centroids = Vec::with_capacity(cell_file.records.len());
    for (i, (id, v)) in cell_file.records.into_iter().enumerate() {
        if id != i.to_string() {
            return Err(Error::format(&vpath, format!("record {i} has id {id:?}")));
        }
        centroids.push(Embedding::from_unit(v));
    }

    let m = manifest.pq.m;
    let bpath = dir.join(CODEBOOK);
    let codebook = read_codebook(&bpath, &manifest)?;
    if codebook.is_none() != centroids.is_empty() {
        return Err(Error::format(&bpath, "codebook presence does not match the centroid count"));
    }

    let kpath = dir.join(CODES);
    let raw = read_file(&kpath)?;
    if raw.len() < 8 {
        return Err(Error::format(&kpath, "truncated header"));
    }
    let count = u64::from_le_bytes(raw[..8].try_into().expect("8 bytes"));
    if count != counts.centroids as u64 {
        return Err(Error::format(
            &kpath,
            format!("header counts {count} codes, manifest has {} centroids", counts.centroids),
        ));
    }
    let expected = counts.centroids * m.div_ceil(2);
    if raw.len() - 8 != expected {
        return Err(Error::format(&kpath, format!("{} code bytes, expected {expected}", raw.len() - 8)));
    }
    if m % 2 == 1 && raw[8..].chunks(m.div_ceil(2)).any(|c| c[c.len() - 1] >> 4 != 0) {
        return Err(Error::format(&kpath, "padding nibble is not zero"));
    }
    let codes = unpack_codes(&raw[8..], m, counts.centroids);

    let cells = CellIndex::from_parts(dim, meta.tables, centroids, meta.centroids, codebook, codes, stats)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    let index = TopoIndex::from_parts(docs, dense, cells, manifest.index_config())
        .map_err(|e| Error::format(dir, e.to_string()))?;
    Ok((index, manifest))
}

fn check_vectors(path: &Path, dim: usize, count: usize, records: &[(String, Vec<f32>)]) -> Result<()> {
    if records.len() != count {
        return Err(Error::format(path, format!("{} records, manifest says {count}", records.len())));
    }
    for (id, v) in records {
        if v.len() != dim {
            return Err(Error::format(path, format!("dim {} differs from manifest dim {dim}", v.len())));
        }
        let n = l2_norm(v);
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::format(path, format!("record {id:?} has norm {n}")));
        }
    }
    Ok(())
}

fn read_codebook(path: &Path, manifest: &Manifest) -> Result<Option<PqCodebook>> {
    let raw = read_file(path)?;
    if raw.len() < 24 || &raw[..8] != CODEBOOK_MAGIC {
        return Err(Error::format(path, "bad magic (expected TOPOPQ1)"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(raw[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (dim, m, k, seed) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20) as u32);
    if dim != manifest.dim || m != manifest.pq.m || k != PQ_K || seed != manifest.pq.seed {
        return Err(Error::format(
            path,
            format!("header (dim {dim}, m {m}, k {k}, seed {seed}) disagrees with the manifest"),
        ));
    }
    let body = &raw[24..];
    if body.is_empty() {
        return Ok(None);
    }
    if body.len() != dim * k * 4 {
        return Err(Error::format(path, format!("{} centroid bytes, expected {}", body.len(), dim * k * 4)));
    }
    let floats = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    PqCodebook::from_parts(dim, m, seed, floats)
        .map(Some)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Size in bytes of each index file present in `dir`.
pub fn index_file_sizes(dir: &Path) -> Result<BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    for name in INDEX_FILES {
        let p: PathBuf = dir.join(name);
        if let Ok(md) = fs::metadata(&p) {
            out.insert(name.to_string(), md.len());
        }
    }
    if out.is_empty() {
        return Err(Error::NotAnIndex(dir.to_path_buf()));
    }
    Ok(out)
}

/// Files the compressed table route needs to answer queries.
pub fn compressed_cell_files() -> HashSet<&'static str> {
    HashSet::from([CELLS_META, CODEBOOK, CODES])
}
