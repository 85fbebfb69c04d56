//! Topology-aware retrieval over mixed narrative and tabular corpora.
//!
//! Documents are segmented by a structural-density router. Narrative spans
//! go to a single-vector dense index; tables (native or recovered from
//! text) go to a cell-level late-interaction index compressed with
//! centroid deduplication and 4-bit product quantization. The two candidate
//! lists are min-max normalized, fused, and reranked.

pub mod cells;
pub mod dense;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod model;
pub mod pipeline;
pub mod router;
pub mod store;

pub use cells::{CellIndex, CellIndexConfig, SearchMode};
pub use dense::DenseIndex;
pub use embed::{EmbedderConfig, Embedding, Encoder, HashEncoder, LookupEncoder};
pub use error::{Error, Result};
pub use fusion::{Candidate, CrossScorer, ExternalScorer, LexicalScorer, RouteTag};
pub use model::{Block, BlockRef, Document, Query, QueryType, Table};
pub use pipeline::{IndexConfig, RouteSelect, SearchOptions, TopoIndex};
pub use router::{Route, RouterConfig};
pub use store::{load_index, save_index, Manifest};
