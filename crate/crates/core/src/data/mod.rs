//! Data model and IO: embeddings, corpora, judgments, runs, manifests, and
//! the seeded RNG.

pub(crate) mod binio;
pub mod corpus;
pub mod embio;
pub mod manifest;
pub mod matrix;
pub mod qrels;
pub mod rng;
pub mod run;
pub mod topk;

pub use binio::id_block_len;
pub use corpus::{read_jsonl, write_jsonl, Document};
pub use embio::{read_embeddings, write_embeddings};
pub use manifest::{CompressionParams, IndexKind, IndexManifest};
pub use matrix::{sequential_ids, EmbeddingMatrix};
pub use qrels::{read_qrels, write_qrels, Qrels, QrelsFormat};
pub use run::{read_run, write_run, RunResult};
pub use topk::Hit;
