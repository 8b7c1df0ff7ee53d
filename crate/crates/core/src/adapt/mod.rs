//! Domain-adaptation data builders: generated-query pairs with in-batch
//! negatives, hard-negative mining over one or more indexes, and
//! cross-encoder margin triplets.

pub mod genq;
pub mod gpl;
pub mod mining;

pub use genq::{
    build_genq_pairs, genq_batches, synth_query_stub, GeneratedQueries, GeneratedQuerySet, GenqBatch, GenqPair,
    DEFAULT_Q_PER_PASSAGE,
};
pub use gpl::{build_gpl_triplets, read_ce_scores, parse_ce_scores, CeScores, GplTriplet};
pub use mining::{mine_hard_negatives, positives_from_qrels, MinedNegatives, DEFAULT_DEPTH};
