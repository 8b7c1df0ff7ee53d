//! Binary passage hashing: `h(p) = sign(p)` packed one bit per dimension,
//! Hamming candidate generation, and float-query reranking.

pub mod codes;
pub mod search;

pub use codes::{hash_encode, hash_vector, pack_bits, unpack_bits, BinaryCodeSet};
pub use search::{hamming, hamming_topk, rerank_dot, two_stage_search, Candidate, DEFAULT_K1};
