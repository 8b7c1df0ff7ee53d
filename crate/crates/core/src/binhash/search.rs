//! Two-stage binary retrieval: Hamming-distance candidate generation over
//! packed codes, then reranking by ⟨e(q), h(p)⟩ with the float query.

use std::cmp::Ordering;

use crate::binhash::codes::{hash_vector, unpack_signs, BinaryCodeSet};
use crate::data::topk::{sort_hits, Hit};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Default first-stage candidate depth.
pub const DEFAULT_K1: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub index: usize,
    pub distance: u32,
}

/// Number of differing bits.
#[inline]
pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: u32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum();
    ca.zip(cb)
        .map(|(x, y)| {
            let x = u64::from_le_bytes(x.try_into().unwrap());
            let y = u64::from_le_bytes(y.try_into().unwrap());
            (x ^ y).count_ones()
        })
        .sum::<u32>()
        + tail
}

fn scan_portable(query: &[u8], bits: &[u8], out: &mut [u32]) {
    for (d, code) in out.iter_mut().zip(bits.chunks_exact(query.len())) {
        *d = hamming(query, code);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn scan_popcnt(query: &[u8], bits: &[u8], out: &mut [u32]) {
    // Same code as the portable path; the feature lets `count_ones` lower to
    // the hardware instruction.
    for (d, code) in out.iter_mut().zip(bits.chunks_exact(query.len())) {
        *d = hamming(query, code);
    }
}

/// Hamming distance from `query` to every code in the corpus.
pub fn hamming_scan(query: &[u8], corpus: &BinaryCodeSet, out: &mut Vec<u32>) {
    out.clear();
    out.resize(corpus.len(), 0);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports popcnt.
            unsafe { scan_popcnt(query, corpus.bits(), out) };
            return;
        }
    }
    scan_portable(query, corpus.bits(), out);
}

/// The `min(k1, n)` codes closest to `query_code`, by ascending distance then
/// ascending id.
pub fn hamming_topk(query_code: &[u8], corpus: &BinaryCodeSet, k1: usize) -> Result<Vec<Candidate>> {
    let mut scratch = Vec::new();
    hamming_topk_with(query_code, corpus, k1, &mut scratch)
}

/// [`hamming_topk`] reusing a distance buffer across queries.
pub fn hamming_topk_with(
    query_code: &[u8],
    corpus: &BinaryCodeSet,
    k1: usize,
    distances: &mut Vec<u32>,
) -> Result<Vec<Candidate>> {
    if corpus.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if k1 == 0 {
        return Err(Error::InvalidParameter("k1 must be at least 1".into()));
    }
    if query_code.len() != corpus.bytes_per_code() {
        return Err(Error::DimensionMismatch {
            expected: corpus.d_bits(),
            found: query_code.len() * 8,
        });
    }
    hamming_scan(query_code, corpus, distances);
    let take = k1.min(corpus.len());

    // Distances are bounded by d_bits, so a histogram finds the cut-off.
    let mut hist = vec![0usize; corpus.d_bits() + 1];
    for &d in distances.iter() {
        hist[d as usize] += 1;
    }
    let mut cutoff = 0usize;
    let mut below = 0usize;
    while below + hist[cutoff] < take {
        below += hist[cutoff];
        cutoff += 1;
    }
    let cutoff = cutoff as u32;

    let mut out = Vec::with_capacity(take);
    let mut ties = Vec::new();
    for (index, &distance) in distances.iter().enumerate() {
        match distance.cmp(&cutoff) {
            Ordering::Less => out.push(Candidate { index, distance }),
            Ordering::Equal => ties.push(index),
            Ordering::Greater => {}
        }
    }
    let ids = corpus.ids();
    ties.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    out.extend(
        ties.into_iter()
            .take(take - below)
            .map(|index| Candidate { index, distance: cutoff }),
    );
    out.sort_by(|a, b| a.distance.cmp(&b.distance).then_with(|| ids[a.index].cmp(&ids[b.index])));
    Ok(out)
}

/// Scores candidates by ⟨query, h(p)⟩ and keeps the best `k`.
pub fn rerank_dot<T: Scalar>(
    query: &[T],
    candidates: &[Candidate],
    corpus: &BinaryCodeSet,
    k: usize,
) -> Result<Vec<Hit<T>>> {
    if query.len() != corpus.d_bits() {
        return Err(Error::DimensionMismatch {
            expected: corpus.d_bits(),
            found: query.len(),
        });
    }
    if k > candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the {} candidates",
            candidates.len()
        )));
    }
    let mut signs = vec![T::zero(); corpus.d_bits()];
    let mut hits = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.index >= corpus.len() {
            return Err(Error::UnknownCandidate(c.index));
        }
        unpack_signs(corpus.code(c.index), &mut signs);
        hits.push(Hit {
            index: c.index,
            score: dot(query, &signs),
        });
    }
    sort_hits(&mut hits, corpus.ids());
    hits.truncate(k);
    Ok(hits)
}

/// Hash the query, take `k1` Hamming candidates, rerank to `k` by dot product.
pub fn two_stage_search<T: Scalar>(query: &[T], corpus: &BinaryCodeSet, k: usize, k1: usize) -> Result<Vec<Hit<T>>> {
    let mut scratch = Vec::new();
    two_stage_search_with(query, corpus, k, k1, &mut scratch)
}

pub fn two_stage_search_with<T: Scalar>(
    query: &[T],
    corpus: &BinaryCodeSet,
    k: usize,
    k1: usize,
    distances: &mut Vec<u32>,
) -> Result<Vec<Hit<T>>> {
    if k > k1 {
        return Err(Error::InvalidParameter(format!("k = {k} must not exceed k1 = {k1}")));
    }
    let code = hash_vector(query)?;
    let candidates = hamming_topk_with(&code, corpus, k1, distances)?;
    rerank_dot(query, &candidates, corpus, k.min(candidates.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binhash::codes::{hash_encode, unpack_bits};
    use crate::data::matrix::{sequential_ids, EmbeddingMatrix};
    use crate::data::rng;
    use rand::Rng;

    fn random_codes(n: usize, d_bits: usize, seed: u64) -> BinaryCodeSet {
        let mut r = rng::seeded(seed);
        let bits = (0..n * d_bits / 8).map(|_| r.gen()).collect();
        BinaryCodeSet::new(d_bits, bits, sequential_ids("p", n)).unwrap()
    }

    #[test]
    fn distance_definition() {
        assert_eq!(hamming(&[0xAD], &[0x00]), 5);
        let a: Vec<u8> = (0..19).collect();
        let b: Vec<u8> = (0..19).map(|x| !x).collect();
        assert_eq!(hamming(&a, &b), 19 * 8);
    }

    #[test]
    fn exact_match_ranks_first() {
        let corpus = random_codes(200, 64, 1);
        let hits = hamming_topk(corpus.code(37), &corpus, 5).unwrap();
        assert_eq!(hits[0], Candidate { index: 37, distance: 0 });
        assert_eq!(hits.len(), 5);
        assert_eq!(hamming_topk(corpus.code(0), &corpus, 10_000).unwrap().len(), 200);
    }

    #[test]
    fn topk_matches_unpacked_bruteforce() {
        let corpus = random_codes(1000, 32, 2);
        let query = random_codes(1, 32, 3);
        let q = unpack_bits(query.code(0));
        let mut all: Vec<(u32, usize)> = (0..corpus.len())
            .map(|i| {
                let p = unpack_bits(corpus.code(i));
                (q.iter().zip(&p).filter(|(a, b)| a != b).count() as u32, i)
            })
            .collect();
        all.sort();
        for k1 in [1, 10, 57, 1000] {
            let got: Vec<(u32, usize)> = hamming_topk(query.code(0), &corpus, k1)
                .unwrap()
                .into_iter()
                .map(|c| (c.distance, c.index))
                .collect();
            assert_eq!(got, all[..k1].to_vec());
        }
    }

    #[test]
    fn signed_dot_equals_bits_minus_twice_hamming() {
        let corpus = random_codes(50, 8, 4);
        let mut a = vec![0.0f64; 8];
        let mut b = vec![0.0f64; 8];
        for i in 0..50 {
            for j in 0..50 {
                unpack_signs(corpus.code(i), &mut a);
                unpack_signs(corpus.code(j), &mut b);
                let h = hamming(corpus.code(i), corpus.code(j)) as f64;
                assert_eq!(dot(&a, &b), 8.0 - 2.0 * h);
            }
        }
        assert_eq!(8.0 - 2.0 * 5.0, -2.0);
    }

    #[test]
    fn hash_of_candidate_scores_maximal() {
        let corpus = random_codes(100, 16, 5);
        let mut q = vec![0.0f32; 16];
        unpack_signs(corpus.code(42), &mut q);
        let cands: Vec<Candidate> = (0..100).map(|i| Candidate { index: i, distance: 0 }).collect();
        let hits = rerank_dot(&q, &cands, &corpus, 3).unwrap();
        assert_eq!(hits[0].index, 42);
        assert_eq!(hits[0].score, 16.0);
    }

    #[test]
    fn rerank_errors() {
        let corpus = random_codes(3, 8, 6);
        let bad = [Candidate { index: 9, distance: 0 }];
        assert!(matches!(rerank_dot(&[0.0f32; 8], &bad, &corpus, 1), Err(Error::UnknownCandidate(9))));
        let empty = BinaryCodeSet::new(8, vec![], vec![]).unwrap();
        assert!(matches!(hamming_topk(&[0u8], &empty, 1), Err(Error::EmptyIndex)));
    }

    #[test]
    fn full_depth_equals_exhaustive_dot() {
        let mut r = rng::seeded(8);
        let data: Vec<f64> = (0..300 * 16).map(|_| r.gen_range(-1.0..1.0)).collect();
        let corpus = hash_encode(&EmbeddingMatrix::with_sequential_ids("p", 16, data).unwrap()).unwrap();
        let q: Vec<f64> = (0..16).map(|_| r.gen_range(-1.0..1.0)).collect();
        let got = two_stage_search(&q, &corpus, 10, 300).unwrap();
        let cands: Vec<Candidate> = (0..300).map(|i| Candidate { index: i, distance: 0 }).collect();
        assert_eq!(got, rerank_dot(&q, &cands, &corpus, 10).unwrap());

        // k = k1: the candidate set, reordered.
        let code = hash_vector(&q).unwrap();
        let stage1 = hamming_topk(&code, &corpus, 20).unwrap();
        let stage2 = two_stage_search(&q, &corpus, 20, 20).unwrap();
        let mut a: Vec<usize> = stage1.iter().map(|c| c.index).collect();
        let mut b: Vec<usize> = stage2.iter().map(|h| h.index).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
