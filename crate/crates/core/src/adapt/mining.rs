use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::qrels::Qrels;
use crate::data::rng::{self, derive_seed};
use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::index::SearchIndex;
use crate::scalar::Scalar;

pub const DEFAULT_DEPTH: usize = 50;

/// Sampled hard negatives for one query; one JSON line of the negatives file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinedNegatives {
    pub query_id: String,
    pub positive_id: String,
    pub negatives: Vec<String>,
}

/// Per query row: its positive (highest grade, ties to the smaller id) and
/// every judged-relevant id, or `None` when the query has no judgment.
pub fn positives_from_qrels(queries: &[String], qrels: &Qrels) -> Vec<Option<(String, Vec<String>)>> {
    queries
        .iter()
        .map(|q| {
            let judged = qrels.for_query(q)?;
            let relevant: Vec<String> = judged.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d.clone()).collect();
            let best = judged
                .iter()
                .filter(|(_, &g)| g > 0)
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))?
                .0
                .clone();
            Some((best, relevant))
        })
        .collect()
}

/// Retrieves the top `depth` passages of each query from every index, drops
/// the query's positive and any other `excluded` ids, unions the pools in
/// index-then-rank order, and samples `samples` negatives uniformly without
/// replacement. Query `i` draws from its own stream of `seed`.
pub fn mine_hard_negatives<T: Scalar>(
    indexes: &[&dyn SearchIndex<T>],
    queries: &EmbeddingMatrix<T>,
    positives: &[String],
    excluded: &[Vec<String>],
    depth: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<MinedNegatives>> {
    if indexes.is_empty() {
        return Err(Error::InvalidParameter("need at least one index to mine from".into()));
    }
    if samples == 0 || depth < samples {
        return Err(Error::InvalidParameter(format!(
            "need depth >= samples >= 1, got depth {depth} and samples {samples}"
        )));
    }
    if positives.len() != queries.len() || (!excluded.is_empty() && excluded.len() != queries.len()) {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            found: positives.len(),
        });
    }
    let mut out = Vec::with_capacity(queries.len());
    for (qi, x) in queries.rows().enumerate() {
        let positive = &positives[qi];
        let mut skip: HashSet<&str> = HashSet::from([positive.as_str()]);
        if let Some(ex) = excluded.get(qi) {
            skip.extend(ex.iter().map(String::as_str));
        }
        let mut seen = HashSet::new();
        let mut pool: Vec<String> = Vec::new();
        for index in indexes {
            for hit in index.search(x, depth)? {
                let id = &index.ids()[hit.index];
                if !skip.contains(id.as_str()) && seen.insert(id.clone()) {
                    pool.push(id.clone());
                }
            }
        }
        if pool.len() < samples {
            return Err(Error::NotEnoughCandidates {
                query: queries.id(qi).to_string(),
                needed: samples,
                available: pool.len(),
            });
        }
        let mut r = rng::seeded(derive_seed(seed, qi as u64));
        let (chosen, _) = pool.partial_shuffle(&mut r, samples);
        out.push(MinedNegatives {
            query_id: queries.id(qi).to_string(),
            positive_id: positive.clone(),
            negatives: chosen.to_vec(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::FlatIndex;

    fn three_docs() -> FlatIndex<f64> {
        let rows: [&[f64]; 3] = [&[1.0, 0.0], &[0.5, 0.5], &[0.0, 1.0]];
        FlatIndex::new(EmbeddingMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap())
    }

    fn query() -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(vec!["q".into()], &[[1.0, 0.1]]).unwrap()
    }

    #[test]
    fn excludes_positive() {
        let idx = three_docs();
        let m = mine_hard_negatives(&[&idx], &query(), &["a".into()], &[], 3, 2, 0).unwrap();
        let mut negs = m[0].negatives.clone();
        negs.sort();
        assert_eq!(negs, vec!["b", "c"]);
    }

    #[test]
    fn not_enough_after_removal() {
        let idx = three_docs();
        let e = mine_hard_negatives(&[&idx], &query(), &["a".into()], &[], 2, 2, 0).unwrap_err();
        assert!(matches!(e, Error::NotEnoughCandidates { needed: 2, available: 1, .. }));
        let e = mine_hard_negatives(&[&idx], &query(), &["a".into()], &[vec!["b".into()]], 3, 2, 0).unwrap_err();
        assert!(matches!(e, Error::NotEnoughCandidates { available: 1, .. }));
    }

    #[test]
    fn depth_must_cover_samples() {
        let idx = three_docs();
        assert!(mine_hard_negatives(&[&idx], &query(), &["a".into()], &[], 1, 2, 0).is_err());
    }

    #[test]
    fn positives_from_judgments() {
        let mut q = Qrels::new();
        q.insert("q1", "d2", 1).unwrap();
        q.insert("q1", "d1", 1).unwrap();
        q.insert("q1", "d3", 0).unwrap();
        let p = positives_from_qrels(&["q1".into(), "q2".into()], &q);
        assert_eq!(p[0], Some(("d1".into(), vec!["d1".into(), "d2".into()])));
        assert_eq!(p[1], None);
    }
}
