use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::corpus::{read_jsonl, write_jsonl, Document};
use crate::data::rng;
use crate::error::{Error, Result};

pub const DEFAULT_Q_PER_PASSAGE: usize = 3;

/// Generated queries for one passage; one JSON line of the queries file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQueries {
    pub passage_id: String,
    pub queries: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GeneratedQuerySet {
    pub entries: Vec<GeneratedQueries>,
}

impl GeneratedQuerySet {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(Self {
            entries: read_jsonl(path)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_jsonl(&self.entries, path)
    }

    pub fn num_queries(&self) -> usize {
        self.entries.iter().map(|e| e.queries.len()).sum()
    }

    /// Fails on the first passage id absent from `corpus_ids`.
    pub fn validate<'a>(&self, corpus_ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: HashSet<&str> = corpus_ids.into_iter().collect();
        match self.entries.iter().find(|e| !known.contains(e.passage_id.as_str())) {
            Some(e) => Err(Error::UnknownPassageId(e.passage_id.clone())),
            None => Ok(()),
        }
    }
}

/// A synthetic query and the passage it was generated from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenqPair {
    pub query_id: String,
    pub query: String,
    pub pos_id: String,
}

/// Expands up to `q_per_passage` queries per passage into pairs. Query ids
/// are `<passage_id>-q<j>`.
pub fn build_genq_pairs<'a>(
    gen: &GeneratedQuerySet,
    corpus_ids: impl IntoIterator<Item = &'a str>,
    q_per_passage: usize,
) -> Result<Vec<GenqPair>> {
    if gen.num_queries() == 0 {
        return Err(Error::EmptyQuerySet);
    }
    gen.validate(corpus_ids)?;
    let mut pairs = Vec::new();
    for e in &gen.entries {
        for (j, q) in e.queries.iter().take(q_per_passage).enumerate() {
            pairs.push(GenqPair {
                query_id: format!("{}-q{j}", e.passage_id),
                query: q.clone(),
                pos_id: e.passage_id.clone(),
            });
        }
    }
    Ok(pairs)
}

/// Pair indices of one batch and, per pair, the positives of the other pairs
/// in the batch as negatives (a pair's own passage is never its negative).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenqBatch {
    pub pairs: Vec<usize>,
    pub negatives: Vec<Vec<String>>,
}

/// Shuffles pairs with `seed` and cuts them into batches of `batch_size`
/// (the last may be shorter).
pub fn genq_batches(pairs: &[GenqPair], batch_size: usize, seed: u64) -> Result<Vec<GenqBatch>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let negatives = chunk
                .iter()
                .map(|&i| {
                    chunk
                        .iter()
                        .filter(|&&j| j != i && pairs[j].pos_id != pairs[i].pos_id)
                        .map(|&j| pairs[j].pos_id.clone())
                        .collect()
                })
                .collect();
            GenqBatch {
                pairs: chunk.to_vec(),
                negatives,
            }
        })
        .collect())
}

/// Deterministic stand-in for a query generator: each pseudo-query is a
/// random subset of two or three distinct passage terms, kept in passage order.
pub fn synth_query_stub(corpus: &[Document], q_per_passage: usize, seed: u64) -> Result<GeneratedQuerySet> {
    let mut rng = rng::seeded(seed);
    let mut entries = Vec::new();
    if q_per_passage == 0 {
        return Ok(GeneratedQuerySet { entries });
    }
    for doc in corpus {
        let mut seen = HashSet::new();
        let terms: Vec<String> = format!("{} {}", doc.title, doc.text)
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| seen.insert(t.clone()))
            .collect();
        if terms.is_empty() {
            return Err(Error::EmptyPassage(doc.id.clone()));
        }
        let queries = (0..q_per_passage)
            .map(|_| {
                let size = rng.gen_range(2..=3).min(terms.len());
                let mut picked = rand::seq::index::sample(&mut rng, terms.len(), size).into_vec();
                picked.sort_unstable();
                picked.iter().map(|&i| terms[i].as_str()).collect::<Vec<_>>().join(" ")
            })
            .collect();
        entries.push(GeneratedQueries {
            passage_id: doc.id.clone(),
            queries,
        });
    }
    Ok(GeneratedQuerySet { entries })
}
