//! Seeded synthetic retrieval tasks: clustered passage embeddings, queries
//! that are noisy linear distortions of their positive passage, and a
//! matching text corpus with qrels.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::corpus::Document;
use crate::data::qrels::Qrels;
use crate::data::rng::{self, derive_seed, Rng};
use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::QueryHead;

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteredConfig {
    pub clusters: usize,
    pub dim: usize,
    pub passages: usize,
    pub train_queries: usize,
    pub test_queries: usize,
    /// Std of passages around their cluster center (centers have unit std).
    pub spread: f64,
    /// Std of the passage-space noise added before distortion.
    pub query_noise: f64,
    /// Scale of the random query-side linear distortion `A = I + s·G/√d`.
    pub distortion: f64,
    pub seed: u64,
}

impl Default for ClusteredConfig {
    fn default() -> Self {
        Self {
            clusters: 32,
            dim: 32,
            passages: 2000,
            train_queries: 200,
            test_queries: 200,
            spread: 0.5,
            query_noise: 0.1,
            distortion: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClusteredTask<T> {
    pub passages: EmbeddingMatrix<T>,
    pub passage_cluster: Vec<usize>,
    pub train_queries: EmbeddingMatrix<T>,
    pub train_positives: Vec<usize>,
    pub test_queries: EmbeddingMatrix<T>,
    pub test_positives: Vec<usize>,
    /// The map applied to queries; an ideal head inverts it.
    pub distortion: QueryHead<T>,
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn clustered_task<T: Scalar>(cfg: &ClusteredConfig) -> Result<ClusteredTask<T>> {
    if cfg.clusters == 0 || cfg.dim == 0 || cfg.passages < cfg.clusters {
        return Err(Error::InvalidParameter(
            "need at least one cluster, a positive dim, and a passage per cluster".into(),
        ));
    }
    let d = cfg.dim;
    let mut rng = rng::seeded(cfg.seed);
    let centers: Vec<f64> = (0..cfg.clusters * d).map(|_| normal(&mut rng)).collect();

    let mut cluster = Vec::with_capacity(cfg.passages);
    let mut data = Vec::with_capacity(cfg.passages * d);
    for i in 0..cfg.passages {
        let c = if i < cfg.clusters { i } else { rng.gen_range(0..cfg.clusters) };
        cluster.push(c);
        for j in 0..d {
            data.push(centers[c * d + j] + cfg.spread * normal(&mut rng));
        }
    }

    let scale = cfg.distortion / (d as f64).sqrt();
    let mut a = vec![0.0f64; d * d];
    for r in 0..d {
        for c in 0..d {
            a[r * d + c] = if r == c { 1.0 } else { 0.0 } + scale * normal(&mut rng);
        }
    }

    let make_queries = |n: usize, prefix: &str, rng: &mut Rng| -> Result<(EmbeddingMatrix<T>, Vec<usize>)> {
        let mut pos = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n * d);
        for _ in 0..n {
            let p = rng.gen_range(0..cfg.passages);
            pos.push(p);
            let noisy: Vec<f64> = (0..d).map(|j| data[p * d + j] + cfg.query_noise * normal(rng)).collect();
            for r in 0..d {
                let v: f64 = (0..d).map(|c| a[r * d + c] * noisy[c]).sum();
                q.push(T::of(v));
            }
        }
        Ok((EmbeddingMatrix::with_sequential_ids(prefix, d, q)?, pos))
    };
    let mut qrng = rng::seeded(derive_seed(cfg.seed, 1));
    let (train_queries, train_positives) = make_queries(cfg.train_queries, "train", &mut qrng)?;
    let (test_queries, test_positives) = make_queries(cfg.test_queries, "test", &mut qrng)?;

    Ok(ClusteredTask {
        passages: EmbeddingMatrix::with_sequential_ids("p", d, data.into_iter().map(T::of).collect())?,
        passage_cluster: cluster,
        train_queries,
        train_positives,
        test_queries,
        test_positives,
        distortion: QueryHead::new(d, d, a.into_iter().map(T::of).collect())?,
    })
}

/// Mean reciprocal rank at cutoff `k` given each query's ranked row indices.
pub fn mrr_at_k(rankings: &[Vec<usize>], positives: &[usize], k: usize) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    let total: f64 = rankings
        .iter()
        .zip(positives)
        .map(|(r, &p)| {
            r.iter()
                .take(k)
                .position(|&i| i == p)
                .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
        })
        .sum();
    total / rankings.len() as f64
}

/// Text corpus, query texts, and embeddings with one relevant passage per query.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub docs: Vec<Document>,
    pub doc_embeddings: EmbeddingMatrix<f32>,
    pub queries: Vec<Document>,
    pub query_embeddings: EmbeddingMatrix<f32>,
    pub qrels: Qrels,
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "te", "vi", "po", "da", "fe", "gu", "ho", "ji", "zu", "be",
];

fn word(i: usize) -> String {
    let a = SYLLABLES[i % 16];
    let b = SYLLABLES[(i / 16) % 16];
    let c = SYLLABLES[(i / 256) % 16];
    format!("{a}{b}{c}")
}

/// Builds a clustered corpus of `n_docs` passages whose words come mostly from
/// their cluster's vocabulary, plus `n_queries` queries drawn from the words
/// of a random passage.
pub fn synthetic_corpus(
    n_docs: usize,
    n_queries: usize,
    clusters: usize,
    dim: usize,
    seed: u64,
) -> Result<SyntheticCorpus> {
    let cfg = ClusteredConfig {
        clusters,
        dim,
        passages: n_docs,
        train_queries: 0,
        test_queries: n_queries,
        seed,
        ..ClusteredConfig::default()
    };
    let task = clustered_task::<f32>(&cfg)?;
    let mut rng = rng::seeded(derive_seed(seed, 2));
    let vocab_per_cluster = 12;
    let docs: Vec<Document> = (0..n_docs)
        .map(|i| {
            let c = task.passage_cluster[i];
            let words: Vec<String> = (0..10)
                .map(|j| {
                    if j % 4 == 3 {
                        word(4096 - 1 - rng.gen_range(0..64))
                    } else {
                        word(c * vocab_per_cluster + rng.gen_range(0..vocab_per_cluster))
                    }
                })
                .collect();
            Document::new(task.passages.id(i), format!("passage {i}"), words.join(" "))
        })
        .collect();
    let mut qrels = Qrels::new();
    let mut queries = Vec::with_capacity(n_queries);
    for (qi, &p) in task.test_positives.iter().enumerate() {
        let mut words: Vec<&str> = docs[p].text.split(' ').collect();
        words.shuffle(&mut rng);
        words.truncate(3);
        let qid = task.test_queries.id(qi).to_string();
        qrels.insert(&qid, &docs[p].id, 1)?;
        queries.push(Document::new(qid, "", words.join(" ")));
    }
    Ok(SyntheticCorpus {
        docs,
        doc_embeddings: task.passages,
        queries,
        query_embeddings: task.test_queries,
        qrels,
    })
}
