//! Batch sources: shuffled epochs over fixed examples, and per-step hard
//! negatives retrieved from the current trainable PQ index.

use rand::seq::SliceRandom;

use crate::compress::{pq_search, PqCodeSet};
use crate::data::rng::{self, Rng};
use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::batch::{TrainingBatch, TrainingExample, Trainables};
use crate::train::trainer::BatchSource;

/// Visits examples in a fresh seeded permutation each epoch.
pub struct ShuffledBatches<T> {
    examples: Vec<TrainingExample<T>>,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
}

impl<T: Scalar> ShuffledBatches<T> {
    pub fn new(examples: Vec<TrainingExample<T>>, batch_size: usize, seed: u64) -> Result<Self> {
        if examples.is_empty() || batch_size == 0 {
            return Err(Error::InvalidParameter("need examples and a positive batch size".into()));
        }
        let n = examples.len();
        Ok(Self {
            examples,
            batch_size: batch_size.min(n),
            order: (0..n).collect(),
            cursor: n,
            rng: rng::seeded(seed),
        })
    }
}

impl<T: Scalar> BatchSource<T> for ShuffledBatches<T> {
    fn next_batch(&mut self, _step: usize, _t: &Trainables<T>) -> Result<TrainingBatch<T>> {
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let picked = &self.order[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        TrainingBatch::new(picked.iter().map(|&i| self.examples[i].clone()).collect())
    }
}

/// Replays one batch every step (full-batch gradient descent).
pub struct FixedBatch<T>(pub TrainingBatch<T>);

impl<T: Scalar> BatchSource<T> for FixedBatch<T> {
    fn next_batch(&mut self, _step: usize, _t: &Trainables<T>) -> Result<TrainingBatch<T>> {
        Ok(self.0.clone())
    }
}

/// Teacher scores for (query row, passage row) pairs.
pub type Labeler<'a, T> = Box<dyn Fn(usize, usize) -> T + 'a>;

/// Each step, encodes a batch of training queries with the current head,
/// retrieves the top `depth` passages from the current codebook and fixed
/// codes, drops the positive, and samples `samples` of the rest as negatives
/// (all of them, in rank order, when `samples >= depth`).
pub struct PqHardNegatives<'a, T> {
    queries: &'a EmbeddingMatrix<T>,
    positives: &'a [usize],
    codes: &'a PqCodeSet,
    depth: usize,
    samples: usize,
    labeler: Option<Labeler<'a, T>>,
    inner_order: ShuffleOrder,
    rng: Rng,
    batch_size: usize,
}

struct ShuffleOrder {
    order: Vec<usize>,
    cursor: usize,
}

impl<'a, T: Scalar> PqHardNegatives<'a, T> {
    pub fn new(
        queries: &'a EmbeddingMatrix<T>,
        positives: &'a [usize],
        codes: &'a PqCodeSet,
        depth: usize,
        samples: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if queries.len() != positives.len() || queries.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: queries.len(),
                found: positives.len(),
            });
        }
        if depth == 0 || samples == 0 || batch_size == 0 {
            return Err(Error::InvalidParameter("depth, samples, and batch size must be positive".into()));
        }
        if let Some(&p) = positives.iter().find(|&&p| p >= codes.len()) {
            return Err(Error::UnknownCandidate(p));
        }
        Ok(Self {
            queries,
            positives,
            codes,
            depth,
            samples,
            labeler: None,
            inner_order: ShuffleOrder {
                order: (0..queries.len()).collect(),
                cursor: queries.len(),
            },
            rng: rng::seeded(seed),
            batch_size: batch_size.min(queries.len()),
        })
    }

    /// Attaches teacher scores so batches carry MarginMSE labels.
    pub fn with_labeler(mut self, labeler: Labeler<'a, T>) -> Self {
        self.labeler = Some(labeler);
        self
    }
}

impl<T: Scalar> BatchSource<T> for PqHardNegatives<'_, T> {
    fn next_batch(&mut self, _step: usize, trainables: &Trainables<T>) -> Result<TrainingBatch<T>> {
        let cb = trainables
            .codebook
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("hard-negative mining needs a codebook".into()))?;
        let ord = &mut self.inner_order;
        if ord.cursor + self.batch_size > ord.order.len() {
            ord.order.shuffle(&mut self.rng);
            ord.cursor = 0;
        }
        let picked: Vec<usize> = ord.order[ord.cursor..ord.cursor + self.batch_size].to_vec();
        ord.cursor += self.batch_size;

        let mut examples = Vec::with_capacity(picked.len());
        for qi in picked {
            let x = self.queries.row(qi);
            let e = trainables.head.apply(x);
            let positive = self.positives[qi];
            let hits = pq_search(cb, self.codes, &e, self.depth + 1)?;
            let mut pool: Vec<usize> = hits
                .iter()
                .map(|h| h.index)
                .filter(|&i| i != positive)
                .take(self.depth)
                .collect();
            if pool.is_empty() {
                return Err(Error::NotEnoughCandidates {
                    query: self.queries.id(qi).to_string(),
                    needed: 1,
                    available: 0,
                });
            }
            let negatives = if self.samples >= pool.len() {
                pool
            } else {
                let (chosen, _) = pool.partial_shuffle(&mut self.rng, self.samples);
                chosen.to_vec()
            };
            let mut ex = TrainingExample::new(x.to_vec(), positive, negatives);
            if let Some(label) = &self.labeler {
                let pos = label(qi, positive);
                let negs = ex.negatives.iter().map(|&n| label(qi, n)).collect();
                ex = ex.with_labels(pos, negs);
            }
            examples.push(ex);
        }
        TrainingBatch::new(examples)
    }
}
