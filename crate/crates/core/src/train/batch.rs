use crate::compress::{PqCodeSet, PqCodebook};
use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::head::QueryHead;

/// One query with its positive passage and at least one negative. Passages
/// are row indices into the [`Passages`] the batch is scored against.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample<T> {
    /// Input features of the query, before the head.
    pub query: Vec<T>,
    pub positive: usize,
    pub negatives: Vec<usize>,
    /// Teacher scores `CE(q, p⁺)` and `CE(q, p⁻_j)`, required by MarginMSE.
    pub labels: Option<MarginLabels<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginLabels<T> {
    pub positive: T,
    pub negatives: Vec<T>,
}

impl<T: Scalar> MarginLabels<T> {
    /// Teacher margin `CE(q, p⁺) − CE(q, p⁻_j)`.
    pub fn margin(&self, j: usize) -> T {
        self.positive - self.negatives[j]
    }
}

impl<T: Scalar> TrainingExample<T> {
    pub fn new(query: Vec<T>, positive: usize, negatives: Vec<usize>) -> Self {
        Self {
            query,
            positive,
            negatives,
            labels: None,
        }
    }

    pub fn with_labels(mut self, positive: T, negatives: Vec<T>) -> Self {
        self.labels = Some(MarginLabels { positive, negatives });
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingBatch<T> {
    pub examples: Vec<TrainingExample<T>>,
}

impl<T: Scalar> TrainingBatch<T> {
    pub fn new(examples: Vec<TrainingExample<T>>) -> Result<Self> {
        let batch = Self { examples };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.examples.is_empty() {
            return Err(Error::InvalidParameter("empty training batch".into()));
        }
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.negatives.is_empty() {
                return Err(Error::InvalidParameter(format!("example {i} has no negatives")));
            }
            if let Some(l) = &ex.labels {
                if l.negatives.len() != ex.negatives.len() {
                    return Err(Error::DimensionMismatch {
                        expected: ex.negatives.len(),
                        found: l.negatives.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Number of (query, positive, negative) triplets.
    pub fn triplets(&self) -> usize {
        self.examples.iter().map(|e| e.negatives.len()).sum()
    }
}

/// How passages are represented on the scoring side.
#[derive(Clone, Copy, Debug)]
pub enum Passages<'a, T> {
    /// Float embeddings; the hash is `sign(p)` and the relaxed hash
    /// `tanh(β p)`.
    Embeddings(&'a EmbeddingMatrix<T>),
    /// Fixed PQ code assignments, reconstructed from the trainable codebook.
    Codes(&'a PqCodeSet),
}

impl<T: Scalar> Passages<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            Passages::Embeddings(m) => m.len(),
            Passages::Codes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameters updated by training.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainables<T> {
    pub head: QueryHead<T>,
    pub codebook: Option<PqCodebook<T>>,
}

impl<T: Scalar> Trainables<T> {
    pub fn head_only(head: QueryHead<T>) -> Self {
        Self { head, codebook: None }
    }

    pub fn with_codebook(head: QueryHead<T>, codebook: PqCodebook<T>) -> Self {
        Self {
            head,
            codebook: Some(codebook),
        }
    }
}

/// Gradients shaped like [`Trainables`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub head: Vec<T>,
    pub codebook: Option<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(t: &Trainables<T>) -> Self {
        Self {
            head: vec![T::zero(); t.head.weight().len()],
            codebook: t.codebook.as_ref().map(|cb| vec![T::zero(); cb.centroids().len()]),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.head.iter_mut().zip(&other.head) {
            *a = *a + *b;
        }
        if let (Some(a), Some(b)) = (&mut self.codebook, &other.codebook) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.head.iter().all(|g| *g == T::zero())
            && self
                .codebook
                .as_ref()
                .is_none_or(|c| c.iter().all(|g| *g == T::zero()))
    }
}
