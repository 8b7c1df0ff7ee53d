//! Uniform exhaustive-search interface over every index representation.

use crate::binhash::search::two_stage_search_with;
use crate::binhash::BinaryCodeSet;
use crate::compress::{PcaModel, PqIndex};
use crate::data::manifest::IndexKind;
use crate::data::topk::{Hit, TopK};
use crate::data::{EmbeddingMatrix, RunResult};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// An index that answers top-k queries by exhaustive scan.
pub trait SearchIndex<T: Scalar> {
    fn kind(&self) -> IndexKind;

    /// Dimension of the (uncompressed) query vectors it accepts.
    fn query_dim(&self) -> usize;

    fn ids(&self) -> &[String];

    fn search(&self, query: &[T], k: usize) -> Result<Vec<Hit<T>>>;

    fn len(&self) -> usize {
        self.ids().len()
    }

    fn is_empty(&self) -> bool {
        self.ids().is_empty()
    }
}

/// Exhaustive inner-product search over float vectors.
pub fn flat_search<T: Scalar>(corpus: &EmbeddingMatrix<T>, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
    if corpus.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if query.len() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            found: query.len(),
        });
    }
    let mut top = TopK::new(k, corpus.ids());
    for (i, row) in corpus.rows().enumerate() {
        top.push(i, dot(query, row));
    }
    Ok(top.into_sorted())
}

/// Uncompressed (or dequantized) vectors scored by inner product.
pub struct FlatIndex<T> {
    pub vectors: EmbeddingMatrix<T>,
    pub kind: IndexKind,
}

impl<T: Scalar> FlatIndex<T> {
    pub fn new(vectors: EmbeddingMatrix<T>) -> Self {
        Self {
            vectors,
            kind: IndexKind::FlatF32,
        }
    }
}

impl<T: Scalar> SearchIndex<T> for FlatIndex<T> {
    fn kind(&self) -> IndexKind {
        self.kind
    }
    fn query_dim(&self) -> usize {
        self.vectors.dim()
    }
    fn ids(&self) -> &[String] {
        self.vectors.ids()
    }
    fn search(&self, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
        flat_search(&self.vectors, query, k)
    }
}

/// PCA-projected, normalized corpus; queries are projected the same way, so
/// scores are cosine similarities in the reduced space.
pub struct PcaIndex<T> {
    pub model: PcaModel<T>,
    pub projected: EmbeddingMatrix<T>,
}

impl<T: Scalar> PcaIndex<T> {
    pub fn build(model: PcaModel<T>, corpus: &EmbeddingMatrix<T>) -> Result<Self> {
        let projected = model.apply(corpus)?;
        Ok(Self { model, projected })
    }
}

impl<T: Scalar> SearchIndex<T> for PcaIndex<T> {
    fn kind(&self) -> IndexKind {
        IndexKind::Pca
    }
    fn query_dim(&self) -> usize {
        self.model.input_dim()
    }
    fn ids(&self) -> &[String] {
        self.projected.ids()
    }
    fn search(&self, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
        let q = self.model.transform_one(query, 0)?;
        flat_search(&self.projected, &q, k)
    }
}

impl<T: Scalar> SearchIndex<T> for PqIndex<T> {
    fn kind(&self) -> IndexKind {
        IndexKind::Pq
    }
    fn query_dim(&self) -> usize {
        self.codebook.dim()
    }
    fn ids(&self) -> &[String] {
        self.codes.ids()
    }
    fn search(&self, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
        PqIndex::search(self, query, k)
    }
}

/// Packed sign codes searched in two stages with candidate depth `k1`.
pub struct BinaryIndex {
    pub codes: BinaryCodeSet,
    pub k1: usize,
}

impl<T: Scalar> SearchIndex<T> for BinaryIndex {
    fn kind(&self) -> IndexKind {
        IndexKind::Binary
    }
    fn query_dim(&self) -> usize {
        self.codes.d_bits()
    }
    fn ids(&self) -> &[String] {
        self.codes.ids()
    }
    fn search(&self, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
        let mut scratch = Vec::new();
        two_stage_search_with(query, &self.codes, k, self.k1.max(k), &mut scratch)
    }
}

/// Runs every row of `queries` through `index` and collects a run.
pub fn search_all<T: Scalar, I: SearchIndex<T> + ?Sized>(
    index: &I,
    queries: &EmbeddingMatrix<T>,
    k: usize,
) -> Result<RunResult> {
    let ids = index.ids();
    let mut run = RunResult::new();
    for (qi, q) in queries.rows().enumerate() {
        let hits = index.search(q, k)?;
        run.insert_ranked(
            queries.id(qi),
            hits.iter()
                .map(|h| (ids[h.index].clone(), h.score.as_f64()))
                .collect(),
        )?;
    }
    Ok(run)
}
