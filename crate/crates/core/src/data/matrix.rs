use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major table of `n` embedding vectors with one external id per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<T = f32> {
    dim: usize,
    data: Vec<T>,
    ids: Vec<String>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    /// Builds a matrix, checking shape, id uniqueness, and finiteness.
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                found: data.len(),
            });
        }
        validate_ids(&ids)?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { dim, data, ids })
    }

    /// Builds a matrix from explicit rows.
    pub fn from_rows<R: AsRef<[T]>>(ids: Vec<String>, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(ids, dim, data)
    }

    /// Builds a matrix whose ids are `prefix` followed by the zero-padded row
    /// number, so lexicographic id order equals row order.
    pub fn with_sequential_ids(prefix: &str, dim: usize, data: Vec<T>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { data.len() / dim };
        Self::new(sequential_ids(prefix, n), dim, data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Map from external id to row.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Sub-matrix made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r));
            ids.push(self.ids[r].clone());
        }
        Self::new(ids, self.dim, data)
    }

    /// Converts the element type.
    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            ids: self.ids.clone(),
        }
    }

    pub fn into_parts(self) -> (Vec<String>, usize, Vec<T>) {
        (self.ids, self.dim, self.data)
    }
}

/// Ids `prefix0..prefix{n-1}` zero-padded to a common width.
pub fn sequential_ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Ids must be unique, non-empty, and free of line breaks (the binary
/// formats store them as a newline-delimited block).
pub(crate) fn validate_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if id.is_empty() || id.contains('\n') || id.contains('\r') {
            return Err(Error::InvalidParameter(format!("invalid id {id:?}")));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}
