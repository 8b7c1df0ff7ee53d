//! Linear query head `e(q) = W x`, the trainable stand-in for a query encoder.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::binio::*;
use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

pub const HEAD_MAGIC: &[u8; 4] = b"QHD1";

#[derive(Clone, Debug, PartialEq)]
pub struct QueryHead<T = f32> {
    d_out: usize,
    d_in: usize,
    /// Row-major `d_out × d_in`.
    weight: Vec<T>,
}

impl<T: Scalar> QueryHead<T> {
    pub fn new(d_out: usize, d_in: usize, weight: Vec<T>) -> Result<Self> {
        if weight.len() != d_out * d_in {
            return Err(Error::DimensionMismatch {
                expected: d_out * d_in,
                found: weight.len(),
            });
        }
        if weight.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("non-finite head weight".into()));
        }
        Ok(Self { d_out, d_in, weight })
    }

    pub fn identity(d: usize) -> Self {
        let mut weight = vec![T::zero(); d * d];
        for i in 0..d {
            weight[i * d + i] = T::one();
        }
        Self { d_out: d, d_in: d, weight }
    }

    pub fn cast<U: Scalar>(&self) -> QueryHead<U> {
        QueryHead {
            d_out: self.d_out,
            d_in: self.d_in,
            weight: self.weight.iter().map(|w| U::of(w.as_f64())).collect(),
        }
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [T] {
        &mut self.weight
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.d_in);
        self.weight.chunks_exact(self.d_in).map(|row| dot(row, x)).collect()
    }

    pub fn apply_all(&self, m: &EmbeddingMatrix<T>) -> Result<EmbeddingMatrix<T>> {
        if m.dim() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                found: m.dim(),
            });
        }
        let data = m.rows().flat_map(|r| self.apply(r)).collect();
        EmbeddingMatrix::new(m.ids().to_vec(), self.d_out, data)
    }

    /// `weight += scale · g ⊗ x`, the gradient of a loss that depends on
    /// `W x` through `g = ∂L/∂(W x)`.
    pub(crate) fn accumulate_outer(grad: &mut [T], g: &[T], x: &[T], scale: T) {
        for (row, gi) in grad.chunks_exact_mut(x.len()).zip(g) {
            let s = *gi * scale;
            if s == T::zero() {
                continue;
            }
            for (w, xi) in row.iter_mut().zip(x) {
                *w = *w + s * *xi;
            }
        }
    }

    /// `QHD1`: magic, little-endian `u32` d_out, `u32` d_in, f32 weights.
    pub fn write(&self, path: &Path) -> Result<u64> {
        let mut w = BufWriter::new(File::create(path)?);
        write_magic(&mut w, HEAD_MAGIC)?;
        write_u32(&mut w, self.d_out)?;
        write_u32(&mut w, self.d_in)?;
        write_f32s(&mut w, &self.weight)?;
        w.flush()?;
        Ok(12 + 4 * self.weight.len() as u64)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, HEAD_MAGIC)?;
        let d_out = read_u32(&mut r, "d_out")? as usize;
        let d_in = read_u32(&mut r, "d_in")? as usize;
        let weight = read_f32s(&mut r, d_out * d_in)?;
        Self::new(d_out, d_in, weight)
    }
}
