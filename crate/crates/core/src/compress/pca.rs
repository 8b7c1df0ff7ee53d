//! Principal component projection with optional whitening. Projected vectors
//! are L2-normalized so inner products become cosine similarities.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::binio::*;
use crate::data::matrix::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

pub const PCA_MAGIC: &[u8; 4] = b"PCA1";
pub const DEFAULT_WHITEN_EPSILON: f64 = 1e-9;
/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel<T = f32> {
    input_dim: usize,
    target_dim: usize,
    pub mean: Vec<T>,
    /// `target_dim` orthonormal rows of length `input_dim`.
    pub components: Vec<T>,
    /// Variances along each component, descending.
    pub eigenvalues: Vec<T>,
    pub whiten: bool,
    pub epsilon: f64,
}

/// Fits the top `target_dim` principal axes of `train`.
///
/// Emits a warning (and still succeeds) when the data has fewer than
/// `target_dim` non-negligible directions of variance.
pub fn fit_pca<T: Scalar>(train: &EmbeddingMatrix<T>, target_dim: usize, whiten: bool) -> Result<PcaModel<T>> {
    let d = train.dim();
    let n = train.len();
    if target_dim == 0 || target_dim > d {
        return Err(Error::InvalidParameter(format!(
            "target dimension {target_dim} must be in 1..={d}"
        )));
    }
    if n <= target_dim {
        return Err(Error::TooFewTrainingPoints {
            needed: target_dim + 1,
            got: n,
        });
    }

    let mut mean = vec![0f64; d];
    for row in train.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // Upper triangle of the population covariance.
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0f64; d];
    for row in train.rows() {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v.as_f64() - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(target_dim * d);
    let mut eigenvalues = Vec::with_capacity(target_dim);
    for &col in order.iter().take(target_dim) {
        let v = eig.eigenvectors.column(col);
        // Sign convention: the largest-magnitude entry is positive.
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| T::of(sign * x)));
        eigenvalues.push(T::of(eig.eigenvalues[col].max(0.0)));
    }

    let model = PcaModel {
        input_dim: d,
        target_dim,
        mean: mean.into_iter().map(T::of).collect(),
        components,
        eigenvalues,
        whiten,
        epsilon: DEFAULT_WHITEN_EPSILON,
    };
    let rank = model.effective_rank();
    if rank < target_dim {
        log::warn!("PCA is rank deficient: {rank} non-negligible components of {target_dim} requested");
    }
    Ok(model)
}

impl<T: Scalar> PcaModel<T> {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn component(&self, i: usize) -> &[T] {
        &self.components[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Number of kept components whose variance is not negligible.
    pub fn effective_rank(&self) -> usize {
        let top = self.eigenvalues.first().map(|v| v.as_f64()).unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .filter(|v| v.as_f64() > top * RANK_TOLERANCE)
            .count()
    }

    /// `components · (x − mean)`, divided per axis by `sqrt(λ + ε)` when
    /// whitening. Not normalized.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let centered: Vec<T> = x.iter().zip(&self.mean).map(|(a, m)| *a - *m).collect();
        Ok((0..self.target_dim)
            .map(|i| {
                let y = dot(self.component(i), &centered);
                if self.whiten {
                    y / T::of((self.eigenvalues[i].as_f64() + self.epsilon).sqrt())
                } else {
                    y
                }
            })
            .collect())
    }

    /// Projects and L2-normalizes one vector; `row` labels the error.
    pub fn transform_one(&self, x: &[T], row: usize) -> Result<Vec<T>> {
        let mut y = self.project(x)?;
        let len = norm(&y);
        if !(len > T::min_positive_value()) {
            return Err(Error::NormalizationOfZero { row });
        }
        y.iter_mut().for_each(|v| *v = *v / len);
        Ok(y)
    }

    /// Projects, whitens if configured, and L2-normalizes every row.
    pub fn apply(&self, m: &EmbeddingMatrix<T>) -> Result<EmbeddingMatrix<T>> {
        if m.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: m.dim(),
            });
        }
        let mut data = Vec::with_capacity(m.len() * self.target_dim);
        for (i, row) in m.rows().enumerate() {
            data.extend(self.transform_one(row, i)?);
        }
        EmbeddingMatrix::new(m.ids().to_vec(), self.target_dim, data)
    }

    pub fn write(&self, path: &Path) -> Result<u64> {
        let mut w = BufWriter::new(File::create(path)?);
        write_magic(&mut w, PCA_MAGIC)?;
        write_u32(&mut w, self.input_dim)?;
        write_u32(&mut w, self.target_dim)?;
        w.write_u8(self.whiten as u8)?;
        w.write_f64::<LittleEndian>(self.epsilon)?;
        write_f32s(&mut w, &self.mean)?;
        write_f32s(&mut w, &self.components)?;
        write_f32s(&mut w, &self.eigenvalues)?;
        w.flush()?;
        Ok(self.file_bytes())
    }

    pub fn file_bytes(&self) -> u64 {
        (4 + 4 + 4 + 1 + 8) + 4 * (self.input_dim + self.target_dim * self.input_dim + self.target_dim) as u64
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, PCA_MAGIC)?;
        let input_dim = read_u32(&mut r, "input dim")? as usize;
        let target_dim = read_u32(&mut r, "target dim")? as usize;
        let whiten = read_u8(&mut r, "whiten")? != 0;
        let epsilon = r
            .read_f64::<LittleEndian>()
            .map_err(|_| Error::MalformedHeader("truncated epsilon".into()))?;
        let mean = read_f32s_exact(&mut r, input_dim, "mean")?;
        let components = read_f32s_exact(&mut r, input_dim * target_dim, "components")?;
        let eigenvalues = read_f32s(&mut r, target_dim)?;
        Ok(Self {
            input_dim,
            target_dim,
            mean,
            components,
            eigenvalues,
            whiten,
            epsilon,
        })
    }
}

impl<T: Scalar> PcaModel<T> {
    /// A model with explicit parameters, e.g. an identity projection.
    pub fn from_parts(mean: Vec<T>, components: Vec<T>, eigenvalues: Vec<T>, whiten: bool) -> Result<Self> {
        let input_dim = mean.len();
        let target_dim = eigenvalues.len();
        if input_dim == 0 || components.len() != input_dim * target_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim * target_dim,
                found: components.len(),
            });
        }
        Ok(Self {
            input_dim,
            target_dim,
            mean,
            components,
            eigenvalues,
            whiten,
            epsilon: DEFAULT_WHITEN_EPSILON,
        })
    }
}
