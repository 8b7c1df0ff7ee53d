//! Product quantization with inner-product asymmetric distance computation.
//!
//! A `d`-dimensional vector is split into `m` contiguous sub-vectors of
//! length `d_sub = d / m`; each is replaced by the index of its nearest
//! centroid among `k <= 256`, so a vector costs `m` bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::compress::kmeans::{kmeans, nearest_centroid};
use crate::data::binio::*;
use crate::data::manifest::{CompressionParams, IndexKind, IndexManifest};
use crate::data::matrix::{validate_ids, EmbeddingMatrix};
use crate::data::rng;
use crate::data::topk::{Hit, TopK};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

pub const PQ_MAGIC: &[u8; 4] = b"PQX1";
pub const DEFAULT_M_SUBSPACES: usize = 96;
pub const DEFAULT_K_CENTROIDS: usize = 256;

/// Centroid tables laid out as `[subspace][centroid][d_sub]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PqCodebook<T = f32> {
    m: usize,
    k: usize,
    d_sub: usize,
    centroids: Vec<T>,
}

impl<T: Scalar> PqCodebook<T> {
    pub fn new(m: usize, k: usize, d_sub: usize, centroids: Vec<T>) -> Result<Self> {
        if m == 0 || d_sub == 0 || k == 0 || k > 256 {
            return Err(Error::InvalidParameter(format!(
                "codebook shape m={m} k={k} d_sub={d_sub} (need m, d_sub >= 1 and 1 <= k <= 256)"
            )));
        }
        if centroids.len() != m * k * d_sub {
            return Err(Error::DimensionMismatch {
                expected: m * k * d_sub,
                found: centroids.len(),
            });
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite centroid".into()));
        }
        Ok(Self { m, k, d_sub, centroids })
    }

    pub fn m_subspaces(&self) -> usize {
        self.m
    }

    pub fn k_centroids(&self) -> usize {
        self.k
    }

    pub fn d_sub(&self) -> usize {
        self.d_sub
    }

    pub fn dim(&self) -> usize {
        self.m * self.d_sub
    }

    #[inline]
    pub fn centroid(&self, sub: usize, j: usize) -> &[T] {
        let off = (sub * self.k + j) * self.d_sub;
        &self.centroids[off..off + self.d_sub]
    }

    pub fn centroid_mut(&mut self, sub: usize, j: usize) -> &mut [T] {
        let off = (sub * self.k + j) * self.d_sub;
        &mut self.centroids[off..off + self.d_sub]
    }

    fn subspace(&self, sub: usize) -> &[T] {
        let w = self.k * self.d_sub;
        &self.centroids[sub * w..(sub + 1) * w]
    }

    pub fn centroids(&self) -> &[T] {
        &self.centroids
    }

    pub fn centroids_mut(&mut self) -> &mut [T] {
        &mut self.centroids
    }

    /// Bytes of the centroid tables stored as f32.
    pub fn bytes(&self) -> u64 {
        (self.centroids.len() * 4) as u64
    }

    /// Nearest-centroid code for one vector.
    pub fn encode_one(&self, x: &[T], out: &mut [u8]) {
        for (sub, code) in out.iter_mut().enumerate() {
            let xs = &x[sub * self.d_sub..(sub + 1) * self.d_sub];
            *code = nearest_centroid(self.subspace(sub), self.d_sub, xs).0 as u8;
        }
    }

    /// Concatenated centroids for one code.
    pub fn decode_one(&self, code: &[u8], out: &mut [T]) {
        for (sub, &c) in code.iter().enumerate() {
            out[sub * self.d_sub..(sub + 1) * self.d_sub].copy_from_slice(self.centroid(sub, c as usize));
        }
    }

    /// `m × k` table of ⟨query sub-vector, centroid⟩.
    pub fn lookup_table(&self, query: &[T]) -> Result<Vec<T>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: query.len(),
            });
        }
        let mut table = Vec::with_capacity(self.m * self.k);
        for sub in 0..self.m {
            let qs = &query[sub * self.d_sub..(sub + 1) * self.d_sub];
            for j in 0..self.k {
                table.push(dot(qs, self.centroid(sub, j)));
            }
        }
        Ok(table)
    }

    pub fn cast<U: Scalar>(&self) -> PqCodebook<U> {
        PqCodebook {
            m: self.m,
            k: self.k,
            d_sub: self.d_sub,
            centroids: self.centroids.iter().map(|c| U::of(c.as_f64())).collect(),
        }
    }
}

/// Per-vector codes, `m` bytes each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PqCodeSet {
    m: usize,
    codes: Vec<u8>,
    ids: Vec<String>,
}

impl PqCodeSet {
    pub fn new(m: usize, codes: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        if m == 0 || codes.len() != ids.len() * m {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * m,
                found: codes.len(),
            });
        }
        validate_ids(&ids)?;
        Ok(Self { m, codes, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn m_subspaces(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn code(&self, i: usize) -> &[u8] {
        &self.codes[i * self.m..(i + 1) * self.m]
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// `n × m` bytes.
    pub fn bytes(&self) -> u64 {
        self.codes.len() as u64
    }
}

/// Trains one k-means per subspace. Each subspace draws from its own seed
/// stream so results do not depend on evaluation order.
pub fn fit_pq<T: Scalar>(train: &EmbeddingMatrix<T>, m: usize, k: usize, iters: usize, seed: u64) -> Result<PqCodebook<T>> {
    let d = train.dim();
    if m == 0 || !d.is_multiple_of(m) {
        return Err(Error::NotDivisible { dim: d, parts: m });
    }
    if k == 0 || k > 256 {
        return Err(Error::InvalidParameter(format!("k = {k} must be in 1..=256")));
    }
    if train.len() < k {
        return Err(Error::TooFewTrainingPoints {
            needed: k,
            got: train.len(),
        });
    }
    let d_sub = d / m;
    let mut centroids = Vec::with_capacity(m * k * d_sub);
    let mut sub_points = Vec::with_capacity(train.len() * d_sub);
    for sub in 0..m {
        sub_points.clear();
        for row in train.rows() {
            sub_points.extend_from_slice(&row[sub * d_sub..(sub + 1) * d_sub]);
        }
        let mut r = rng::seeded(rng::derive_seed(seed, sub as u64));
        let km = kmeans(&sub_points, d_sub, k, iters, &mut r)?;
        centroids.extend_from_slice(&km.centroids);
    }
    PqCodebook::new(m, k, d_sub, centroids)
}

pub fn pq_encode<T: Scalar>(cb: &PqCodebook<T>, m: &EmbeddingMatrix<T>) -> Result<PqCodeSet> {
    if m.dim() != cb.dim() {
        return Err(Error::DimensionMismatch {
            expected: cb.dim(),
            found: m.dim(),
        });
    }
    let mut codes = vec![0u8; m.len() * cb.m];
    for (row, out) in m.rows().zip(codes.chunks_exact_mut(cb.m)) {
        cb.encode_one(row, out);
    }
    PqCodeSet::new(cb.m, codes, m.ids().to_vec())
}

pub fn pq_decode<T: Scalar>(cb: &PqCodebook<T>, codes: &PqCodeSet) -> Result<EmbeddingMatrix<T>> {
    check_codes(cb, codes)?;
    let d = cb.dim();
    let mut data = vec![T::zero(); codes.len() * d];
    for (i, out) in data.chunks_exact_mut(d).enumerate() {
        cb.decode_one(codes.code(i), out);
    }
    EmbeddingMatrix::new(codes.ids.clone(), d, data)
}

fn check_codes<T: Scalar>(cb: &PqCodebook<T>, codes: &PqCodeSet) -> Result<()> {
    if codes.m != cb.m {
        return Err(Error::DimensionMismatch {
            expected: cb.m,
            found: codes.m,
        });
    }
    if let Some(&bad) = codes.codes.iter().find(|&&c| c as usize >= cb.k) {
        return Err(Error::InvalidParameter(format!("code {bad} exceeds k = {}", cb.k)));
    }
    Ok(())
}

/// Score of one code against a lookup table.
#[inline]
pub fn adc_score<T: Scalar>(table: &[T], k: usize, code: &[u8]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = code.chunks_exact(4);
    let rem = chunks.remainder();
    for (c, quad) in chunks.enumerate() {
        let base = c * 4 * k;
        acc[0] = acc[0] + table[base + quad[0] as usize];
        acc[1] = acc[1] + table[base + k + quad[1] as usize];
        acc[2] = acc[2] + table[base + 2 * k + quad[2] as usize];
        acc[3] = acc[3] + table[base + 3 * k + quad[3] as usize];
    }
    let start = code.len() - rem.len();
    let mut tail = T::zero();
    for (i, &c) in rem.iter().enumerate() {
        tail = tail + table[(start + i) * k + c as usize];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Exhaustive inner-product search over PQ codes: score(p) = ⟨query,
/// decode(code(p))⟩ evaluated through per-subspace lookup tables.
pub fn pq_search<T: Scalar>(cb: &PqCodebook<T>, codes: &PqCodeSet, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
    if codes.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if codes.m != cb.m {
        return Err(Error::DimensionMismatch {
            expected: cb.m,
            found: codes.m,
        });
    }
    let table = cb.lookup_table(query)?;
    let mut top = TopK::new(k, &codes.ids);
    for (i, code) in codes.codes.chunks_exact(cb.m).enumerate() {
        top.push(i, adc_score(&table, cb.k, code));
    }
    Ok(top.into_sorted())
}

/// A codebook together with the codes of a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct PqIndex<T = f32> {
    pub codebook: PqCodebook<T>,
    pub codes: PqCodeSet,
}

impl<T: Scalar> PqIndex<T> {
    pub fn new(codebook: PqCodebook<T>, codes: PqCodeSet) -> Result<Self> {
        check_codes(&codebook, &codes)?;
        Ok(Self { codebook, codes })
    }

    pub fn build(codebook: PqCodebook<T>, corpus: &EmbeddingMatrix<T>) -> Result<Self> {
        let codes = pq_encode(&codebook, corpus)?;
        Ok(Self { codebook, codes })
    }

    pub fn search(&self, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
        pq_search(&self.codebook, &self.codes, query, k)
    }

    /// Codes plus codebook.
    pub fn payload_bytes(&self) -> u64 {
        self.codes.bytes() + self.codebook.bytes()
    }

    pub fn file_bytes(&self) -> u64 {
        16 + self.codebook.bytes() + 4 + id_block_len(&self.codes.ids) + self.codes.bytes()
    }

    /// `PQX1`: magic, little-endian `u32` m, k, d_sub, the f32 codebook, `u32`
    /// n, id block, code bytes.
    pub fn write(&self, path: &Path, kind: IndexKind) -> Result<IndexManifest> {
        let cb = &self.codebook;
        let mut w = BufWriter::new(File::create(path)?);
        write_magic(&mut w, PQ_MAGIC)?;
        write_u32(&mut w, cb.m)?;
        write_u32(&mut w, cb.k)?;
        write_u32(&mut w, cb.d_sub)?;
        write_f32s(&mut w, &cb.centroids)?;
        write_u32(&mut w, self.codes.len())?;
        write_id_block(&mut w, &self.codes.ids)?;
        w.write_all(&self.codes.codes)?;
        w.flush()?;
        Ok(IndexManifest {
            kind,
            dim: cb.dim(),
            count: self.codes.len(),
            params: CompressionParams::Pq {
                m_subspaces: cb.m,
                k_centroids: cb.k,
                d_sub: cb.d_sub,
            },
            size_bytes: self.file_bytes(),
            payload_bytes: self.payload_bytes(),
            seed: 0,
            producer: None,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, PQ_MAGIC)?;
        let m = read_u32(&mut r, "m")? as usize;
        let k = read_u32(&mut r, "k")? as usize;
        let d_sub = read_u32(&mut r, "d_sub")? as usize;
        let centroids = read_f32s_exact(&mut r, m * k * d_sub, "codebook")?;
        let codebook = PqCodebook::new(m, k, d_sub, centroids)?;
        let n = read_u32(&mut r, "n")? as usize;
        let ids = read_id_block(&mut r, n)?;
        let codes = read_bytes_to_end(&mut r, n * m)?;
        Self::new(codebook, PqCodeSet::new(m, codes, ids)?)
    }
}

/// Payload bytes of a PQ index over `n` vectors: codes plus f32 codebook.
pub fn pq_payload_bytes(n: usize, m: usize, k: usize, d_sub: usize) -> u64 {
    (n * m) as u64 + (m * k * d_sub * 4) as u64
}
