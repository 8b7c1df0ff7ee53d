//! Sign hashing and packed ±1 codes.
//!
//! Bit `i` of byte `j` (least significant first) holds dimension `8j + i`;
//! a set bit means +1, a clear bit −1. `sign(0)` is +1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::binio::*;
use crate::data::manifest::{CompressionParams, IndexKind, IndexManifest};
use crate::data::matrix::{validate_ids, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BIN_MAGIC: &[u8; 4] = b"BIN1";

/// Packed sign codes for a corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryCodeSet {
    d_bits: usize,
    bits: Vec<u8>,
    ids: Vec<String>,
}

impl BinaryCodeSet {
    pub fn new(d_bits: usize, bits: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        if d_bits == 0 || !d_bits.is_multiple_of(8) {
            return Err(Error::DimensionNotByteAligned(d_bits));
        }
        if bits.len() != ids.len() * d_bits / 8 {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * d_bits / 8,
                found: bits.len(),
            });
        }
        validate_ids(&ids)?;
        Ok(Self { d_bits, bits, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn d_bits(&self) -> usize {
        self.d_bits
    }

    pub fn bytes_per_code(&self) -> usize {
        self.d_bits / 8
    }

    #[inline]
    pub fn code(&self, i: usize) -> &[u8] {
        let w = self.bytes_per_code();
        &self.bits[i * w..(i + 1) * w]
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// `n × d_bits / 8`.
    pub fn bytes(&self) -> u64 {
        self.bits.len() as u64
    }

    pub fn file_bytes(&self) -> u64 {
        12 + id_block_len(&self.ids) + self.bytes()
    }

    /// `BIN1`: magic, little-endian `u32` n, `u32` d_bits, id block, codes.
    pub fn write(&self, path: &Path) -> Result<IndexManifest> {
        let mut w = BufWriter::new(File::create(path)?);
        write_magic(&mut w, BIN_MAGIC)?;
        write_u32(&mut w, self.len())?;
        write_u32(&mut w, self.d_bits)?;
        write_id_block(&mut w, &self.ids)?;
        w.write_all(&self.bits)?;
        w.flush()?;
        Ok(IndexManifest {
            kind: IndexKind::Binary,
            dim: self.d_bits,
            count: self.len(),
            params: CompressionParams::Binary { d_bits: self.d_bits },
            size_bytes: self.file_bytes(),
            payload_bytes: self.bytes(),
            seed: 0,
            producer: None,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, BIN_MAGIC)?;
        let n = read_u32(&mut r, "n")? as usize;
        let d_bits = read_u32(&mut r, "d_bits")? as usize;
        if d_bits == 0 || !d_bits.is_multiple_of(8) {
            return Err(Error::MalformedHeader(format!("d_bits {d_bits} is not a positive multiple of 8")));
        }
        let ids = read_id_block(&mut r, n)?;
        let bits = read_bytes_to_end(&mut r, n * d_bits / 8)?;
        Self::new(d_bits, bits, ids)
    }
}

/// Packs the signs of `x` into `out` (`x.len() / 8` bytes).
#[inline]
pub fn pack_signs<T: Scalar>(x: &[T], out: &mut [u8]) {
    for (byte, chunk) in out.iter_mut().zip(x.chunks_exact(8)) {
        let mut b = 0u8;
        for (i, v) in chunk.iter().enumerate() {
            if *v >= T::zero() {
                b |= 1 << i;
            }
        }
        *byte = b;
    }
}

/// Packs a ±1 (or boolean-as-sign) vector; the inverse of [`unpack_signs`].
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Expands a packed code to booleans (`true` = +1).
pub fn unpack_bits(code: &[u8]) -> Vec<bool> {
    (0..code.len() * 8).map(|i| code[i / 8] >> (i % 8) & 1 == 1).collect()
}

/// Expands a packed code to ±1 values.
#[inline]
pub fn unpack_signs<T: Scalar>(code: &[u8], out: &mut [T]) {
    let one = T::one();
    for (i, o) in out.iter_mut().enumerate() {
        *o = if code[i / 8] >> (i % 8) & 1 == 1 { one } else { -one };
    }
}

/// Hash of a single vector.
pub fn hash_vector<T: Scalar>(x: &[T]) -> Result<Vec<u8>> {
    if x.is_empty() || !x.len().is_multiple_of(8) {
        return Err(Error::DimensionNotByteAligned(x.len()));
    }
    let mut out = vec![0u8; x.len() / 8];
    pack_signs(x, &mut out);
    Ok(out)
}

/// `h(p) = sign(p)` for every row, packed.
pub fn hash_encode<T: Scalar>(m: &EmbeddingMatrix<T>) -> Result<BinaryCodeSet> {
    let d = m.dim();
    if !d.is_multiple_of(8) {
        return Err(Error::DimensionNotByteAligned(d));
    }
    let w = d / 8;
    let mut bits = vec![0u8; m.len() * w];
    for (row, out) in m.rows().zip(bits.chunks_exact_mut(w)) {
        pack_signs(row, out);
    }
    BinaryCodeSet::new(d, bits, m.ids().to_vec())
}
