//! `EMB1` embedding files.
//!
//! Layout: magic `EMB1`, little-endian `u32` row count, `u32` dimension,
//! `u8` dtype (0 = f32), a block of `n` newline-terminated UTF-8 ids, then
//! `n * d` little-endian f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::binio::*;
use crate::data::manifest::{CompressionParams, IndexKind, IndexManifest};
use crate::data::matrix::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const DTYPE_F32: u8 = 0;
/// Magic, n, d, dtype.
pub const EMB_FIXED_HEADER: u64 = 4 + 4 + 4 + 1;

pub fn read_embeddings<T: Scalar>(path: &Path) -> Result<EmbeddingMatrix<T>> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, EMB_MAGIC)?;
    let n = read_u32(&mut r, "n")? as usize;
    let d = read_u32(&mut r, "d")? as usize;
    let dtype = read_u8(&mut r, "dtype")?;
    if dtype != DTYPE_F32 {
        return Err(Error::MalformedHeader(format!("unsupported dtype code {dtype}")));
    }
    if d == 0 {
        return Err(Error::MalformedHeader("dimension is zero".into()));
    }
    let ids = read_id_block(&mut r, n)?;
    let data = read_f32s(&mut r, n * d)?;
    EmbeddingMatrix::new(ids, d, data)
}

pub fn write_embeddings<T: Scalar>(m: &EmbeddingMatrix<T>, path: &Path) -> Result<IndexManifest> {
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, EMB_MAGIC)?;
    write_u32(&mut w, m.len())?;
    write_u32(&mut w, m.dim())?;
    w.write_all(&[DTYPE_F32])?;
    write_id_block(&mut w, m.ids())?;
    write_f32s(&mut w, m.data())?;
    w.flush()?;
    Ok(flat_manifest(m.len(), m.dim(), id_block_len(m.ids())))
}

/// Manifest for a flat float32 index; `ids_bytes` is the id block length.
pub fn flat_manifest(n: usize, d: usize, ids_bytes: u64) -> IndexManifest {
    let payload = flat_payload_bytes(n, d);
    IndexManifest {
        kind: IndexKind::FlatF32,
        dim: d,
        count: n,
        params: CompressionParams::None,
        size_bytes: EMB_FIXED_HEADER + ids_bytes + payload,
        payload_bytes: payload,
        seed: 0,
        producer: None,
    }
}

pub fn flat_payload_bytes(n: usize, d: usize) -> u64 {
    n as u64 * d as u64 * 4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::matrix::sequential_ids;

    #[test]
    fn reads_identity_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.emb");
        let m = EmbeddingMatrix::from_rows(sequential_ids("d", 2), &[[1.0f32, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let man = write_embeddings(&m, &p).unwrap();
        assert_eq!(man.size_bytes, std::fs::metadata(&p).unwrap().len());
        let back: EmbeddingMatrix<f32> = read_embeddings(&p).unwrap();
        assert_eq!((back.len(), back.dim()), (2, 3));
        assert_eq!(back, m);
    }

    #[test]
    fn short_payload_is_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.emb");
        let mut bytes = b"EMB1".to_vec();
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(3u32.to_le_bytes());
        bytes.push(0);
        bytes.extend(b"a\nb\n");
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0] {
            bytes.extend(v.to_le_bytes());
        }
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            read_embeddings::<f32>(&p),
            Err(Error::DimensionMismatch { expected: 6, found: 5 })
        ));
    }

    #[test]
    fn rejects_bad_magic_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.emb");
        std::fs::write(&p, b"EMB2\x00\x00").unwrap();
        assert!(matches!(read_embeddings::<f32>(&p), Err(Error::MalformedHeader(_))));

        let mut bytes = b"EMB1".to_vec();
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(1u32.to_le_bytes());
        bytes.push(0);
        bytes.extend(b"a\n");
        bytes.extend(f32::INFINITY.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_embeddings::<f32>(&p), Err(Error::NonFiniteValue { .. })));
    }

    #[test]
    fn payload_arithmetic() {
        assert_eq!(flat_payload_bytes(1, 768), 3072);
        assert_eq!(flat_payload_bytes(1_000_000, 768), 3_072_000_000);
    }
}
