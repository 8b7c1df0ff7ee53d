//! Little-endian building blocks shared by the binary file formats.

use std::io::{BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) fn write_magic<W: Write>(w: &mut W, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::MalformedHeader("file too short for magic".into()))?;
    if &buf != magic {
        return Err(Error::MalformedHeader(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| Error::MalformedHeader(format!("truncated header field {what}")))
}

pub(crate) fn read_u8<R: Read>(r: &mut R, what: &str) -> Result<u8> {
    r.read_u8()
        .map_err(|_| Error::MalformedHeader(format!("truncated header field {what}")))
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("{v} exceeds u32")))?;
    w.write_u32::<LittleEndian>(v)?;
    Ok(())
}

/// Bytes of the newline-terminated id block that precedes every payload.
pub fn id_block_len(ids: &[String]) -> u64 {
    ids.iter().map(|s| s.len() as u64 + 1).sum()
}

pub(crate) fn write_id_block<W: Write>(w: &mut W, ids: &[String]) -> Result<()> {
    for id in ids {
        w.write_all(id.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub(crate) fn read_id_block<R: BufRead>(r: &mut R, n: usize) -> Result<Vec<String>> {
    let mut ids = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for i in 0..n {
        buf.clear();
        r.read_until(b'\n', &mut buf)?;
        if buf.pop() != Some(b'\n') {
            return Err(Error::MalformedHeader(format!("id block ends after {i} of {n} ids")));
        }
        let id = String::from_utf8(std::mem::take(&mut buf))
            .map_err(|_| Error::MalformedHeader(format!("id {i} is not UTF-8")))?;
        ids.push(id);
    }
    Ok(ids)
}

pub(crate) fn write_f32s<W: Write, T: Scalar>(w: &mut W, values: &[T]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len().min(1 << 16) * 4);
    for chunk in values.chunks(1 << 16) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads exactly `count` floats, or fails with `DimensionMismatch` when the
/// payload holds a different number of bytes.
pub(crate) fn read_f32s<R: Read, T: Scalar>(r: &mut R, count: usize) -> Result<Vec<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(Error::DimensionMismatch {
            expected: count,
            found: bytes.len() / 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

/// Reads exactly `count` floats and leaves the remainder of the stream.
pub(crate) fn read_f32s_exact<R: Read, T: Scalar>(r: &mut R, count: usize, what: &str) -> Result<Vec<T>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::MalformedHeader(format!("truncated {what}")))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

/// Reads the remainder of the stream, which must be exactly `count` bytes.
pub(crate) fn read_bytes_to_end<R: Read>(r: &mut R, count: usize) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(count);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count {
        return Err(Error::DimensionMismatch {
            expected: count,
            found: bytes.len(),
        });
    }
    Ok(bytes)
}
