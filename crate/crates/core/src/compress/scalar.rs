//! Scalar float quantization: IEEE half precision, and per-dimension uniform
//! 8-bit quantization over the corpus min/max range.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use half::f16;

use crate::data::binio::*;
use crate::data::manifest::{CompressionParams, IndexKind, IndexManifest};
use crate::data::matrix::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SQ_MAGIC: &[u8; 4] = b"SQX1";
const FP8_LEVELS: f64 = 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarMode {
    Fp16,
    Fp8,
}

impl ScalarMode {
    pub fn name(self) -> &'static str {
        match self {
            ScalarMode::Fp16 => "fp16",
            ScalarMode::Fp8 => "fp8",
        }
    }

    pub fn bytes_per_value(self) -> usize {
        match self {
            ScalarMode::Fp16 => 2,
            ScalarMode::Fp8 => 1,
        }
    }

    fn code(self) -> u8 {
        match self {
            ScalarMode::Fp16 => 1,
            ScalarMode::Fp8 => 2,
        }
    }
}

impl std::str::FromStr for ScalarMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp16" => Ok(ScalarMode::Fp16),
            "fp8" => Ok(ScalarMode::Fp8),
            other => Err(Error::InvalidParameter(format!("unknown scalar mode {other:?}"))),
        }
    }
}

/// Per-dimension value range observed on the training corpus. The fp8 grid
/// spans `[per_dim_min[i], per_dim_max[i]]` in 255 equal steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarQuantParams {
    pub mode: ScalarMode,
    pub per_dim_min: Vec<f32>,
    pub per_dim_max: Vec<f32>,
}

impl ScalarQuantParams {
    pub fn fit<T: Scalar>(m: &EmbeddingMatrix<T>, mode: ScalarMode) -> Self {
        let d = m.dim();
        let mut lo = vec![f32::INFINITY; d];
        let mut hi = vec![f32::NEG_INFINITY; d];
        for row in m.rows() {
            for (i, v) in row.iter().enumerate() {
                let v = v.to_f32_lossy();
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        if m.is_empty() {
            lo.fill(0.0);
            hi.fill(0.0);
        }
        Self {
            mode,
            per_dim_min: lo,
            per_dim_max: hi,
        }
    }

    /// Width of one fp8 quantization step in dimension `i`.
    pub fn step(&self, i: usize) -> f64 {
        (self.per_dim_max[i] as f64 - self.per_dim_min[i] as f64) / FP8_LEVELS
    }

    fn fp8_encode(&self, i: usize, v: f64) -> u8 {
        let step = self.step(i);
        if step <= 0.0 {
            return 0;
        }
        let q = ((v - self.per_dim_min[i] as f64) / step).round();
        q.clamp(0.0, FP8_LEVELS) as u8
    }

    fn fp8_decode(&self, i: usize, code: u8) -> f64 {
        let lo = self.per_dim_min[i] as f64;
        let hi = self.per_dim_max[i] as f64;
        (lo + code as f64 * self.step(i)).clamp(lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarPayload {
    Fp16(Vec<u16>),
    Fp8(Vec<u8>),
}

/// A scalar-quantized corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarCodes {
    pub params: ScalarQuantParams,
    pub dim: usize,
    pub ids: Vec<String>,
    pub payload: ScalarPayload,
}

impl ScalarCodes {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Bytes occupied by the quantized values alone.
    pub fn code_bytes(&self) -> u64 {
        match &self.payload {
            ScalarPayload::Fp16(v) => v.len() as u64 * 2,
            ScalarPayload::Fp8(v) => v.len() as u64,
        }
    }

    /// Code bytes plus the range tables fp8 needs for decoding.
    pub fn payload_bytes(&self) -> u64 {
        match self.params.mode {
            ScalarMode::Fp16 => self.code_bytes(),
            ScalarMode::Fp8 => self.code_bytes() + self.dim as u64 * 8,
        }
    }

    pub fn dequantize<T: Scalar>(&self) -> Result<EmbeddingMatrix<T>> {
        let d = self.dim;
        let data: Vec<T> = match &self.payload {
            ScalarPayload::Fp16(v) => v.iter().map(|&b| T::of(f16::from_bits(b).to_f64())).collect(),
            ScalarPayload::Fp8(v) => v
                .iter()
                .enumerate()
                .map(|(j, &c)| T::of(self.params.fp8_decode(j % d, c)))
                .collect(),
        };
        EmbeddingMatrix::new(self.ids.clone(), d, data)
    }

    pub fn write(&self, path: &Path) -> Result<IndexManifest> {
        let mut w = BufWriter::new(File::create(path)?);
        write_magic(&mut w, SQ_MAGIC)?;
        w.write_u8(self.params.mode.code())?;
        write_u32(&mut w, self.len())?;
        write_u32(&mut w, self.dim)?;
        write_f32s(&mut w, &self.params.per_dim_min)?;
        write_f32s(&mut w, &self.params.per_dim_max)?;
        write_id_block(&mut w, &self.ids)?;
        match &self.payload {
            ScalarPayload::Fp16(v) => {
                for b in v {
                    w.write_u16::<LittleEndian>(*b)?;
                }
            }
            ScalarPayload::Fp8(v) => w.write_all(v)?,
        }
        w.flush()?;
        let size = 4 + 1 + 8 + self.dim as u64 * 8 + id_block_len(&self.ids) + self.code_bytes();
        Ok(IndexManifest {
            kind: match self.params.mode {
                ScalarMode::Fp16 => IndexKind::FlatFp16,
                ScalarMode::Fp8 => IndexKind::FlatFp8,
            },
            dim: self.dim,
            count: self.len(),
            params: CompressionParams::Scalar {
                mode: self.params.mode.name().to_string(),
            },
            size_bytes: size,
            payload_bytes: self.payload_bytes(),
            seed: 0,
            producer: None,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, SQ_MAGIC)?;
        let mode = match read_u8(&mut r, "mode")? {
            1 => ScalarMode::Fp16,
            2 => ScalarMode::Fp8,
            c => return Err(Error::MalformedHeader(format!("unknown scalar mode code {c}"))),
        };
        let n = read_u32(&mut r, "n")? as usize;
        let dim = read_u32(&mut r, "d")? as usize;
        let per_dim_min = read_f32s_exact(&mut r, dim, "minimums")?;
        let per_dim_max = read_f32s_exact(&mut r, dim, "maximums")?;
        let ids = read_id_block(&mut r, n)?;
        let payload = match mode {
            ScalarMode::Fp16 => {
                let bytes = read_bytes_to_end(&mut r, n * dim * 2)?;
                let mut v = vec![0u16; n * dim];
                (&bytes[..]).read_u16_into::<LittleEndian>(&mut v)?;
                ScalarPayload::Fp16(v)
            }
            ScalarMode::Fp8 => ScalarPayload::Fp8(read_bytes_to_end(&mut r, n * dim)?),
        };
        Ok(Self {
            params: ScalarQuantParams {
                mode,
                per_dim_min,
                per_dim_max,
            },
            dim,
            ids,
            payload,
        })
    }
}

/// Quantizes every value of `m`. fp8 ranges are fitted on `m` itself.
pub fn scalar_quantize<T: Scalar>(m: &EmbeddingMatrix<T>, mode: ScalarMode) -> Result<ScalarCodes> {
    let params = ScalarQuantParams::fit(m, mode);
    scalar_quantize_with(m, params)
}

/// Quantizes with previously fitted ranges; out-of-range values clamp.
pub fn scalar_quantize_with<T: Scalar>(
    m: &EmbeddingMatrix<T>,
    params: ScalarQuantParams,
) -> Result<ScalarCodes> {
    let d = m.dim();
    if params.per_dim_min.len() != d || params.per_dim_max.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: params.per_dim_min.len(),
        });
    }
    let payload = match params.mode {
        ScalarMode::Fp16 => {
            let mut out = Vec::with_capacity(m.data().len());
            for (j, v) in m.data().iter().enumerate() {
                let h = f16::from_f64(v.as_f64());
                if h.is_infinite() {
                    return Err(Error::OverflowToInfinity {
                        row: j / d,
                        col: j % d,
                        value: v.as_f64(),
                    });
                }
                out.push(h.to_bits());
            }
            ScalarPayload::Fp16(out)
        }
        ScalarMode::Fp8 => ScalarPayload::Fp8(
            m.data()
                .iter()
                .enumerate()
                .map(|(j, v)| params.fp8_encode(j % d, v.as_f64()))
                .collect(),
        ),
    };
    Ok(ScalarCodes {
        params,
        dim: d,
        ids: m.ids().to_vec(),
        payload,
    })
}
