//! Opens any index file by its magic bytes.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use qdr::binhash::BinaryCodeSet;
use qdr::compress::{PcaModel, PqIndex, ScalarCodes, ScalarMode};
use qdr::data::{read_embeddings, IndexKind, IndexManifest};
use qdr::index::{BinaryIndex, FlatIndex, PcaIndex, SearchIndex};

use crate::error::{CliError, CliResult};

pub enum LoadedIndex {
    Flat(FlatIndex<f32>),
    Pca(PcaIndex<f32>),
    Pq(PqIndex<f32>),
    Binary(BinaryIndex),
}

impl LoadedIndex {
    pub fn as_search(&self) -> &dyn SearchIndex<f32> {
        match self {
            LoadedIndex::Flat(i) => i,
            LoadedIndex::Pca(i) => i,
            LoadedIndex::Pq(i) => i,
            LoadedIndex::Binary(i) => i,
        }
    }

    pub fn kind(&self) -> IndexKind {
        self.as_search().kind()
    }

    /// Bytes held in memory to answer queries.
    pub fn payload_bytes(&self) -> u64 {
        match self {
            LoadedIndex::Flat(i) => match i.kind {
                IndexKind::FlatFp16 => (i.vectors.data().len() * 2) as u64,
                IndexKind::FlatFp8 => i.vectors.data().len() as u64 + (i.vectors.dim() * 8) as u64,
                _ => (i.vectors.data().len() * 4) as u64,
            },
            LoadedIndex::Pca(i) => (i.projected.data().len() * 4) as u64,
            LoadedIndex::Pq(i) => i.payload_bytes(),
            LoadedIndex::Binary(i) => i.codes.bytes(),
        }
    }
}

pub fn magic(path: &Path) -> CliResult<[u8; 4]> {
    let mut buf = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut buf))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(buf)
}

/// A projected corpus (an embeddings file whose manifest says `pca`) also
/// needs the fitted `model`.
pub fn load_index(path: &Path, model: Option<&Path>, k1: usize) -> CliResult<LoadedIndex> {
    let with_path = |e: qdr::Error| CliError::from(e).with_context(path);
    match &magic(path)? {
        b"EMB1" => {
            let vectors = read_embeddings::<f32>(path).map_err(with_path)?;
            let kind = IndexManifest::read_sidecar(path).map(|m| m.kind).unwrap_or(IndexKind::FlatF32);
            if kind == IndexKind::Pca {
                let model = model.ok_or_else(|| {
                    CliError::Usage(format!("{} is a PCA-projected corpus; pass --model", path.display()))
                })?;
                let model = PcaModel::<f32>::read(model).map_err(|e| CliError::from(e).with_context(model))?;
                if model.target_dim() != vectors.dim() {
                    return Err(CliError::Data(format!(
                        "model projects to {} dims but the index has {}",
                        model.target_dim(),
                        vectors.dim()
                    )));
                }
                Ok(LoadedIndex::Pca(PcaIndex {
                    model,
                    projected: vectors,
                }))
            } else {
                Ok(LoadedIndex::Flat(FlatIndex::new(vectors)))
            }
        }
        b"SQX1" => {
            let codes = ScalarCodes::read(path).map_err(with_path)?;
            let kind = match codes.params.mode {
                ScalarMode::Fp16 => IndexKind::FlatFp16,
                ScalarMode::Fp8 => IndexKind::FlatFp8,
            };
            Ok(LoadedIndex::Flat(FlatIndex {
                vectors: codes.dequantize().map_err(with_path)?,
                kind,
            }))
        }
        b"PQX1" => Ok(LoadedIndex::Pq(PqIndex::read(path).map_err(with_path)?)),
        b"BIN1" => Ok(LoadedIndex::Binary(BinaryIndex {
            codes: BinaryCodeSet::read(path).map_err(with_path)?,
            k1,
        })),
        other => Err(CliError::Data(format!(
            "{}: unrecognized file magic {:?}",
            path.display(),
            String::from_utf8_lossy(other)
        ))),
    }
}

impl CliError {
    pub fn with_context(self, path: &Path) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
            CliError::Internal(m) => CliError::Internal(format!("{}: {m}", path.display())),
        }
    }
}
