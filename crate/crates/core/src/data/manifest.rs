use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const BYTES_PER_MB: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    FlatF32,
    FlatFp16,
    FlatFp8,
    Pca,
    Pq,
    Binary,
    Jpq,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::FlatF32 => "flat-f32",
            IndexKind::FlatFp16 => "flat-fp16",
            IndexKind::FlatFp8 => "flat-fp8",
            IndexKind::Pca => "pca",
            IndexKind::Pq => "pq",
            IndexKind::Binary => "binary",
            IndexKind::Jpq => "jpq",
        }
    }
}

/// Kind-specific parameters recorded with an index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CompressionParams {
    None,
    Scalar { mode: String },
    Pca { input_dim: usize, target_dim: usize, whiten: bool },
    Pq { m_subspaces: usize, k_centroids: usize, d_sub: usize },
    Binary { d_bits: usize },
}

/// Which command produced an artifact and with what resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Producer {
    pub command: String,
    pub config: serde_json::Value,
}

/// Sidecar description of an index file.
///
/// `size_bytes` is the byte count of the whole file. `payload_bytes` counts
/// only what a vector index must hold in memory to answer queries (vectors or
/// codes plus any codebook), which is what index-size tables report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub kind: IndexKind,
    pub dim: usize,
    pub count: usize,
    pub params: CompressionParams,
    pub size_bytes: u64,
    pub payload_bytes: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub producer: Option<Producer>,
}

impl IndexManifest {
    pub fn with_producer(mut self, command: &str, config: serde_json::Value) -> Self {
        self.producer = Some(Producer {
            command: command.to_string(),
            config,
        });
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn payload_mb(&self) -> f64 {
        self.payload_bytes as f64 / BYTES_PER_MB
    }

    pub fn file_mb(&self) -> f64 {
        self.size_bytes as f64 / BYTES_PER_MB
    }

    /// Writes the manifest next to the index it describes.
    pub fn write_sidecar(&self, index_path: &Path) -> Result<PathBuf> {
        let path = manifest_path(index_path);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read_sidecar(index_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path(index_path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `<index>.manifest.json`
pub fn manifest_path(index_path: &Path) -> PathBuf {
    let mut s = index_path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
