//! Index-size rows in decimal megabytes.

use serde::{Deserialize, Serialize};

use crate::data::manifest::{IndexManifest, BYTES_PER_MB};

/// `payload_mb` is the in-memory index (vectors or codes plus codebook);
/// `file_mb` is the whole file on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub kind: String,
    pub count: usize,
    pub dim: usize,
    pub payload_bytes: u64,
    pub size_bytes: u64,
    pub payload_mb: String,
    pub file_mb: String,
}

/// Two decimals, e.g. `3072.00 MB`.
pub fn format_mb(bytes: u64) -> String {
    format!("{:.2} MB", bytes as f64 / BYTES_PER_MB)
}

pub fn report_index_size(manifest: &IndexManifest) -> SizeRow {
    SizeRow {
        kind: manifest.kind.name().to_string(),
        count: manifest.count,
        dim: manifest.dim,
        payload_bytes: manifest.payload_bytes,
        size_bytes: manifest.size_bytes,
        payload_mb: format_mb(manifest.payload_bytes),
        file_mb: format_mb(manifest.size_bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(format_mb(3_072_000_000), "3072.00 MB");
        assert_eq!(format_mb(96_786_432), "96.79 MB");
        assert_eq!(format_mb(0), "0.00 MB");
    }
}
