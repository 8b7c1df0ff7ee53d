//! Out-of-the-box compressors: scalar quantization, PCA, and product
//! quantization.

pub mod kmeans;
pub mod pca;
pub mod pq;
pub mod scalar;

pub use pca::{fit_pca, PcaModel};
pub use pq::{fit_pq, pq_decode, pq_encode, pq_search, PqCodeSet, PqCodebook, PqIndex};
pub use scalar::{scalar_quantize, ScalarCodes, ScalarMode, ScalarQuantParams};
