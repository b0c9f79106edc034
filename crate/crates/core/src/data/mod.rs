//! Sample identities, JSONL manifests and the binary embedding store.

mod embedding;
mod manifest;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use embedding::{concat_features, joint_features, EmbeddingMatrix, MIN_ROW_NORM};
pub use manifest::{load_manifest, parse_manifest, write_manifest, SampleRecord};
pub use store::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, DTYPE_F32,
    FORMAT_VERSION, HEADER_LEN, MAGIC,
};

/// Identity of one (image, question) pair in the unlabeled pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for SampleId {
    fn from(v: u64) -> Self {
        SampleId(v)
    }
}
