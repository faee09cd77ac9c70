//! Content hashes that tie artifacts back to the inputs that produced them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the compact JSON form of the source instance.
    pub spec_hash: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn of_json<T: Serialize>(value: &T, seed: Option<u64>) -> Self {
        Provenance {
            spec_hash: json_hash(value),
            seed,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON serialization; struct field order is fixed, so
/// equal values hash equally.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_vec(value).expect("serializable value");
    sha256_hex(&text)
}
