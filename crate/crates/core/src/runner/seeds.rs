//! Named per-purpose seed streams derived from the global seed.
//!
//! `derive_seed(seed, purpose)` is the first eight bytes (little-endian) of
//! `SHA-256("mixdiff-stream" || seed.to_le_bytes() || purpose)`. Adding a new
//! purpose never changes the seed of an existing one.

use sha2::{Digest, Sha256};

pub const TRAIN: &str = "train";
pub const NETWORK_INIT: &str = "network-init";
pub const EXTRACTOR: &str = "extractor";
pub const SAMPLE: &str = "sample";
pub const MIX: &str = "mix";
pub const CURVE: &str = "curve";
pub const CONFUSION_CALIBRATION: &str = "confusion-calibration";
pub const CONFUSION_EVALUATION: &str = "confusion-evaluation";
pub const CHECK: &str = "check";
pub const PROBE: &str = "probe";

pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"mixdiff-stream");
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
