//! Counter-based random substreams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by the
//! master seed plus a short path of labels (group, subject, role, epoch...).
//! Keying by content rather than by iteration order means any single stream
//! can be regenerated in isolation and parallel execution produces the same
//! numbers as sequential execution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a substream key.
#[derive(Clone, Copy, Debug)]
pub enum Key<'a> {
    Str(&'a str),
    Int(u64),
}

impl<'a> From<&'a str> for Key<'a> {
    fn from(s: &'a str) -> Self {
        Key::Str(s)
    }
}

impl From<u64> for Key<'_> {
    fn from(v: u64) -> Self {
        Key::Int(v)
    }
}

impl From<usize> for Key<'_> {
    fn from(v: usize) -> Self {
        Key::Int(v as u64)
    }
}

/// Derive an independent generator from `seed` and a key path.
pub fn substream(seed: u64, path: &[Key<'_>]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, path))
}

/// Derive a 64-bit child seed, e.g. a per-fold training seed.
pub fn child_seed(seed: u64, path: &[Key<'_>]) -> u64 {
    let bytes = derive_seed(seed, path);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

fn derive_seed(seed: u64, path: &[Key<'_>]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"funcnet-substream-v1");
    h.update(seed.to_le_bytes());
    for k in path {
        match k {
            Key::Str(s) => {
                h.update([0u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
            Key::Int(v) => {
                h.update([1u8]);
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

/// Hash arbitrary bytes to hex; used for config fingerprints.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
