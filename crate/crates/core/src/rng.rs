//! Named random sub-streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// A generator for the stream `name` under `root_seed`. Distinct names give
/// independent streams; the same pair always gives the same stream.
pub fn substream(root_seed: u64, name: &str) -> StreamRng {
    let mut h = Sha256::new();
    h.update(root_seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
