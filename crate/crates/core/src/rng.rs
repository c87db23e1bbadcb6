//! Named counter-based random streams.
//!
//! Every random draw in the pipeline comes from a stream keyed by the master
//! seed, a purpose string and an index. The key is hashed into a ChaCha seed
//! and the index selects the ChaCha stream, so draws for one purpose never
//! depend on how many draws another purpose made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn stream(master_seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}
