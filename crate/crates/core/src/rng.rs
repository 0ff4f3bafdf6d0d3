//! Seed derivation.
//!
//! Every random quantity is derived from one master seed through named
//! sub-streams, and every trial draws from its own ChaCha stream keyed by the
//! trial index. Results therefore never depend on how work is split across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives the seed of a named sub-stream ("device", "powers", "sampler", ...).
pub fn substream_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Sub-stream seed indexed by an integer, e.g. one per power setting.
pub fn indexed_seed(master: u64, name: &str, index: u64) -> u64 {
    substream_seed(substream_seed(master, name), &index.to_string())
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn named_streams_differ() {
        assert_ne!(substream_seed(1, "device"), substream_seed(1, "powers"));
        assert_ne!(substream_seed(1, "device"), substream_seed(2, "device"));
        assert_eq!(substream_seed(9, "sampler"), substream_seed(9, "sampler"));
    }

    #[test]
    fn trial_streams_are_reproducible_and_distinct() {
        let a: u64 = trial_rng(5, 3).random();
        let b: u64 = trial_rng(5, 3).random();
        let c: u64 = trial_rng(5, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
