//! Deterministic random streams keyed by a path of integers.
//!
//! A stream for `(seed, cell, replicate)` is independent of how many other
//! streams exist or of the order in which they are drawn, so results do not
//! depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a key path into one 64-bit seed.
pub fn derive_seed(path: &[u64]) -> u64 {
    path.iter().fold(0x6A09_E667_F3BC_C908, |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn stream(path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(path))
}

/// Stable 64-bit hash of a string (FNV-1a), for labelling cells.
pub fn label_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = stream(&[1, 2, 3]).random_iter().take(4).collect();
        let b: Vec<u64> = stream(&[1, 2, 3]).random_iter().take(4).collect();
        let c: Vec<u64> = stream(&[1, 3, 2]).random_iter().take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(&[0]), derive_seed(&[0, 0]));
    }
}
