//! Seed fan-out. One master seed feeds every stage of a run; each stage
//! draws from its own ChaCha8 stream keyed by
//! `splitmix64(master ^ fnv1a64(stage_name))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stage called `stage` under `master`.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    splitmix64(master ^ fnv1a64(stage.as_bytes()))
}

/// Seed for the `index`-th repetition of a stage (e.g. a k-means restart).
pub fn derive_indexed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(master: u64, stage: &str) -> StageRng {
    rng(derive_seed(master, stage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn stages_get_distinct_seeds() {
        assert_ne!(derive_seed(1, "split"), derive_seed(1, "kmeans"));
        assert_ne!(derive_seed(1, "split"), derive_seed(2, "split"));
        assert_eq!(derive_seed(7, "test"), derive_seed(7, "test"));
    }
}
