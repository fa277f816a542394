//! Seed derivation and per-trial generators.
//!
//! Every stochastic routine in the crate takes an explicit `u64` seed and
//! builds its generator through [`trial_rng`]. Batch runners derive
//! per-trial seeds with [`derive_seed`], a keyed splitmix chain, so results
//! are independent of worker count and scheduling order.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

/// The generator used throughout: small state, fast, seedable from a u64.
pub type TrialRng = Pcg64Mcg;

/// splitmix64 finalizer; bijective on u64.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Chain a master seed with labelled components (experiment kind, scale
/// index, trial index, ...) into one trial seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = mix64(master);
    for &p in parts {
        s = mix64(s.rotate_left(7) ^ mix64(p));
    }
    s
}

/// Generator for one trial.
pub fn trial_rng(seed: u64) -> TrialRng {
    Pcg64Mcg::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_is_stable() {
        // Frozen values: seed derivation is part of the reproducibility
        // contract, so any change here is a breaking change.
        assert_eq!(derive_seed(0, &[]), mix64(0));
        assert_eq!(derive_seed(42, &[1, 2, 3]), {
            let mut s = mix64(42);
            for p in [1u64, 2, 3] {
                s = mix64(s.rotate_left(7) ^ mix64(p));
            }
            s
        });
        assert_ne!(derive_seed(1, &[0]), derive_seed(0, &[1]));
        assert_ne!(derive_seed(7, &[5, 6]), derive_seed(7, &[6, 5]));
    }

    #[test]
    fn trial_rng_reproduces() {
        let mut a = trial_rng(123);
        let mut b = trial_rng(123);
        for _ in 0..16 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }
}
