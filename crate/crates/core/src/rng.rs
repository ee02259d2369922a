//! Deterministic random streams keyed by `(seed, iteration, purpose)`.
//!
//! Every consumer of randomness derives its own generator from the run seed,
//! so results do not depend on call order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    CloudBatch = 2,
    Eikonal = 3,
    Ssa = 4,
    Bank = 5,
    SurfaceDraw = 6,
    Generator = 7,
    Metrics = 8,
    Experiment = 9,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, iteration, purpose)` triple.
pub fn stream(seed: u64, iteration: u64, purpose: Purpose) -> StreamRng {
    let mut state = seed
        ^ iteration.wrapping_mul(0xD6E8_FEB8_6659_FD93)
        ^ (purpose as u64).wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, 3, Purpose::Bank).random();
        let b: u64 = stream(7, 3, Purpose::Bank).random();
        let c: u64 = stream(7, 4, Purpose::Bank).random();
        let d: u64 = stream(7, 3, Purpose::Eikonal).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
