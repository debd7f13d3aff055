//! Deterministic pseudo-randomness for the simulator.
//!
//! One master seed per scenario; every consumer (a node, the service plane
//! of a vcluster, ...) gets its own stream forked by stable string key, so
//! adding a node never perturbs another node's draws.

use serde::{Deserialize, Serialize};

/// splitmix64 step; used both as the stream generator and the seed mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a string; stable across platforms and releases.
fn fnv1a(key: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A deterministic splitmix64 stream. Not cryptographic; reproducibility is
/// the only requirement.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SimRng {
    state: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Fork a stream for `key` from a master seed. Pure function of
    /// (seed, key): lazily forking mid-run is identical to forking up front.
    pub fn fork(seed: u64, key: &str) -> Self {
        let mut s = seed ^ fnv1a(key);
        // one warm-up step decorrelates near-identical keys
        let first = splitmix64(&mut s);
        Self { state: first }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform draw in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        // 53 mantissa bits
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// True with probability `p` (clamped to [0, 1]).
    pub fn chance(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.next_f64() < p
    }

    /// Uniform draw in [0, bound); returns 0 for bound 0.
    pub fn next_bounded(&mut self, bound: u64) -> u64 {
        if bound == 0 {
            0
        } else {
            self.next_u64() % bound
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SimRng::new(7);
        let mut b = SimRng::new(7);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn forks_are_independent_of_other_keys() {
        let a1 = SimRng::fork(42, "n001");
        let a2 = SimRng::fork(42, "n001");
        let b = SimRng::fork(42, "n002");
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
    }

    #[test]
    fn chance_extremes() {
        let mut r = SimRng::new(1);
        assert!(!r.chance(0.0));
        assert!(r.chance(1.0));
    }

    #[test]
    fn chance_frequency_tracks_p() {
        let mut r = SimRng::fork(123, "freq");
        let n = 100_000;
        let hits = (0..n).filter(|_| r.chance(0.3)).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "freq {freq}");
    }
}
