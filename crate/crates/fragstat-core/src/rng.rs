//! Counter-based random streams.
//!
//! Every Monte Carlo replicate draws from its own ChaCha stream addressed by
//! `(seed, domain, index)`: the seed keys the cipher, and the 64-bit stream
//! number encodes an experiment domain together with the replicate index.
//! Replicate `i` therefore produces the same draws no matter how many worker
//! threads are running or in which order chunks are scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The concrete RNG used throughout the crate. Twelve rounds: nonce-adjacent
/// 8-round streams showed measurable window correlations under a fixed key
/// in this binary's addressing pattern; twelve rounds (the `StdRng` margin)
/// are clean under the same probes.
pub type Stream = ChaCha12Rng;

const INDEX_BITS: u32 = 40;

/// Experiment domains; keeps replicate streams of different phases of one
/// run (e.g. the CLT trees and the V estimator inside one report) disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Tree = 0,
    Tags = 1,
    Renewal = 2,
    EtaSampler = 3,
    VPairTag = 4,
    VCoupled = 5,
    Rate = 6,
    Lln = 7,
    Clt = 8,
    Wick = 9,
    OddMoment = 10,
    Selftest = 11,
    Calibration = 12,
}

/// One stream per `(seed, domain, replicate index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> Stream {
    assert!(index < 1 << INDEX_BITS, "replicate index too large");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << INDEX_BITS) | index);
    rng
}

/// Stream factory bound to a seed and a domain; estimators take this instead
/// of a single generator so they can fan out over replicates.
#[derive(Debug, Clone, Copy)]
pub struct Streams {
    seed: u64,
    domain: Domain,
}

impl Streams {
    pub fn new(seed: u64, domain: Domain) -> Self {
        Streams { seed, domain }
    }

    pub fn stream(&self, index: u64) -> Stream {
        stream(self.seed, self.domain, index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_disjoint() {
        let mut a = stream(42, Domain::Tree, 7);
        let mut b = stream(42, Domain::Tree, 7);
        let xs: Vec<f64> = (0..8).map(|_| a.random()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.random()).collect();
        assert_eq!(xs, ys);

        let mut c = stream(42, Domain::Tree, 8);
        let zs: Vec<f64> = (0..8).map(|_| c.random()).collect();
        assert_ne!(xs, zs);

        let mut d = stream(42, Domain::Tags, 7);
        let ws: Vec<f64> = (0..8).map(|_| d.random()).collect();
        assert_ne!(xs, ws);
    }
}
