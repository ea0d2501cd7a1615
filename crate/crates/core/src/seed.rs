//! Child-seed derivation.
//!
//! Every random choice in a run (cluster initialisation, random cluster policy,
//! hybrid shuffles, multi-yes tie breaks) draws from its own generator seeded by
//! hashing the run seed together with the identifiers of the unit of work. Work
//! can therefore be scheduled in any order on any number of threads without
//! perturbing the draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One component of a child-seed path.
#[derive(Debug, Clone, Copy)]
pub enum SeedPart<'a> {
    Str(&'a str),
    Int(u64),
}

impl<'a> From<&'a str> for SeedPart<'a> {
    fn from(s: &'a str) -> Self {
        SeedPart::Str(s)
    }
}

impl From<u64> for SeedPart<'_> {
    fn from(v: u64) -> Self {
        SeedPart::Int(v)
    }
}

impl From<usize> for SeedPart<'_> {
    fn from(v: usize) -> Self {
        SeedPart::Int(v as u64)
    }
}

/// Derive a child seed from `root` and a path of identifiers.
///
/// Strings and integers are domain-separated so `"1"` and `1` give different
/// seeds.
pub fn child_seed(root: u64, path: &[SeedPart<'_>]) -> u64 {
    let mut h = splitmix64(root);
    for part in path {
        let mixed = match part {
            SeedPart::Str(s) => fnv1a64(s.as_bytes()) ^ 0x5354_5200,
            SeedPart::Int(v) => splitmix64(*v) ^ 0x494E_5400,
        };
        h = splitmix64(h ^ mixed);
    }
    h
}

/// Seeded generator used everywhere in the crate.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
