//! Seeded, stream-separated random number generation for replica ensembles.
//!
//! Every replica draws from its own ChaCha8 stream derived from the master
//! seed and the replica index, so results are bit-identical no matter how
//! replicas are scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator for one replica.
pub type ReplicaRng = ChaCha8Rng;

/// Returns the generator for `replica` under `master_seed`.
pub fn replica_rng(master_seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica);
    rng
}

/// Derives a sub-seed for a named run from a base seed, so that independent
/// runs inside one suite use disjoint stream families.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf29ce484222325 ^ base;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = h.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
