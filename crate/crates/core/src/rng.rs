//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`Stream`]. Streams are ChaCha8
//! instances keyed by a 64-bit seed and a 64-bit stream id, so independent
//! workers can draw from disjoint sequences and produce identical results no
//! matter how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Stream `id` of the generator seeded with `seed`.
pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derive a stream from a seed and a path of labels, e.g. `[replicate, n, purpose]`.
pub fn substream(seed: u64, path: &[u64]) -> Stream {
    stream(seed, mix_path(path))
}

/// Derive a child seed from a seed and a path of labels.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0x6a09_e667_f3bc_c909);
    for &p in path {
        h = splitmix(h ^ p);
    }
    h
}

fn mix_path(path: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3_u64;
    for &p in path {
        h = splitmix(h ^ p);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
