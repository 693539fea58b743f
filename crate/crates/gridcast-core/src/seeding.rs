//! Deterministic derivation of subordinate RNG seeds.
//!
//! Every place in the pipeline that needs randomness (row subsampling,
//! weight init, batch shuffling, importance permutations) takes a seed
//! derived from the experiment's master seed and a fixed label path, so a
//! run is reproducible regardless of execution order or thread count.

/// SplitMix64 step: a cheap, well-mixed 64-bit permutation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a label path.
///
/// The same `(master, labels)` always yields the same child, and distinct
/// label paths yield (with overwhelming probability) distinct children.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &label in labels {
        state = splitmix64(state ^ splitmix64(label));
    }
    state
}
