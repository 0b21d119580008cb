//! Seed derivation. Every trial seed is a pure function of the master seed
//! and the trial's coordinates, so results do not depend on scheduling.

/// SplitMix64 output function.
#[inline]
pub fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream `stream` of `seed`.
#[inline]
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream))
}

/// Seed of trial `trial` for haystacks of `group` (the haystack size).
pub fn trial_seed(master: u64, group: u64, trial: u64) -> u64 {
    mix(mix(mix(master) ^ group) ^ trial)
}
