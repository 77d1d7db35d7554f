//! Per-subsystem seeds derived from one root seed.

/// Seed streams used across the crate.
pub const INIT: &str = "init";
pub const DATA: &str = "data";
pub const BATCH: &str = "batch";
pub const SAMPLER: &str = "sampler";

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for subsystem `tag` under `root`.
pub fn derive(root: u64, tag: &str) -> u64 {
    let h = tag
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    mix(root.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(3) ^ mix(h))
}
