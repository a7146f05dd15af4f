//! Deterministic sub-seed derivation.
//!
//! Every random stage derives its own seed from the master seed, a stage
//! tag, and an index. The derivation is a fixed integer mix (FNV-1a over
//! the tag, splitmix64 finalizers), so results are identical across
//! platforms and independent of evaluation order — explaining row 17 gives
//! the same answer whether it runs first, last, or on another thread.

/// Derive a child seed from `(master, tag, index)`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(splitmix(master ^ h).wrapping_add(index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
