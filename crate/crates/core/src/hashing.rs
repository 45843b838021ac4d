//! Stable hashing used for seeds and the deterministic embedder.
//!
//! `std::hash::DefaultHasher` is not guaranteed stable across toolchains, so
//! anything that feeds a reproducible artifact goes through FNV-1a here.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

fn fnv1a_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Derives a child seed from a master seed and an ordered list of labels.
///
/// Labels are length-prefixed so `["ab", "c"]` and `["a", "bc"]` differ.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut hash = fnv1a_extend(FNV_OFFSET, &master.to_le_bytes());
    for part in parts {
        hash = fnv1a_extend(hash, &(part.len() as u64).to_le_bytes());
        hash = fnv1a_extend(hash, part.as_bytes());
    }
    // final avalanche (splitmix64 finalizer)
    let mut z = hash.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
