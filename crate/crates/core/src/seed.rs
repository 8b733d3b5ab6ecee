//! Deterministic sub-seed derivation.
//!
//! Every randomized stage (init, shuffling, dropout, SMOTE, subsampling)
//! draws from its own ChaCha stream seeded by `derive_seed(base, tag)`, so
//! reordering stages or running them concurrently never perturbs results.

/// FNV-1a over the base seed and a textual tag.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in base.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}
