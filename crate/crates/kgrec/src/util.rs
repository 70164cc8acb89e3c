//! Small shared helpers.

/// Derives a child seed from a base seed plus a tag and two indices, so that
/// independent RNG streams (per epoch, batch, model, fold, ...) never share
/// state. FNV-1a over the inputs; stable across platforms.
pub(crate) fn derive_seed(base: u64, tag: &str, a: u64, b: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for chunk in [base, a, b] {
        for byte in chunk.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    for byte in tag.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}
