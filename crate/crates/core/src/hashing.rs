use sha2::{Digest, Sha256};

/// Hex SHA-256 over length-prefixed parts, so `("ab","c")` and `("a","bc")` differ.
pub(crate) fn content_hash(parts: &[&[u8]]) -> String {
    hex::encode(digest_parts(parts))
}

pub(crate) fn digest_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    let mut buf = [0u8; 32];
    buf.copy_from_slice(&out);
    buf
}

/// Uniform draw in `[0, 1)` from the first 53 bits of the digest.
pub(crate) fn unit_interval(parts: &[&[u8]]) -> f64 {
    let d = digest_parts(parts);
    let mut word = [0u8; 8];
    word.copy_from_slice(&d[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}

pub(crate) fn hash_u64(parts: &[&[u8]]) -> u64 {
    let d = digest_parts(parts);
    let mut word = [0u8; 8];
    word.copy_from_slice(&d[8..16]);
    u64::from_le_bytes(word)
}

/// 64-bit FNV-1a, used where a fast non-cryptographic stable hash suffices.
pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_separates_parts() {
        assert_ne!(content_hash(&[b"ab", b"c"]), content_hash(&[b"a", b"bc"]));
        assert_eq!(content_hash(&[b"x"]).len(), 64);
    }

    #[test]
    fn unit_interval_in_range() {
        for i in 0u32..200 {
            let u = unit_interval(&[&i.to_le_bytes()]);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
