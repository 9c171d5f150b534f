use sha2::{Digest, Sha256};

/// Derive a named sub-seed from a master seed, so that independent random
/// streams (pool, split, initial set, training, ...) never share state and
/// stay stable when other streams change.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 yields 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, "pool", 0), derive_seed(1, "pool", 0));
        assert_ne!(derive_seed(1, "pool", 0), derive_seed(1, "split", 0));
        assert_ne!(derive_seed(1, "pool", 0), derive_seed(1, "pool", 1));
        assert_ne!(derive_seed(1, "pool", 0), derive_seed(2, "pool", 0));
    }
}
