//! Seed derivation. Every random stream in the crate is keyed off a root seed
//! through [`derive_seed`], so results never depend on execution order.

use sha2::{Digest, Sha256};

/// Stable 64-bit seed for `(root, domain, key)`. Length prefixes keep
/// `("ab", "c")` and `("a", "bc")` apart.
pub fn derive_seed(root: u64, domain: &str, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"logoscope-seed/1");
    h.update(root.to_le_bytes());
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// Hex SHA-256 digest of arbitrary byte parts, each length-prefixed.
pub fn digest_hex<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}
