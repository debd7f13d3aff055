//! Canonical JSON rendering.
//!
//! Snapshots and digests need byte-stable serialization: sorted object keys,
//! LF line endings, no trailing whitespace. `serde_json`'s default map type
//! is a `BTreeMap`, so keys come out sorted; this module pins the remaining
//! conventions (compact form for hashing, pretty form for snapshots).

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Compact canonical JSON: sorted keys, no whitespace. Used for hashing.
pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&v).expect("json encoding")
}

/// Pretty canonical JSON: sorted keys, 2-space indent, trailing newline.
/// Used for byte-comparable state snapshots.
pub fn to_snapshot_string<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&v).expect("json encoding");
    s.push('\n');
    s
}

/// SHA-256 of the compact canonical form, rendered as 64 hex chars.
pub fn content_digest<T: Serialize>(value: &T) -> String {
    sha256_hex(to_canonical_string(value).as_bytes())
}

/// SHA-256 of raw bytes as 64 lowercase hex chars.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn keys_sorted_regardless_of_insertion_order() {
        let mut a = BTreeMap::new();
        a.insert("zeta", 1);
        a.insert("alpha", 2);
        let mut b = BTreeMap::new();
        b.insert("alpha", 2);
        b.insert("zeta", 1);
        assert_eq!(to_canonical_string(&a), to_canonical_string(&b));
        assert_eq!(content_digest(&a), content_digest(&b));
    }

    #[test]
    fn digest_is_64_hex() {
        let d = content_digest(&"hello");
        assert_eq!(d.len(), 64);
        assert!(d.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn snapshot_ends_with_lf() {
        let s = to_snapshot_string(&serde_json::json!({"a": 1}));
        assert!(s.ends_with('\n'));
        assert!(!s.contains('\r'));
    }
}
