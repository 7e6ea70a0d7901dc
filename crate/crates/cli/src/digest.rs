use std::fmt::Write;

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Incremental digest over labelled parts, git-object style: each part is
/// hashed as `label SP length NUL bytes`.
#[derive(Default)]
pub struct ContentDigest {
    hasher: Sha256,
}

impl ContentDigest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(&mut self, label: &str, bytes: &[u8]) -> &mut Self {
        self.hasher
            .update(format!("{label} {}\0", bytes.len()).as_bytes());
        self.hasher.update(bytes);
        self
    }

    pub fn hex(&self) -> String {
        hex(&self.hasher.clone().finalize())
    }
}

/// First 16 hex digits, as carried in CSV rows.
pub fn short(digest: &str) -> &str {
    &digest[..16.min(digest.len())]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn parts_are_length_delimited() {
        let a = ContentDigest::new().part("x", b"ab").part("y", b"c").hex();
        let b = ContentDigest::new().part("x", b"a").part("y", b"bc").hex();
        assert_ne!(a, b);
    }
}
