use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{BuildHasherDefault, Hash, Hasher};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Hash32(pub [u8; 32]);

// Digests are already uniform; a prefix is plenty for hash tables.
impl Hash for Hash32 {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let mut prefix = [0u8; 8];
        prefix.copy_from_slice(&self.0[..8]);
        state.write_u64(u64::from_le_bytes(prefix));
    }
}

/// Passes a digest prefix straight through instead of rehashing it.
#[derive(Clone, Copy, Debug, Default)]
pub struct DigestHasher(u64);

impl Hasher for DigestHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ u64::from(b);
        }
    }

    fn write_u64(&mut self, n: u64) {
        self.0 ^= n;
    }
}

pub type BuildDigestHasher = BuildHasherDefault<DigestHasher>;
pub type DigestMap<V> = HashMap<Hash32, V, BuildDigestHasher>;
pub type DigestSet = HashSet<Hash32, BuildDigestHasher>;

impl Hash32 {
    pub fn of(parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        Hash32(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn leading_zero_bits(&self) -> u32 {
        let mut n = 0;
        for b in self.0 {
            if b == 0 {
                n += 8;
            } else {
                n += b.leading_zeros();
                break;
            }
        }
        n
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash32 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32-byte hex digest"))?;
        Ok(Hash32(arr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_maps_use_the_prefix() {
        use std::hash::BuildHasher;
        let h = Hash32::of(&[b"x"]);
        let mut prefix = [0u8; 8];
        prefix.copy_from_slice(&h.0[..8]);
        assert_eq!(BuildDigestHasher::default().hash_one(h), u64::from_le_bytes(prefix));
        let set: DigestSet = (0u8..50).map(|i| Hash32::of(&[&[i]])).collect();
        assert_eq!(set.len(), 50);
        assert!(set.contains(&Hash32::of(&[&[7]])));
    }

    #[test]
    fn leading_zeros() {
        let mut h = Hash32([0xff; 32]);
        assert_eq!(h.leading_zero_bits(), 0);
        h.0[0] = 0;
        h.0[1] = 0x10;
        assert_eq!(h.leading_zero_bits(), 11);
        assert_eq!(Hash32::default().leading_zero_bits(), 256);
    }

    #[test]
    fn hex_round_trip() {
        let h = Hash32::of(&[b"abc"]);
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<Hash32>(&json).unwrap(), h);
    }
}
