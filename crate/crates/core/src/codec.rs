//! Canonical byte encoding and hashing.
//!
//! Every consensus-relevant value is encoded through [`Enc`] into a canonical
//! byte string: integers are big-endian, byte strings are length-prefixed,
//! maps are emitted in sorted key order. Digests are SHA-256 over that
//! encoding, so equal values hash equally on every node and platform.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest as _, Sha256};

/// 32-byte canonical digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

impl serde::Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

impl<'de> serde::Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad digest hex"))
    }
}

/// Canonical encoder. All multi-byte integers are big-endian.
#[derive(Default)]
pub struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    pub fn new() -> Enc {
        Enc::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    /// Length-prefixed byte string (u32 big-endian length).
    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(&(v.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, v: &str) {
        self.bytes(v.as_bytes());
    }

    /// Fixed-width raw bytes, no length prefix.
    pub fn raw(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn opt_u64(&mut self, v: Option<u64>) {
        match v {
            None => self.u8(0),
            Some(x) => {
                self.u8(1);
                self.u64(x);
            }
        }
    }

    pub fn count(&mut self, n: usize) {
        self.buf.extend_from_slice(&(n as u32).to_be_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Values with a canonical byte representation.
pub trait Canon {
    fn encode(&self, e: &mut Enc);
}

pub fn canon_bytes<T: Canon + ?Sized>(v: &T) -> Vec<u8> {
    let mut e = Enc::new();
    v.encode(&mut e);
    e.finish()
}

pub fn digest_of<T: Canon + ?Sized>(v: &T) -> Digest {
    digest_bytes(&canon_bytes(v))
}

pub fn digest_bytes(data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(data);
    Digest(h.finalize().into())
}

/// Digest of several length-delimited parts; used to derive seeds and keys.
pub fn digest_parts(parts: &[&[u8]]) -> Digest {
    let mut e = Enc::new();
    for p in parts {
        e.bytes(p);
    }
    digest_bytes(&e.finish())
}

impl Canon for u64 {
    fn encode(&self, e: &mut Enc) {
        e.u64(*self);
    }
}

impl Canon for u128 {
    fn encode(&self, e: &mut Enc) {
        e.u128(*self);
    }
}

impl Canon for bool {
    fn encode(&self, e: &mut Enc) {
        e.bool(*self);
    }
}

impl Canon for Digest {
    fn encode(&self, e: &mut Enc) {
        e.raw(&self.0);
    }
}

impl Canon for [u8] {
    fn encode(&self, e: &mut Enc) {
        e.bytes(self);
    }
}

impl Canon for Vec<u8> {
    fn encode(&self, e: &mut Enc) {
        e.bytes(self);
    }
}

impl Canon for str {
    fn encode(&self, e: &mut Enc) {
        e.str(self);
    }
}

impl Canon for String {
    fn encode(&self, e: &mut Enc) {
        e.str(self);
    }
}

impl<T: Canon> Canon for Option<T> {
    fn encode(&self, e: &mut Enc) {
        match self {
            None => e.u8(0),
            Some(v) => {
                e.u8(1);
                v.encode(e);
            }
        }
    }
}

impl<A: Canon, B: Canon> Canon for (A, B) {
    fn encode(&self, e: &mut Enc) {
        self.0.encode(e);
        self.1.encode(e);
    }
}

impl<T: Canon> Canon for [T] {
    fn encode(&self, e: &mut Enc) {
        e.count(self.len());
        for v in self {
            v.encode(e);
        }
    }
}

impl<T: Canon> Canon for Vec<T>
where
    T: Canon,
{
    fn encode(&self, e: &mut Enc) {
        self.as_slice().encode(e);
    }
}

impl<K: Canon, V: Canon> Canon for BTreeMap<K, V> {
    fn encode(&self, e: &mut Enc) {
        e.count(self.len());
        for (k, v) in self {
            k.encode(e);
            v.encode(e);
        }
    }
}

impl<T: Canon> Canon for BTreeSet<T> {
    fn encode(&self, e: &mut Enc) {
        e.count(self.len());
        for v in self {
            v.encode(e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_digest_is_stable() {
        // SHA-256 of the empty string, a fixed point of the scheme.
        assert_eq!(
            digest_bytes(b"").hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn map_encoding_is_order_independent() {
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), 1u64);
        a.insert("y".to_string(), 2u64);
        let mut b = BTreeMap::new();
        b.insert("y".to_string(), 2u64);
        b.insert("x".to_string(), 1u64);
        assert_eq!(digest_of(&a), digest_of(&b));
    }

    #[test]
    fn single_bit_change_changes_digest() {
        // Spot-check over random mutations of a fixed message.
        let base = b"canonical message for mutation testing".to_vec();
        let d0 = digest_bytes(&base);
        for i in 0..base.len() {
            for bit in 0..8 {
                let mut m = base.clone();
                m[i] ^= 1 << bit;
                assert_ne!(digest_bytes(&m), d0, "mutation at byte {i} bit {bit}");
            }
        }
    }

    #[test]
    fn hex_roundtrip() {
        let d = digest_bytes(b"roundtrip");
        assert_eq!(Digest::from_hex(&d.hex()), Some(d));
        assert_eq!(Digest::from_hex("zz"), None);
    }
}
