//! Content-addressed in-memory blob store. Stands in for the dataset and
//! signal URLs of the wire protocol: a reference is the digest of the
//! content it resolves to.

use std::collections::BTreeMap;

use crate::codec::{digest_bytes, Digest};

#[derive(Clone, Default, Debug)]
pub struct BlobStore {
    blobs: BTreeMap<Digest, Vec<u8>>,
}

impl BlobStore {
    pub fn new() -> BlobStore {
        BlobStore::default()
    }

    /// Store content and return its reference.
    pub fn put(&mut self, data: Vec<u8>) -> Digest {
        let d = digest_bytes(&data);
        self.blobs.insert(d, data);
        d
    }

    pub fn get(&self, r: &Digest) -> Option<&[u8]> {
        self.blobs.get(r).map(|v| v.as_slice())
    }

    pub fn contains(&self, r: &Digest) -> bool {
        self.blobs.contains_key(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refs_are_content_digests() {
        let mut store = BlobStore::new();
        let r = store.put(vec![1, 2, 3]);
        assert_eq!(r, digest_bytes(&[1, 2, 3]));
        assert_eq!(store.get(&r), Some([1u8, 2, 3].as_slice()));
        assert!(!store.contains(&digest_bytes(b"missing")));
    }
}
