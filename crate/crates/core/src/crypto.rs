//! Signing keys, account identities, and the symmetric commit-reveal envelope.
//!
//! Signatures are Ed25519; the symmetric envelope is AES-256-GCM with an
//! explicit nonce plus a commitment hash over the plaintext, so a wrong key
//! (DecryptFailed) is distinguishable from a lying commitment (CommitMismatch).

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use thiserror::Error;

use crate::codec::{digest_bytes, Canon, Digest, Enc};

pub const NONCE_LEN: usize = 12;
pub const SIG_LEN: usize = 64;

/// Account identity: digest of the Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AccountId(pub Digest);

impl AccountId {
    pub fn from_verifying_key(key: &[u8; 32]) -> AccountId {
        AccountId(digest_bytes(key))
    }

    pub fn hex(&self) -> String {
        self.0.hex()
    }

    /// Short prefix for human-facing output.
    pub fn short(&self) -> String {
        self.0.hex()[..12].to_string()
    }
}

impl Canon for AccountId {
    fn encode(&self, e: &mut Enc) {
        self.0.encode(e);
    }
}

impl serde::Serialize for AccountId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for AccountId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(AccountId(Digest::deserialize(d)?))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvelopeError {
    /// Wrong key or tampered ciphertext.
    #[error("authenticated decryption failed")]
    DecryptFailed,
    /// Key was right but the embedded commitment does not match the payload.
    #[error("payload digest does not match commitment")]
    CommitMismatch,
    #[error("malformed envelope wire bytes")]
    Malformed,
}

/// A deterministic signing identity derived from a 32-byte seed.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_seed(seed: &[u8; 32]) -> KeyPair {
        KeyPair {
            signing: SigningKey::from_bytes(seed),
        }
    }

    pub fn verifying_key(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn account(&self) -> AccountId {
        AccountId::from_verifying_key(&self.verifying_key())
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; SIG_LEN] {
        self.signing.sign(msg).to_bytes()
    }
}

pub fn verify_signature(key: &[u8; 32], msg: &[u8], sig: &[u8; SIG_LEN]) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(key) else {
        return false;
    };
    vk.verify(msg, &Signature::from_bytes(sig)).is_ok()
}

/// Sealed commit-reveal envelope: AES-256-GCM ciphertext plus a plaintext
/// commitment bound at seal time.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SealedEnvelope {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub commit_hash: Digest,
}

impl SealedEnvelope {
    /// Wire form: nonce ‖ ciphertext ‖ commitHash, each length-prefixed.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut e = Enc::new();
        e.bytes(&self.nonce);
        e.bytes(&self.ciphertext);
        e.bytes(self.commit_hash.as_bytes());
        e.finish()
    }

    pub fn from_wire(data: &[u8]) -> Result<SealedEnvelope, EnvelopeError> {
        let mut r = WireReader(data);
        let nonce: [u8; NONCE_LEN] = r
            .bytes()
            .and_then(|b| b.try_into().ok())
            .ok_or(EnvelopeError::Malformed)?;
        let ciphertext = r.bytes().ok_or(EnvelopeError::Malformed)?.to_vec();
        let commit: [u8; 32] = r
            .bytes()
            .and_then(|b| b.try_into().ok())
            .ok_or(EnvelopeError::Malformed)?;
        if !r.0.is_empty() {
            return Err(EnvelopeError::Malformed);
        }
        Ok(SealedEnvelope {
            nonce,
            ciphertext,
            commit_hash: Digest(commit),
        })
    }
}

impl Canon for SealedEnvelope {
    fn encode(&self, e: &mut Enc) {
        e.bytes(&self.nonce);
        e.bytes(&self.ciphertext);
        self.commit_hash.encode(e);
    }
}

pub(crate) struct WireReader<'a>(pub &'a [u8]);

impl<'a> WireReader<'a> {
    pub fn bytes(&mut self) -> Option<&'a [u8]> {
        if self.0.len() < 4 {
            return None;
        }
        let len = u32::from_be_bytes(self.0[..4].try_into().ok()?) as usize;
        if self.0.len() < 4 + len {
            return None;
        }
        let out = &self.0[4..4 + len];
        self.0 = &self.0[4 + len..];
        Some(out)
    }

    pub fn u8(&mut self) -> Option<u8> {
        let (&b, rest) = self.0.split_first()?;
        self.0 = rest;
        Some(b)
    }

    pub fn u64(&mut self) -> Option<u64> {
        if self.0.len() < 8 {
            return None;
        }
        let v = u64::from_be_bytes(self.0[..8].try_into().ok()?);
        self.0 = &self.0[8..];
        Some(v)
    }

    pub fn raw(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let out = &self.0[..n];
        self.0 = &self.0[n..];
        Some(out)
    }
}

pub fn seal(payload: &[u8], key: &[u8; 32], nonce: &[u8; NONCE_LEN]) -> SealedEnvelope {
    seal_with_commit(payload, key, nonce, digest_bytes(payload))
}

/// Seal with an explicit commitment hash. A commitment that does not match
/// the payload models a misbehaving sender; honest code uses [`seal`].
pub fn seal_with_commit(
    payload: &[u8],
    key: &[u8; 32],
    nonce: &[u8; NONCE_LEN],
    commit_hash: Digest,
) -> SealedEnvelope {
    let cipher = Aes256Gcm::new(key.into());
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(nonce), Payload::from(payload))
        .expect("AES-GCM encryption is infallible for in-memory payloads");
    SealedEnvelope {
        nonce: *nonce,
        ciphertext,
        commit_hash,
    }
}

/// All-or-nothing open: authenticated decrypt, then commitment check.
pub fn open(env: &SealedEnvelope, key: &[u8; 32]) -> Result<Vec<u8>, EnvelopeError> {
    let cipher = Aes256Gcm::new(key.into());
    let payload = cipher
        .decrypt(Nonce::from_slice(&env.nonce), env.ciphertext.as_slice())
        .map_err(|_| EnvelopeError::DecryptFailed)?;
    if digest_bytes(&payload) != env.commit_hash {
        return Err(EnvelopeError::CommitMismatch);
    }
    Ok(payload)
}

/// Signal plaintext: the domain signal plus the author's verification key,
/// so ciphertext copying reveals the true author once the key is out.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SignalPayload {
    pub signal: Vec<u8>,
    pub author_key: [u8; 32],
}

impl SignalPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc::new();
        e.bytes(&self.signal);
        e.raw(&self.author_key);
        e.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Option<SignalPayload> {
        let mut r = WireReader(data);
        let signal = r.bytes()?.to_vec();
        let author_key: [u8; 32] = r.raw(32)?.try_into().ok()?;
        if !r.0.is_empty() {
            return None;
        }
        Some(SignalPayload { signal, author_key })
    }

    pub fn author(&self) -> AccountId {
        AccountId::from_verifying_key(&self.author_key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(b: u8) -> [u8; 32] {
        [b; 32]
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = KeyPair::from_seed(&key(7));
        let b = KeyPair::from_seed(&key(7));
        assert_eq!(a.verifying_key(), b.verifying_key());
        assert_eq!(a.account(), b.account());
    }

    #[test]
    fn distinct_seeds_distinct_accounts() {
        // Collision check over a scenario-sized seed set.
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..64u8 {
            assert!(seen.insert(KeyPair::from_seed(&key(i)).account()));
        }
    }

    #[test]
    fn signature_roundtrip() {
        let kp = KeyPair::from_seed(&key(1));
        let sig = kp.sign(b"message");
        assert!(verify_signature(&kp.verifying_key(), b"message", &sig));
        assert!(!verify_signature(&kp.verifying_key(), b"other", &sig));
    }

    #[test]
    fn seal_open_roundtrip() {
        let env = seal(b"payload", &key(2), &[3; NONCE_LEN]);
        assert_eq!(open(&env, &key(2)).unwrap(), b"payload");
    }

    #[test]
    fn wrong_key_is_decrypt_failed() {
        let env = seal(b"payload", &key(2), &[3; NONCE_LEN]);
        assert_eq!(open(&env, &key(9)), Err(EnvelopeError::DecryptFailed));
    }

    #[test]
    fn lying_commitment_is_commit_mismatch() {
        let env = seal_with_commit(b"payload", &key(2), &[3; NONCE_LEN], digest_bytes(b"lie"));
        assert_eq!(open(&env, &key(2)), Err(EnvelopeError::CommitMismatch));
    }

    #[test]
    fn nonce_varies_ciphertext() {
        let a = seal(b"payload", &key(2), &[3; NONCE_LEN]);
        let b = seal(b"payload", &key(2), &[4; NONCE_LEN]);
        assert_ne!(a.ciphertext, b.ciphertext);
    }

    #[test]
    fn envelope_wire_roundtrip() {
        let env = seal(b"some payload bytes", &key(5), &[6; NONCE_LEN]);
        let wire = env.to_wire();
        assert_eq!(SealedEnvelope::from_wire(&wire).unwrap(), env);
        assert_eq!(
            SealedEnvelope::from_wire(&wire[..wire.len() - 1]),
            Err(EnvelopeError::Malformed)
        );
    }

    #[test]
    fn signal_payload_roundtrip() {
        let kp = KeyPair::from_seed(&key(1));
        let p = SignalPayload {
            signal: vec![1, 0, 1],
            author_key: kp.verifying_key(),
        };
        let back = SignalPayload::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.author(), kp.account());
    }
}
