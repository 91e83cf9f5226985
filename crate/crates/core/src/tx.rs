//! The ten protocol transaction kinds and their signed wire form.
//!
//! Wire form: canonical bytes of (sender, sequence, body) with the sender's
//! verification key and the signature appended. The body kind tag is a
//! single byte, 0x01..=0x0A.

use serde::{Deserialize, Serialize};

use crate::codec::{canon_bytes, digest_of, Canon, Digest, Enc};
use crate::crypto::{verify_signature, AccountId, KeyPair, SealedEnvelope, WireReader, SIG_LEN};
use crate::score::Score;

/// 16-byte identifier for agents and data offerings.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Uuid(pub [u8; 16]);

impl Uuid {
    pub fn from_digest(d: &Digest) -> Uuid {
        let mut b = [0u8; 16];
        b.copy_from_slice(&d.as_bytes()[..16]);
        Uuid(b)
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl Canon for Uuid {
    fn encode(&self, e: &mut Enc) {
        e.raw(&self.0);
    }
}

impl serde::Serialize for Uuid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

impl<'de> serde::Deserialize<'de> for Uuid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("uuid must be 16 bytes"))?;
        Ok(Uuid(arr))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum PaymentScheme {
    PerUse,
    Subscription,
    Buyout,
}

impl PaymentScheme {
    fn tag(&self) -> u8 {
        match self {
            PaymentScheme::PerUse => 1,
            PaymentScheme::Subscription => 2,
            PaymentScheme::Buyout => 3,
        }
    }

    fn from_tag(t: u8) -> Option<PaymentScheme> {
        match t {
            1 => Some(PaymentScheme::PerUse),
            2 => Some(PaymentScheme::Subscription),
            3 => Some(PaymentScheme::Buyout),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TxBody {
    SubmitAgent {
        uuid: Uuid,
    },
    PublishDataset {
        inputs_ref: Digest,
        inputs_hash: Digest,
        encrypted_signals_ref: Digest,
        signals_hash: Digest,
    },
    SubmitSignal {
        agent: Uuid,
        envelope: SealedEnvelope,
        tick: Option<u64>,
    },
    PublishDatasetDecryptionKey {
        key: [u8; 32],
    },
    PublishSignalDecryptionKey {
        agent: Uuid,
        key: [u8; 32],
        tick: Option<u64>,
    },
    PublishTournamentRanking {
        ranking: Vec<(Uuid, Score)>,
    },
    TournamentFailure,
    PublishAgentPrice {
        agent: Uuid,
        scheme: PaymentScheme,
        price: u64,
    },
    PublishDataPrice {
        data: Uuid,
        data_params: Vec<u8>,
        scheme: PaymentScheme,
        price: u64,
    },
    Rent {
        uuid: Uuid,
        quantity: u64,
    },
}

impl TxBody {
    pub fn kind_tag(&self) -> u8 {
        match self {
            TxBody::SubmitAgent { .. } => 0x01,
            TxBody::PublishDataset { .. } => 0x02,
            TxBody::SubmitSignal { .. } => 0x03,
            TxBody::PublishDatasetDecryptionKey { .. } => 0x04,
            TxBody::PublishSignalDecryptionKey { .. } => 0x05,
            TxBody::PublishTournamentRanking { .. } => 0x06,
            TxBody::TournamentFailure => 0x07,
            TxBody::PublishAgentPrice { .. } => 0x08,
            TxBody::PublishDataPrice { .. } => 0x09,
            TxBody::Rent { .. } => 0x0A,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TxBody::SubmitAgent { .. } => "submit_agent",
            TxBody::PublishDataset { .. } => "publish_dataset",
            TxBody::SubmitSignal { .. } => "submit_signal",
            TxBody::PublishDatasetDecryptionKey { .. } => "publish_dataset_decryption_key",
            TxBody::PublishSignalDecryptionKey { .. } => "publish_signal_decryption_key",
            TxBody::PublishTournamentRanking { .. } => "publish_tournament_ranking",
            TxBody::TournamentFailure => "tournament_failure",
            TxBody::PublishAgentPrice { .. } => "publish_agent_price",
            TxBody::PublishDataPrice { .. } => "publish_data_price",
            TxBody::Rent { .. } => "rent",
        }
    }

    fn decode(r: &mut WireReader<'_>) -> Option<TxBody> {
        let tag = r.u8()?;
        let body = match tag {
            0x01 => TxBody::SubmitAgent {
                uuid: decode_uuid(r)?,
            },
            0x02 => TxBody::PublishDataset {
                inputs_ref: decode_digest(r)?,
                inputs_hash: decode_digest(r)?,
                encrypted_signals_ref: decode_digest(r)?,
                signals_hash: decode_digest(r)?,
            },
            0x03 => TxBody::SubmitSignal {
                agent: decode_uuid(r)?,
                envelope: SealedEnvelope::from_wire(r.bytes()?).ok()?,
                tick: decode_opt_u64(r)?,
            },
            0x04 => TxBody::PublishDatasetDecryptionKey {
                key: r.raw(32)?.try_into().ok()?,
            },
            0x05 => TxBody::PublishSignalDecryptionKey {
                agent: decode_uuid(r)?,
                key: r.raw(32)?.try_into().ok()?,
                tick: decode_opt_u64(r)?,
            },
            0x06 => {
                let n = r.u64()? as usize;
                let mut ranking = Vec::with_capacity(n);
                for _ in 0..n {
                    let uuid = decode_uuid(r)?;
                    let num = r.u64()?;
                    let den = r.u64()?;
                    ranking.push((uuid, Score { num, den }));
                }
                TxBody::PublishTournamentRanking { ranking }
            }
            0x07 => TxBody::TournamentFailure,
            0x08 => TxBody::PublishAgentPrice {
                agent: decode_uuid(r)?,
                scheme: PaymentScheme::from_tag(r.u8()?)?,
                price: r.u64()?,
            },
            0x09 => TxBody::PublishDataPrice {
                data: decode_uuid(r)?,
                data_params: r.bytes()?.to_vec(),
                scheme: PaymentScheme::from_tag(r.u8()?)?,
                price: r.u64()?,
            },
            0x0A => TxBody::Rent {
                uuid: decode_uuid(r)?,
                quantity: r.u64()?,
            },
            _ => return None,
        };
        Some(body)
    }
}

fn decode_uuid(r: &mut WireReader<'_>) -> Option<Uuid> {
    Some(Uuid(r.raw(16)?.try_into().ok()?))
}

fn decode_digest(r: &mut WireReader<'_>) -> Option<Digest> {
    Some(Digest(r.raw(32)?.try_into().ok()?))
}

fn decode_opt_u64(r: &mut WireReader<'_>) -> Option<Option<u64>> {
    match r.u8()? {
        0 => Some(None),
        1 => Some(Some(r.u64()?)),
        _ => None,
    }
}

impl Canon for TxBody {
    fn encode(&self, e: &mut Enc) {
        e.u8(self.kind_tag());
        match self {
            TxBody::SubmitAgent { uuid } => uuid.encode(e),
            TxBody::PublishDataset {
                inputs_ref,
                inputs_hash,
                encrypted_signals_ref,
                signals_hash,
            } => {
                inputs_ref.encode(e);
                inputs_hash.encode(e);
                encrypted_signals_ref.encode(e);
                signals_hash.encode(e);
            }
            TxBody::SubmitSignal {
                agent,
                envelope,
                tick,
            } => {
                agent.encode(e);
                e.bytes(&envelope.to_wire());
                e.opt_u64(*tick);
            }
            TxBody::PublishDatasetDecryptionKey { key } => e.raw(key),
            TxBody::PublishSignalDecryptionKey { agent, key, tick } => {
                agent.encode(e);
                e.raw(key);
                e.opt_u64(*tick);
            }
            TxBody::PublishTournamentRanking { ranking } => {
                e.u64(ranking.len() as u64);
                for (uuid, score) in ranking {
                    uuid.encode(e);
                    score.encode(e);
                }
            }
            TxBody::TournamentFailure => {}
            TxBody::PublishAgentPrice {
                agent,
                scheme,
                price,
            } => {
                agent.encode(e);
                e.u8(scheme.tag());
                e.u64(*price);
            }
            TxBody::PublishDataPrice {
                data,
                data_params,
                scheme,
                price,
            } => {
                data.encode(e);
                e.bytes(data_params);
                e.u8(scheme.tag());
                e.u64(*price);
            }
            TxBody::Rent { uuid, quantity } => {
                uuid.encode(e);
                e.u64(*quantity);
            }
        }
    }
}

/// A signed, sequence-numbered transaction. The sender id is the digest of
/// the carried verification key, so transactions are self-certifying.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Transaction {
    pub sender: AccountId,
    pub sequence: u64,
    pub body: TxBody,
    pub sender_key: [u8; 32],
    pub signature: [u8; SIG_LEN],
}

impl Transaction {
    pub fn sign(keys: &KeyPair, sequence: u64, body: TxBody) -> Transaction {
        let sender = keys.account();
        let msg = signing_bytes(&sender, sequence, &body);
        Transaction {
            sender,
            sequence,
            body,
            sender_key: keys.verifying_key(),
            signature: keys.sign(&msg),
        }
    }

    pub fn signature_valid(&self) -> bool {
        if AccountId::from_verifying_key(&self.sender_key) != self.sender {
            return false;
        }
        let msg = signing_bytes(&self.sender, self.sequence, &self.body);
        verify_signature(&self.sender_key, &msg, &self.signature)
    }

    pub fn digest(&self) -> Digest {
        digest_of(self)
    }

    pub fn to_wire(&self) -> Vec<u8> {
        canon_bytes(self)
    }

    pub fn from_wire(data: &[u8]) -> Option<Transaction> {
        let mut r = WireReader(data);
        let sender = AccountId(decode_digest(&mut r)?);
        let sequence = r.u64()?;
        let body = TxBody::decode(&mut r)?;
        let sender_key: [u8; 32] = r.raw(32)?.try_into().ok()?;
        let signature: [u8; SIG_LEN] = r.raw(SIG_LEN)?.try_into().ok()?;
        if !r.0.is_empty() {
            return None;
        }
        Some(Transaction {
            sender,
            sequence,
            body,
            sender_key,
            signature,
        })
    }
}

fn signing_bytes(sender: &AccountId, sequence: u64, body: &TxBody) -> Vec<u8> {
    let mut e = Enc::new();
    sender.encode(&mut e);
    e.u64(sequence);
    body.encode(&mut e);
    e.finish()
}

impl Canon for Transaction {
    fn encode(&self, e: &mut Enc) {
        self.sender.encode(e);
        e.u64(self.sequence);
        self.body.encode(e);
        e.raw(&self.sender_key);
        e.raw(&self.signature);
    }
}
