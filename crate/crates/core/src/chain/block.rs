use crate::crypto::{Digest, KeyPair, PublicKey, Signer, Verifier};
use crate::identifier::Identifier;
use crate::record::{ResourceRecord, T_RECORD};
use crate::tlv::{TlvError, TlvReader, TlvWriter};

use super::NodeId;

const T_BLOCK: u8 = 0x20;
const T_HEIGHT: u8 = 0x21;
const T_PREV: u8 = 0x22;
const T_PRODUCER: u8 = 0x23;
const T_TERM: u8 = 0x24;
const T_TXS: u8 = 0x25;
const T_REJECTED: u8 = 0x26;
const T_REJECTION: u8 = 0x27;
const T_VOTES: u8 = 0x28;
const T_VOTE: u8 = 0x29;

const T_TX: u8 = 0x30;
const T_TX_KIND: u8 = 0x31;
const T_PREFIX: u8 = 0x32;
const T_KEY: u8 = 0x33;
const T_REAL_ID: u8 = 0x34;
const T_TARGET: u8 = 0x35;
const T_APPROVALS: u8 = 0x36;
const T_APPROVAL: u8 = 0x37;
const T_SUBMITTER: u8 = 0x38;
const T_SIGNATURE: u8 = 0x39;
const T_VOTER: u8 = 0x3a;
const T_REASON: u8 = 0x3b;
const T_DIGEST: u8 = 0x3c;

/// Why a transaction was not applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxReject {
    BadSignature,
    PrefixTaken,
    NotRegistered,
    AlreadyPublished,
    UnknownName,
    InsufficientApprovals,
    BadRecord,
}

impl TxReject {
    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        use TxReject::*;
        [
            BadSignature,
            PrefixTaken,
            NotRegistered,
            AlreadyPublished,
            UnknownName,
            InsufficientApprovals,
            BadRecord,
        ]
        .get(c as usize)
        .copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TxReject::BadSignature => "BadSignature",
            TxReject::PrefixTaken => "PrefixTaken",
            TxReject::NotRegistered => "NotRegistered",
            TxReject::AlreadyPublished => "AlreadyPublished",
            TxReject::UnknownName => "UnknownName",
            TxReject::InsufficientApprovals => "InsufficientApprovals",
            TxReject::BadRecord => "BadRecord",
        }
    }
}

/// A commissioner's signature approving a supersede.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Approval {
    pub commissioner: NodeId,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TxKind {
    RegisterUser {
        prefix: Identifier,
        key: PublicKey,
        /// Opaque real-world identity attribute.
        real_id: String,
    },
    PublishResource(ResourceRecord),
    /// Replaces (or with `None`, withdraws) an already published record.
    Supersede {
        name: Identifier,
        replacement: Option<ResourceRecord>,
        approvals: Vec<Approval>,
    },
}

impl TxKind {
    fn write_to(&self, w: &mut TlvWriter) {
        match self {
            TxKind::RegisterUser {
                prefix,
                key,
                real_id,
            } => {
                w.bytes(T_TX_KIND, &[0])
                    .id(T_PREFIX, prefix)
                    .bytes(T_KEY, &key.0)
                    .str(T_REAL_ID, real_id);
            }
            TxKind::PublishResource(rec) => {
                w.bytes(T_TX_KIND, &[1]);
                rec.write_to(w);
            }
            TxKind::Supersede {
                name,
                replacement,
                approvals,
            } => {
                w.bytes(T_TX_KIND, &[2]).id(T_TARGET, name);
                if let Some(r) = replacement {
                    r.write_to(w);
                }
                w.nested(T_APPROVALS, |w| {
                    for a in approvals {
                        w.nested(T_APPROVAL, |w| {
                            w.u32(T_VOTER, a.commissioner)
                                .bytes(T_SIGNATURE, &a.signature);
                        });
                    }
                });
            }
        }
    }

    fn read_from(r: &mut TlvReader<'_>) -> Result<Self, TlvError> {
        let kind = r.expect(T_TX_KIND)?;
        match kind {
            [0] => Ok(TxKind::RegisterUser {
                prefix: r.id(T_PREFIX)?,
                key: r.public_key(T_KEY)?,
                real_id: r.str(T_REAL_ID)?.to_string(),
            }),
            [1] => Ok(TxKind::PublishResource(ResourceRecord::read_from(r)?)),
            [2] => {
                let name = r.id(T_TARGET)?;
                let replacement = match r.peek_type() {
                    Some(T_RECORD) => Some(ResourceRecord::read_from(r)?),
                    _ => None,
                };
                let mut list = TlvReader::new(r.expect(T_APPROVALS)?);
                let mut approvals = Vec::new();
                while !list.is_empty() {
                    let mut a = TlvReader::new(list.expect(T_APPROVAL)?);
                    approvals.push(Approval {
                        commissioner: a.u32(T_VOTER)?,
                        signature: a.expect(T_SIGNATURE)?.to_vec(),
                    });
                    a.finish()?;
                }
                Ok(TxKind::Supersede {
                    name,
                    replacement,
                    approvals,
                })
            }
            _ => Err(TlvError::BadField("tx kind")),
        }
    }
}

/// Bytes commissioners sign to approve a supersede of `name`.
pub fn supersede_payload(name: &Identifier, replacement: Option<&ResourceRecord>) -> Vec<u8> {
    let mut w = TlvWriter::new();
    w.bytes(0, b"min-supersede-v1").id(T_TARGET, name);
    if let Some(r) = replacement {
        r.write_to(&mut w);
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub kind: TxKind,
    pub submitter: PublicKey,
    pub signature: Vec<u8>,
}

impl Transaction {
    fn signed_bytes(kind: &TxKind) -> Vec<u8> {
        let mut w = TlvWriter::new();
        w.bytes(0, b"min-tx-v1");
        kind.write_to(&mut w);
        w.finish()
    }

    pub fn new(kind: TxKind, submitter: &KeyPair) -> Self {
        let signature = submitter.sign(&Self::signed_bytes(&kind));
        Self {
            kind,
            submitter: submitter.public_key(),
            signature,
        }
    }

    /// Registration of `prefix` to the signing key.
    pub fn register(prefix: Identifier, real_id: &str, key: &KeyPair) -> Self {
        Self::new(
            TxKind::RegisterUser {
                prefix,
                key: key.public_key(),
                real_id: real_id.to_string(),
            },
            key,
        )
    }

    pub fn publish(record: ResourceRecord, key: &KeyPair) -> Self {
        Self::new(TxKind::PublishResource(record), key)
    }

    pub fn signature_valid(&self) -> bool {
        self.submitter
            .verify(&Self::signed_bytes(&self.kind), &self.signature)
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.encode())
    }

    pub fn write_to(&self, w: &mut TlvWriter) {
        w.nested(T_TX, |w| {
            self.kind.write_to(w);
            w.bytes(T_SUBMITTER, &self.submitter.0)
                .bytes(T_SIGNATURE, &self.signature);
        });
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        self.write_to(&mut w);
        w.finish()
    }

    pub fn read_from(r: &mut TlvReader<'_>) -> Result<Self, TlvError> {
        let mut r = TlvReader::new(r.expect(T_TX)?);
        let tx = Self {
            kind: TxKind::read_from(&mut r)?,
            submitter: r.public_key(T_SUBMITTER)?,
            signature: r.expect(T_SIGNATURE)?.to_vec(),
        };
        r.finish()?;
        Ok(tx)
    }
}

/// A mempool transaction the producer left out, kept on-chain for audit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rejection {
    pub tx: Digest,
    pub reason: TxReject,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Vote {
    pub voter: NodeId,
    pub signature: Vec<u8>,
}

impl Vote {
    pub fn signed_bytes(block_hash: &Digest) -> Vec<u8> {
        let mut m = b"min-vote-v1".to_vec();
        m.extend_from_slice(block_hash.as_bytes());
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub producer: NodeId,
    pub term_no: u64,
    pub txs: Vec<Transaction>,
    pub rejected: Vec<Rejection>,
    pub votes: Vec<Vote>,
}

impl Block {
    fn write_header(&self, w: &mut TlvWriter) {
        w.u64(T_HEIGHT, self.height)
            .bytes(T_PREV, self.prev_hash.as_bytes())
            .u32(T_PRODUCER, self.producer)
            .u64(T_TERM, self.term_no)
            .nested(T_TXS, |w| {
                for tx in &self.txs {
                    tx.write_to(w);
                }
            })
            .nested(T_REJECTED, |w| {
                for rj in &self.rejected {
                    w.nested(T_REJECTION, |w| {
                        w.bytes(T_DIGEST, rj.tx.as_bytes())
                            .bytes(T_REASON, &[rj.reason.code()]);
                    });
                }
            });
    }

    /// Hash of everything except the vote set.
    pub fn hash(&self) -> Digest {
        let mut w = TlvWriter::new();
        self.write_header(&mut w);
        Digest::of(w.as_slice())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        w.nested(T_BLOCK, |w| {
            self.write_header(w);
            w.nested(T_VOTES, |w| {
                for v in &self.votes {
                    w.nested(T_VOTE, |w| {
                        w.u32(T_VOTER, v.voter).bytes(T_SIGNATURE, &v.signature);
                    });
                }
            });
        });
        w.finish()
    }

    pub fn read_from(r: &mut TlvReader<'_>) -> Result<Self, TlvError> {
        let mut r = TlvReader::new(r.expect(T_BLOCK)?);
        let height = r.u64(T_HEIGHT)?;
        let prev_hash = r.digest(T_PREV)?;
        let producer = r.u32(T_PRODUCER)?;
        let term_no = r.u64(T_TERM)?;
        let mut list = TlvReader::new(r.expect(T_TXS)?);
        let mut txs = Vec::new();
        while !list.is_empty() {
            txs.push(Transaction::read_from(&mut list)?);
        }
        let mut list = TlvReader::new(r.expect(T_REJECTED)?);
        let mut rejected = Vec::new();
        while !list.is_empty() {
            let mut e = TlvReader::new(list.expect(T_REJECTION)?);
            let tx = e.digest(T_DIGEST)?;
            let reason = match e.expect(T_REASON)? {
                [c] => TxReject::from_code(*c).ok_or(TlvError::BadField("reason"))?,
                _ => return Err(TlvError::BadField("reason")),
            };
            e.finish()?;
            rejected.push(Rejection { tx, reason });
        }
        let mut list = TlvReader::new(r.expect(T_VOTES)?);
        let mut votes = Vec::new();
        while !list.is_empty() {
            let mut v = TlvReader::new(list.expect(T_VOTE)?);
            votes.push(Vote {
                voter: v.u32(T_VOTER)?,
                signature: v.expect(T_SIGNATURE)?.to_vec(),
            });
            v.finish()?;
        }
        r.finish()?;
        Ok(Self {
            height,
            prev_hash,
            producer,
            term_no,
            txs,
            rejected,
            votes,
        })
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TlvError> {
        let mut r = TlvReader::new(buf);
        let b = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(b)
    }

    /// Decodes a concatenation of blocks.
    pub fn decode_all(buf: &[u8]) -> Result<Vec<Self>, TlvError> {
        let mut r = TlvReader::new(buf);
        let mut out = Vec::new();
        while !r.is_empty() {
            out.push(Self::read_from(&mut r)?);
        }
        Ok(out)
    }

    /// One line of the chain dump.
    pub fn dump_line(&self) -> String {
        format!(
            "height={} hash={} producer={} txs={} votes={}",
            self.height,
            self.hash(),
            self.producer,
            self.txs.len(),
            self.votes.len()
        )
    }
}
