//! Publisher-signed resource records.
//!
//! Wire form (see `tlv`):
//!
//! ```text
//! 0x10 RECORD
//!   0x01 NAME          canonical identifier text
//!   0x02 PUBLISHER     32-byte digest of the publisher key
//!   0x03 CONTENT_HASH  32-byte SHA-256 of the content
//!   0x04 LOCATOR       canonical identifier text
//!   0x05 SIGNATURE     scheme-specific signature bytes
//! ```
//!
//! The signature covers `NAME`, `CONTENT_HASH` and `LOCATOR` encoded as the
//! same TLVs, preceded by the ASCII tag `min-record-v1`.

use crate::crypto::{Digest, PublisherId, Signer, Verifier};
use crate::identifier::{IdError, IdKind, Identifier};
use crate::tlv::{TlvError, TlvReader, TlvWriter};

pub const T_RECORD: u8 = 0x10;
const T_NAME: u8 = 0x01;
const T_PUBLISHER: u8 = 0x02;
const T_HASH: u8 = 0x03;
const T_LOCATOR: u8 = 0x04;
const T_SIGNATURE: u8 = 0x05;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResourceRecord {
    pub name: Identifier,
    pub publisher: PublisherId,
    pub content_hash: Digest,
    pub locator: Identifier,
    pub signature: Vec<u8>,
}

fn signed_bytes(name: &Identifier, content_hash: &Digest, locator: &Identifier) -> Vec<u8> {
    let mut w = TlvWriter::new();
    w.bytes(0, b"min-record-v1")
        .id(T_NAME, name)
        .bytes(T_HASH, content_hash.as_bytes())
        .id(T_LOCATOR, locator);
    w.finish()
}

pub fn sign_record<S: Signer>(
    name: Identifier,
    content_hash: Digest,
    locator: Identifier,
    signer: &S,
) -> Result<ResourceRecord, IdError> {
    if name.kind() != IdKind::Content {
        return Err(IdError::WrongKind {
            expected: IdKind::Content,
            got: name.kind(),
        });
    }
    let signature = signer.sign(&signed_bytes(&name, &content_hash, &locator));
    Ok(ResourceRecord {
        name,
        publisher: signer.publisher_id(),
        content_hash,
        locator,
        signature,
    })
}

impl ResourceRecord {
    /// Checks the publisher binding and the signature.
    pub fn verify<V: Verifier>(&self, key: &V) -> bool {
        key.publisher_id() == self.publisher
            && key.verify(
                &signed_bytes(&self.name, &self.content_hash, &self.locator),
                &self.signature,
            )
    }

    /// `verify` plus the content hash check against the stored bytes.
    pub fn verify_with_content<V: Verifier>(&self, key: &V, content: &[u8]) -> bool {
        self.verify(key) && Digest::of(content) == self.content_hash
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        self.write_to(&mut w);
        w.finish()
    }

    pub fn write_to(&self, w: &mut TlvWriter) {
        w.nested(T_RECORD, |w| {
            w.id(T_NAME, &self.name)
                .bytes(T_PUBLISHER, self.publisher.as_bytes())
                .bytes(T_HASH, self.content_hash.as_bytes())
                .id(T_LOCATOR, &self.locator)
                .bytes(T_SIGNATURE, &self.signature);
        });
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TlvError> {
        let mut r = TlvReader::new(buf);
        let rec = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(rec)
    }

    pub fn read_from(r: &mut TlvReader<'_>) -> Result<Self, TlvError> {
        let mut r = TlvReader::new(r.expect(T_RECORD)?);
        let rec = Self {
            name: r.id(T_NAME)?,
            publisher: r.digest(T_PUBLISHER)?,
            content_hash: r.digest(T_HASH)?,
            locator: r.id(T_LOCATOR)?,
            signature: r.expect(T_SIGNATURE)?.to_vec(),
        };
        r.finish()?;
        Ok(rec)
    }
}
