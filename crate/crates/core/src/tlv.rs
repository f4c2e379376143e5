//! Length-prefixed binary TLV: one type byte, a big-endian `u32` length,
//! then `length` value bytes. Composite values nest TLVs in their value.

use thiserror::Error;

use crate::crypto::{Digest, PublicKey};
use crate::identifier::{IdError, Identifier};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TlvError {
    #[error("truncated input at offset {0}")]
    Truncated(usize),
    #[error("expected type {expected:#04x}, found {found:#04x}")]
    UnexpectedType { expected: u8, found: u8 },
    #[error("bad field {0}")]
    BadField(&'static str),
    #[error("identifier: {0}")]
    Identifier(#[from] IdError),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Default, Clone)]
pub struct TlvWriter {
    buf: Vec<u8>,
}

impl TlvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, t: u8, v: &[u8]) -> &mut Self {
        self.buf.push(t);
        self.buf.extend_from_slice(&(v.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(v);
        self
    }

    pub fn u64(&mut self, t: u8, v: u64) -> &mut Self {
        self.bytes(t, &v.to_be_bytes())
    }

    pub fn u32(&mut self, t: u8, v: u32) -> &mut Self {
        self.bytes(t, &v.to_be_bytes())
    }

    pub fn str(&mut self, t: u8, v: &str) -> &mut Self {
        self.bytes(t, v.as_bytes())
    }

    pub fn id(&mut self, t: u8, v: &Identifier) -> &mut Self {
        self.str(t, &v.to_string())
    }

    pub fn nested(&mut self, t: u8, f: impl FnOnce(&mut TlvWriter)) -> &mut Self {
        let mut inner = TlvWriter::new();
        f(&mut inner);
        self.bytes(t, &inner.buf)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }
}

#[derive(Debug, Clone)]
pub struct TlvReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> TlvReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub fn peek_type(&self) -> Option<u8> {
        self.buf.get(self.pos).copied()
    }

    /// Reads the next element of any type.
    pub fn next_any(&mut self) -> Result<(u8, &'a [u8]), TlvError> {
        let start = self.pos;
        if self.buf.len() < start + 5 {
            return Err(TlvError::Truncated(start));
        }
        let t = self.buf[start];
        let len = u32::from_be_bytes(self.buf[start + 1..start + 5].try_into().unwrap()) as usize;
        let end = start + 5 + len;
        if self.buf.len() < end {
            return Err(TlvError::Truncated(start));
        }
        self.pos = end;
        Ok((t, &self.buf[start + 5..end]))
    }

    pub fn expect(&mut self, t: u8) -> Result<&'a [u8], TlvError> {
        let (found, v) = self.next_any()?;
        if found != t {
            return Err(TlvError::UnexpectedType { expected: t, found });
        }
        Ok(v)
    }

    /// Reads an element of type `t` if it is next.
    pub fn optional(&mut self, t: u8) -> Result<Option<&'a [u8]>, TlvError> {
        if self.peek_type() == Some(t) {
            self.expect(t).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn u64(&mut self, t: u8) -> Result<u64, TlvError> {
        let v = self.expect(t)?;
        Ok(u64::from_be_bytes(
            v.try_into().map_err(|_| TlvError::BadField("u64"))?,
        ))
    }

    pub fn u32(&mut self, t: u8) -> Result<u32, TlvError> {
        let v = self.expect(t)?;
        Ok(u32::from_be_bytes(
            v.try_into().map_err(|_| TlvError::BadField("u32"))?,
        ))
    }

    pub fn str(&mut self, t: u8) -> Result<&'a str, TlvError> {
        std::str::from_utf8(self.expect(t)?).map_err(|_| TlvError::BadField("utf8"))
    }

    pub fn id(&mut self, t: u8) -> Result<Identifier, TlvError> {
        Ok(self.str(t)?.parse()?)
    }

    pub fn digest(&mut self, t: u8) -> Result<Digest, TlvError> {
        Digest::from_slice(self.expect(t)?).ok_or(TlvError::BadField("digest"))
    }

    pub fn public_key(&mut self, t: u8) -> Result<PublicKey, TlvError> {
        PublicKey::from_slice(self.expect(t)?).ok_or(TlvError::BadField("public key"))
    }

    pub fn finish(self) -> Result<(), TlvError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(TlvError::Trailing(n)),
        }
    }
}
