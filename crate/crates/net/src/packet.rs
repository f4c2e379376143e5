//! Packets, IP datagrams and link frames.
//!
//! All three serialize to the same TLV framing as records and blocks.

use std::net::IpAddr;
use std::sync::Arc;

use min_core::tlv::{TlvError, TlvReader, TlvWriter};
use min_core::Identifier;
use min_core::{Digest, KeyPair, PublicKey, PublisherId, Signer, Verifier};

use crate::sim::Wire;

pub const DEFAULT_HOP_LIMIT: u8 = 64;
/// Payload bytes per Data segment.
pub const SEGMENT_SIZE: usize = 8192;

const T_INTEREST: u8 = 0x40;
const T_DATA: u8 = 0x41;
const T_NACK: u8 = 0x42;
const T_NAME: u8 = 0x43;
const T_NONCE: u8 = 0x44;
const T_HOPS: u8 = 0x45;
const T_HINT: u8 = 0x46;
const T_TUNNEL: u8 = 0x47;
const T_PAYLOAD: u8 = 0x48;
const T_FINAL: u8 = 0x49;
const T_PUBLISHER: u8 = 0x4a;
const T_SIG: u8 = 0x4b;
const T_REASON: u8 = 0x4c;

const T_DATAGRAM: u8 = 0x50;
const T_SRC: u8 = 0x51;
const T_DST: u8 = 0x52;
const T_PROTO: u8 = 0x53;
const T_SEQ: u8 = 0x54;
const T_BODY: u8 = 0x55;

const T_APP_REQ: u8 = 0x58;
const T_APP_SEG: u8 = 0x59;
const T_APP_MISSING: u8 = 0x5a;
const T_RESOURCE: u8 = 0x5b;
const T_SEGNO: u8 = 0x5c;
const T_LAST: u8 = 0x5d;
const T_BYTES: u8 = 0x5e;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interest {
    pub name: Identifier,
    pub nonce: u64,
    pub hop_limit: u8,
    /// Locator to route by instead of the name.
    pub hint: Option<Identifier>,
    /// Encapsulated IP datagram, or the body of a control Interest.
    pub tunnel_payload: Option<Vec<u8>>,
}

impl Interest {
    pub fn new(name: Identifier, nonce: u64) -> Self {
        Self {
            name,
            nonce,
            hop_limit: DEFAULT_HOP_LIMIT,
            hint: None,
            tunnel_payload: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Data {
    pub name: Identifier,
    pub payload: Arc<[u8]>,
    /// Index of the last segment of the enclosing resource.
    pub final_segment: Option<u64>,
    pub publisher: PublisherId,
    pub signature: Vec<u8>,
}

impl Data {
    fn signed_bytes(name: &Identifier, payload: &[u8], final_segment: Option<u64>) -> Vec<u8> {
        let mut w = TlvWriter::new();
        w.bytes(0, b"min-data-v1")
            .id(T_NAME, name)
            .bytes(T_PAYLOAD, Digest::of(payload).as_bytes());
        if let Some(f) = final_segment {
            w.u64(T_FINAL, f);
        }
        w.finish()
    }

    pub fn signed(
        name: Identifier,
        payload: Arc<[u8]>,
        final_segment: Option<u64>,
        key: &KeyPair,
    ) -> Self {
        let signature = key.sign(&Self::signed_bytes(&name, &payload, final_segment));
        Self {
            name,
            payload,
            final_segment,
            publisher: key.publisher_id(),
            signature,
        }
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        key.publisher_id() == self.publisher
            && key.verify(
                &Self::signed_bytes(&self.name, &self.payload, self.final_segment),
                &self.signature,
            )
    }

    /// True iff this Data answers an Interest for `name`.
    pub fn satisfies(&self, name: &Identifier) -> bool {
        name.is_prefix_of_same_kind(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NackReason {
    NoRoute,
    NotFound,
    LoopDetected,
}

impl NackReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NackReason::NoRoute => "NoRoute",
            NackReason::NotFound => "NotFound",
            NackReason::LoopDetected => "LoopDetected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nack {
    pub name: Identifier,
    pub nonce: u64,
    pub reason: NackReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Interest(Interest),
    Data(Data),
    Nack(Nack),
}

impl Packet {
    pub fn name(&self) -> &Identifier {
        match self {
            Packet::Interest(i) => &i.name,
            Packet::Data(d) => &d.name,
            Packet::Nack(n) => &n.name,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        match self {
            Packet::Interest(i) => {
                w.nested(T_INTEREST, |w| {
                    w.id(T_NAME, &i.name)
                        .u64(T_NONCE, i.nonce)
                        .bytes(T_HOPS, &[i.hop_limit]);
                    if let Some(h) = &i.hint {
                        w.id(T_HINT, h);
                    }
                    if let Some(p) = &i.tunnel_payload {
                        w.bytes(T_TUNNEL, p);
                    }
                });
            }
            Packet::Data(d) => {
                w.nested(T_DATA, |w| {
                    w.id(T_NAME, &d.name).bytes(T_PAYLOAD, &d.payload);
                    if let Some(f) = d.final_segment {
                        w.u64(T_FINAL, f);
                    }
                    w.bytes(T_PUBLISHER, d.publisher.as_bytes())
                        .bytes(T_SIG, &d.signature);
                });
            }
            Packet::Nack(n) => {
                w.nested(T_NACK, |w| {
                    w.id(T_NAME, &n.name)
                        .u64(T_NONCE, n.nonce)
                        .bytes(T_REASON, &[n.reason as u8]);
                });
            }
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TlvError> {
        let mut outer = TlvReader::new(buf);
        let (t, body) = outer.next_any()?;
        outer.finish()?;
        let mut r = TlvReader::new(body);
        let p = match t {
            T_INTEREST => {
                let name = r.id(T_NAME)?;
                let nonce = r.u64(T_NONCE)?;
                let hop_limit = match r.expect(T_HOPS)? {
                    [h] => *h,
                    _ => return Err(TlvError::BadField("hop limit")),
                };
                let hint = r.optional(T_HINT)?.map(parse_id).transpose()?;
                let tunnel_payload = r.optional(T_TUNNEL)?.map(<[u8]>::to_vec);
                Packet::Interest(Interest {
                    name,
                    nonce,
                    hop_limit,
                    hint,
                    tunnel_payload,
                })
            }
            T_DATA => {
                let name = r.id(T_NAME)?;
                let payload: Arc<[u8]> = r.expect(T_PAYLOAD)?.into();
                let final_segment = match r.peek_type() {
                    Some(T_FINAL) => Some(r.u64(T_FINAL)?),
                    _ => None,
                };
                Packet::Data(Data {
                    name,
                    payload,
                    final_segment,
                    publisher: r.digest(T_PUBLISHER)?,
                    signature: r.expect(T_SIG)?.to_vec(),
                })
            }
            T_NACK => {
                let name = r.id(T_NAME)?;
                let nonce = r.u64(T_NONCE)?;
                let reason = match r.expect(T_REASON)? {
                    [0] => NackReason::NoRoute,
                    [1] => NackReason::NotFound,
                    [2] => NackReason::LoopDetected,
                    _ => return Err(TlvError::BadField("nack reason")),
                };
                Packet::Nack(Nack {
                    name,
                    nonce,
                    reason,
                })
            }
            _ => return Err(TlvError::BadField("packet type")),
        };
        r.finish()?;
        Ok(p)
    }
}

fn parse_id(b: &[u8]) -> Result<Identifier, TlvError> {
    let s = std::str::from_utf8(b).map_err(|_| TlvError::BadField("utf-8"))?;
    Ok(s.parse()?)
}

fn name_len(id: &Identifier) -> usize {
    id.components().iter().map(|c| c.len() + 1).sum::<usize>() + 8
}

impl Wire for Packet {
    fn wire_len(&self) -> usize {
        match self {
            Packet::Interest(i) => {
                24 + name_len(&i.name)
                    + i.hint.as_ref().map_or(0, name_len)
                    + i.tunnel_payload.as_ref().map_or(0, |p| p.len() + 5)
            }
            Packet::Data(d) => 120 + name_len(&d.name) + d.payload.len(),
            Packet::Nack(n) => 24 + name_len(&n.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Proto {
    Tcp,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimIpDatagram {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub proto: Proto,
    pub seq: u64,
    pub payload: Vec<u8>,
}

fn addr_bytes(a: &IpAddr) -> Vec<u8> {
    match a {
        IpAddr::V4(v) => v.octets().to_vec(),
        IpAddr::V6(v) => v.octets().to_vec(),
    }
}

fn addr_from(b: &[u8]) -> Result<IpAddr, TlvError> {
    match b.len() {
        4 => Ok(IpAddr::from(<[u8; 4]>::try_from(b).unwrap())),
        16 => Ok(IpAddr::from(<[u8; 16]>::try_from(b).unwrap())),
        _ => Err(TlvError::BadField("address")),
    }
}

impl SimIpDatagram {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        w.nested(T_DATAGRAM, |w| {
            w.bytes(T_SRC, &addr_bytes(&self.src))
                .bytes(T_DST, &addr_bytes(&self.dst))
                .bytes(T_PROTO, &[matches!(self.proto, Proto::Udp) as u8])
                .u64(T_SEQ, self.seq)
                .bytes(T_BODY, &self.payload);
        });
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TlvError> {
        let mut outer = TlvReader::new(buf);
        let mut r = TlvReader::new(outer.expect(T_DATAGRAM)?);
        outer.finish()?;
        let d = Self {
            src: addr_from(r.expect(T_SRC)?)?,
            dst: addr_from(r.expect(T_DST)?)?,
            proto: match r.expect(T_PROTO)? {
                [0] => Proto::Tcp,
                [1] => Proto::Udp,
                _ => return Err(TlvError::BadField("proto")),
            },
            seq: r.u64(T_SEQ)?,
            payload: r.expect(T_BODY)?.to_vec(),
        };
        r.finish()?;
        Ok(d)
    }
}

impl Wire for SimIpDatagram {
    fn wire_len(&self) -> usize {
        28 + self.payload.len()
    }
}

/// Wraps a datagram in an Interest named
/// `gateway_prefix/<dst>/<src>/<seq>`.
pub fn encap_ip_in_interest(
    d: &SimIpDatagram,
    gateway_prefix: &Identifier,
    nonce: u64,
) -> Interest {
    let name = gateway_prefix
        .join(&[d.dst.to_string(), d.src.to_string(), d.seq.to_string()])
        .expect("address labels are valid");
    Interest {
        tunnel_payload: Some(d.encode()),
        ..Interest::new(name, nonce)
    }
}

pub fn decap_interest(i: &Interest) -> Result<SimIpDatagram, TlvError> {
    let p = i
        .tunnel_payload
        .as_deref()
        .ok_or(TlvError::BadField("no tunnel payload"))?;
    SimIpDatagram::decode(p)
}

/// Application messages carried in datagram payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppMsg {
    Request {
        resource: String,
        seg: u64,
    },
    Segment {
        resource: String,
        seg: u64,
        last: u64,
        bytes: Vec<u8>,
    },
    Missing {
        resource: String,
    },
}

impl AppMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        match self {
            AppMsg::Request { resource, seg } => {
                w.nested(T_APP_REQ, |w| {
                    w.str(T_RESOURCE, resource).u64(T_SEGNO, *seg);
                });
            }
            AppMsg::Segment {
                resource,
                seg,
                last,
                bytes,
            } => {
                w.nested(T_APP_SEG, |w| {
                    w.str(T_RESOURCE, resource)
                        .u64(T_SEGNO, *seg)
                        .u64(T_LAST, *last)
                        .bytes(T_BYTES, bytes);
                });
            }
            AppMsg::Missing { resource } => {
                w.nested(T_APP_MISSING, |w| {
                    w.str(T_RESOURCE, resource);
                });
            }
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TlvError> {
        let mut outer = TlvReader::new(buf);
        let (t, body) = outer.next_any()?;
        outer.finish()?;
        let mut r = TlvReader::new(body);
        let m = match t {
            T_APP_REQ => AppMsg::Request {
                resource: r.str(T_RESOURCE)?.to_string(),
                seg: r.u64(T_SEGNO)?,
            },
            T_APP_SEG => AppMsg::Segment {
                resource: r.str(T_RESOURCE)?.to_string(),
                seg: r.u64(T_SEGNO)?,
                last: r.u64(T_LAST)?,
                bytes: r.expect(T_BYTES)?.to_vec(),
            },
            T_APP_MISSING => AppMsg::Missing {
                resource: r.str(T_RESOURCE)?.to_string(),
            },
            _ => return Err(TlvError::BadField("app message")),
        };
        r.finish()?;
        Ok(m)
    }
}

/// What crosses a simulated link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// CCN packet directly in a link-layer frame.
    Ccn(Packet),
    /// IP datagram.
    Ip(SimIpDatagram),
}

impl Wire for Frame {
    fn wire_len(&self) -> usize {
        match self {
            Frame::Ccn(p) => 14 + p.wire_len(),
            Frame::Ip(d) => 14 + d.wire_len(),
        }
    }
}

/// `name/s<k>`.
pub fn segment_name(base: &Identifier, k: u64) -> Identifier {
    base.child(format!("s{k}")).expect("segment label is valid")
}

/// Splits `base/s<k>` into its parts.
pub fn parse_segment(name: &Identifier) -> Option<(Identifier, u64)> {
    let last = name.components().last()?;
    let k = last.strip_prefix('s')?.parse().ok()?;
    Some((name.truncated(name.depth() - 1), k))
}

/// Number of segments for `len` bytes (at least one).
pub fn segment_count(len: usize) -> u64 {
    len.div_ceil(SEGMENT_SIZE).max(1) as u64
}
