//! Multi-modal identifiers.
//!
//! Every identifier carries a kind tag and a canonical text form of
//! `<scheme>:<body>`:
//!
//! | kind           | scheme | body                                  |
//! |----------------|--------|---------------------------------------|
//! | `Content`      | `ccn:` | `/a/b/c`                              |
//! | `Identity`     | `id:`  | `/org/alice`                          |
//! | `Geo`          | `geo:` | `/cn/gd/sz/518055`                    |
//! | `Ip`           | `ip:`  | `10.0.0.7`, `10.0.0.0/8`, `2001:db8::/32` |
//! | `LegacyDomain` | `dns:` | `www.example.com`                     |
//!
//! A bare `/a/b` is accepted as a content name. Legacy domain names are
//! stored most-significant label first (`com`, `example`, `www`) so that
//! prefix relations follow the DNS delegation tree.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("empty name")]
    EmptyName,
    #[error("bad ip syntax: {0}")]
    BadIpSyntax(String),
    #[error("illegal label: {0:?}")]
    IllegalLabel(String),
    #[error("unknown scheme: {0:?}")]
    UnknownScheme(String),
    #[error("identifier kinds differ")]
    KindMismatch,
    #[error("wrong identifier kind: expected {expected}, got {got}")]
    WrongKind { expected: IdKind, got: IdKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IdKind {
    Content,
    Identity,
    Geo,
    Ip,
    LegacyDomain,
}

impl IdKind {
    pub const ALL: [IdKind; 5] = [
        IdKind::Content,
        IdKind::Identity,
        IdKind::Geo,
        IdKind::Ip,
        IdKind::LegacyDomain,
    ];

    pub fn scheme(self) -> &'static str {
        match self {
            IdKind::Content => "ccn",
            IdKind::Identity => "id",
            IdKind::Geo => "geo",
            IdKind::Ip => "ip",
            IdKind::LegacyDomain => "dns",
        }
    }

    fn from_scheme(s: &str) -> Option<Self> {
        Some(match s {
            "ccn" => IdKind::Content,
            "id" => IdKind::Identity,
            "geo" => IdKind::Geo,
            "ip" => IdKind::Ip,
            "dns" => IdKind::LegacyDomain,
            _ => return None,
        })
    }

    /// Kinds whose structure is a list of labels.
    pub fn is_hierarchical(self) -> bool {
        self != IdKind::Ip
    }
}

impl fmt::Display for IdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.scheme())
    }
}

/// An address plus prefix length. Host bits beyond `len` are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IpPrefix {
    addr: IpAddr,
    len: u8,
}

impl IpPrefix {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, IdError> {
        let max = max_len(&addr);
        if len > max {
            return Err(IdError::BadIpSyntax(format!("{addr}/{len}")));
        }
        Ok(Self {
            addr: mask(addr, len),
            len,
        })
    }

    pub fn host(addr: IpAddr) -> Self {
        let len = max_len(&addr);
        Self { addr, len }
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_host(&self) -> bool {
        self.len == max_len(&self.addr)
    }

    /// Address bits as a left-aligned `u128`, plus the family width.
    pub fn bits(&self) -> (u128, u8) {
        match self.addr {
            IpAddr::V4(a) => ((u32::from(a) as u128) << 96, 32),
            IpAddr::V6(a) => (u128::from(a), 128),
        }
    }

    /// Bit `i` counted from the most significant end.
    pub fn bit(&self, i: u8) -> bool {
        let (bits, _) = self.bits();
        (bits >> (127 - i as u32)) & 1 == 1
    }

    pub fn contains(&self, other: &IpPrefix) -> bool {
        if self.addr.is_ipv4() != other.addr.is_ipv4() || self.len > other.len {
            return false;
        }
        mask(other.addr, self.len) == self.addr
    }

    pub fn from_bits(v6: bool, bits: u128, len: u8) -> Self {
        let addr = if v6 {
            IpAddr::V6(Ipv6Addr::from(bits))
        } else {
            IpAddr::V4(Ipv4Addr::from((bits >> 96) as u32))
        };
        Self {
            addr: mask(addr, len),
            len,
        }
    }
}

fn max_len(addr: &IpAddr) -> u8 {
    match addr {
        IpAddr::V4(_) => 32,
        IpAddr::V6(_) => 128,
    }
}

fn mask(addr: IpAddr, len: u8) -> IpAddr {
    match addr {
        IpAddr::V4(a) => {
            let m = if len == 0 {
                0
            } else {
                u32::MAX << (32 - len as u32)
            };
            IpAddr::V4(Ipv4Addr::from(u32::from(a) & m))
        }
        IpAddr::V6(a) => {
            let m = if len == 0 {
                0
            } else {
                u128::MAX << (128 - len as u32)
            };
            IpAddr::V6(Ipv6Addr::from(u128::from(a) & m))
        }
    }
}

/// A tagged multi-modal name.
///
/// Ordering is by kind, then component-wise, which places every name
/// directly after its prefixes in a sorted map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Identifier {
    kind: IdKind,
    components: Vec<String>,
    ip: Option<IpPrefix>,
}

pub fn validate_label(kind: IdKind, label: &str) -> Result<(), IdError> {
    if label.is_empty()
        || label.contains('/')
        || label.chars().any(char::is_control)
        || (kind == IdKind::LegacyDomain && label.contains('.'))
    {
        return Err(IdError::IllegalLabel(label.to_string()));
    }
    Ok(())
}

impl Identifier {
    /// Builds a hierarchical identifier from labels.
    pub fn new<I, S>(kind: IdKind, labels: I) -> Result<Self, IdError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if !kind.is_hierarchical() {
            return Err(IdError::WrongKind {
                expected: IdKind::Content,
                got: kind,
            });
        }
        let components = labels.into_iter().map(Into::into).collect::<Vec<String>>();
        if components.is_empty() {
            return Err(IdError::EmptyName);
        }
        for c in &components {
            validate_label(kind, c)?;
        }
        Ok(Self {
            kind,
            components,
            ip: None,
        })
    }

    pub fn content<I, S>(labels: I) -> Result<Self, IdError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(IdKind::Content, labels)
    }

    pub fn ip(prefix: IpPrefix) -> Self {
        Self {
            kind: IdKind::Ip,
            components: Vec::new(),
            ip: Some(prefix),
        }
    }

    pub fn ip_host(addr: IpAddr) -> Self {
        Self::ip(IpPrefix::host(addr))
    }

    pub fn kind(&self) -> IdKind {
        self.kind
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn ip_prefix(&self) -> Option<&IpPrefix> {
        self.ip.as_ref()
    }

    pub fn is_hierarchical(&self) -> bool {
        self.kind.is_hierarchical()
    }

    /// Number of labels, or prefix bits for `Ip`.
    pub fn depth(&self) -> usize {
        match &self.ip {
            Some(p) => p.len as usize,
            None => self.components.len(),
        }
    }

    /// Appends one label.
    pub fn child(&self, label: impl Into<String>) -> Result<Self, IdError> {
        let label = label.into();
        if !self.is_hierarchical() {
            return Err(IdError::WrongKind {
                expected: IdKind::Content,
                got: self.kind,
            });
        }
        validate_label(self.kind, &label)?;
        let mut out = self.clone();
        out.components.push(label);
        Ok(out)
    }

    /// Appends already-validated labels of a same-charset identifier.
    pub fn join(&self, suffix: &[String]) -> Result<Self, IdError> {
        let mut out = self.clone();
        for s in suffix {
            validate_label(self.kind, s)?;
            out.components.push(s.clone());
        }
        Ok(out)
    }

    /// The leading `n` labels (hierarchical kinds) or bits (`Ip`).
    pub fn truncated(&self, n: usize) -> Self {
        match &self.ip {
            Some(p) => {
                let len = n.min(p.len as usize) as u8;
                let (bits, width) = p.bits();
                Self::ip(IpPrefix::from_bits(width == 128, bits, len))
            }
            None => Self {
                kind: self.kind,
                components: self.components[..n.min(self.components.len())].to_vec(),
                ip: None,
            },
        }
    }

    /// True iff `self` is a leading part of `other`. For `Ip` this is CIDR
    /// containment.
    pub fn is_prefix_of(&self, other: &Identifier) -> Result<bool, IdError> {
        if self.kind != other.kind {
            return Err(IdError::KindMismatch);
        }
        Ok(match (&self.ip, &other.ip) {
            (Some(a), Some(b)) => a.contains(b),
            _ => other.components.starts_with(&self.components),
        })
    }

    /// `is_prefix_of` that treats a kind mismatch as `false`.
    pub fn is_prefix_of_same_kind(&self, other: &Identifier) -> bool {
        self.is_prefix_of(other).unwrap_or(false)
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.kind.scheme())?;
        match self.kind {
            IdKind::Ip => {
                let p = self.ip.expect("ip identifier without address");
                if p.is_host() {
                    write!(f, "{}", p.addr)
                } else {
                    write!(f, "{}/{}", p.addr, p.len)
                }
            }
            IdKind::LegacyDomain => {
                for (i, c) in self.components.iter().rev().enumerate() {
                    if i > 0 {
                        f.write_str(".")?;
                    }
                    f.write_str(c)?;
                }
                Ok(())
            }
            _ => {
                for c in &self.components {
                    write!(f, "/{c}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Identifier {
    type Err = IdError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        parse_identifier(text)
    }
}

/// Parses the canonical text form.
pub fn parse_identifier(text: &str) -> Result<Identifier, IdError> {
    if text.is_empty() {
        return Err(IdError::EmptyName);
    }
    let (kind, body) = if text.starts_with('/') {
        (IdKind::Content, text)
    } else {
        let (scheme, body) = text
            .split_once(':')
            .ok_or_else(|| IdError::UnknownScheme(text.to_string()))?;
        let kind = IdKind::from_scheme(scheme)
            .ok_or_else(|| IdError::UnknownScheme(scheme.to_string()))?;
        (kind, body)
    };
    match kind {
        IdKind::Ip => parse_ip(body).map(Identifier::ip),
        IdKind::LegacyDomain => {
            if body.is_empty() {
                return Err(IdError::EmptyName);
            }
            let labels: Vec<&str> = body.split('.').rev().collect();
            Identifier::new(kind, labels)
        }
        _ => {
            let rest = body
                .strip_prefix('/')
                .ok_or_else(|| IdError::IllegalLabel(body.to_string()))?;
            if rest.is_empty() {
                return Err(IdError::EmptyName);
            }
            Identifier::new(kind, rest.split('/'))
        }
    }
}

fn parse_ip(body: &str) -> Result<IpPrefix, IdError> {
    if body.is_empty() {
        return Err(IdError::EmptyName);
    }
    let bad = || IdError::BadIpSyntax(body.to_string());
    match body.split_once('/') {
        Some((addr, len)) => {
            let addr: IpAddr = addr.parse().map_err(|_| bad())?;
            if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let len: u8 = len.parse().map_err(|_| bad())?;
            IpPrefix::new(addr, len).map_err(|_| bad())
        }
        None => Ok(IpPrefix::host(body.parse().map_err(|_| bad())?)),
    }
}
