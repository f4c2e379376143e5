//! Genesis configuration.
//!
//! Text form, one directive per line:
//!
//! ```text
//! term_length 64
//! butler_count 3
//! commissioner <id> <public-key-hex>
//! butler <id> <public-key-hex>
//! candidate <id> <public-key-hex>
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::{NodeId, NodeRole, DEFAULT_BUTLER_COUNT, DEFAULT_TERM_LENGTH};
use crate::crypto::{Digest, KeyPair, PublicKey, Signer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenesisError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("node {0} holds more than one role")]
    OverlappingRoles(NodeId),
    #[error("empty committee")]
    EmptyCommittee,
    #[error("no butlers")]
    NoButlers,
    #[error("term length must be positive")]
    ZeroTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Member {
    pub id: NodeId,
    pub key: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genesis {
    pub committee: Vec<Member>,
    pub butlers: Vec<Member>,
    pub candidates: Vec<Member>,
    pub term_length: u64,
    pub butler_count: usize,
}

impl Genesis {
    /// Builds a genesis whose keys are derived from `label/<id>`.
    pub fn derived(
        label: &str,
        committee: &[NodeId],
        butlers: &[NodeId],
        candidates: &[NodeId],
    ) -> Result<Self, GenesisError> {
        let member = |id: &NodeId| Member {
            id: *id,
            key: Self::derived_key(label, *id).public_key(),
        };
        let g = Self {
            committee: committee.iter().map(member).collect(),
            butlers: butlers.iter().map(member).collect(),
            candidates: candidates.iter().map(member).collect(),
            term_length: DEFAULT_TERM_LENGTH,
            butler_count: DEFAULT_BUTLER_COUNT,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn derived_key(label: &str, id: NodeId) -> KeyPair {
        KeyPair::derive(&format!("{label}/{id}"))
    }

    pub fn validate(&self) -> Result<(), GenesisError> {
        if self.committee.is_empty() {
            return Err(GenesisError::EmptyCommittee);
        }
        if self.butlers.is_empty() {
            return Err(GenesisError::NoButlers);
        }
        if self.term_length == 0 {
            return Err(GenesisError::ZeroTerm);
        }
        let mut seen = BTreeSet::new();
        for m in self
            .committee
            .iter()
            .chain(&self.butlers)
            .chain(&self.candidates)
        {
            if !seen.insert(m.id) {
                return Err(GenesisError::OverlappingRoles(m.id));
            }
        }
        Ok(())
    }

    pub fn role_of(&self, id: NodeId) -> NodeRole {
        if self.committee.iter().any(|m| m.id == id) {
            NodeRole::Commissioner
        } else if self.butlers.iter().any(|m| m.id == id) {
            NodeRole::Butler
        } else if self.candidates.iter().any(|m| m.id == id) {
            NodeRole::ButlerCandidate
        } else {
            NodeRole::Ordinary
        }
    }

    pub fn commissioner_key(&self, id: NodeId) -> Option<&PublicKey> {
        self.committee.iter().find(|m| m.id == id).map(|m| &m.key)
    }

    pub fn committee_size(&self) -> usize {
        self.committee.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "term_length {}", self.term_length).unwrap();
        writeln!(s, "butler_count {}", self.butler_count).unwrap();
        for (tag, list) in [
            ("commissioner", &self.committee),
            ("butler", &self.butlers),
            ("candidate", &self.candidates),
        ] {
            for m in list {
                writeln!(s, "{tag} {} {}", m.id, m.key.to_hex()).unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, GenesisError> {
        let mut g = Self {
            committee: Vec::new(),
            butlers: Vec::new(),
            candidates: Vec::new(),
            term_length: DEFAULT_TERM_LENGTH,
            butler_count: DEFAULT_BUTLER_COUNT,
        };
        for (i, line) in text.lines().enumerate() {
            let err = |msg: &str| GenesisError::Syntax {
                line: i + 1,
                msg: msg.to_string(),
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                [w, ..] if w.starts_with('#') => {}
                ["term_length", n] => g.term_length = n.parse().map_err(|_| err("bad number"))?,
                ["butler_count", n] => g.butler_count = n.parse().map_err(|_| err("bad number"))?,
                [tag @ ("commissioner" | "butler" | "candidate"), id, key] => {
                    let m = Member {
                        id: id.parse().map_err(|_| err("bad node id"))?,
                        key: key.parse().map_err(|_| err("bad key"))?,
                    };
                    match *tag {
                        "commissioner" => g.committee.push(m),
                        "butler" => g.butlers.push(m),
                        _ => g.candidates.push(m),
                    }
                }
                _ => return Err(err("unrecognized directive")),
            }
        }
        g.validate()?;
        Ok(g)
    }

    pub fn hash(&self) -> Digest {
        Digest::of(self.to_text().as_bytes())
    }
}
