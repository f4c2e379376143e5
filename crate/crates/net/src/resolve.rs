//! Recursive resolution through the domain tree.
//!
//! A query climbs parent by parent to the top-level node, then descends
//! toward the child whose domain path is a prefix of the queried name.
//! Every node that sees the query for the first time appends itself to the
//! visited list and checks its publication table. Hops travel as control
//! Interests under `/minctl/resolve`; each hop opens its own control
//! Interest to the next node and answers the previous hop once the reply
//! comes back.

use std::collections::BTreeMap;

use min_core::tlv::{TlvError, TlvReader, TlvWriter};
use min_core::{FibAction, HptFibEntry, Identifier};
use rustc_hash::FxHashMap;

use crate::packet::{Data, Frame, Interest, NackReason, Packet};
use crate::router::{MirNode, Role, APP};
use crate::sim::{Outbox, Tick};

const T_REQ: u8 = 0x60;
const T_REPLY: u8 = 0x61;
const T_QUERY: u8 = 0x62;
const T_PHASE: u8 = 0x63;
const T_VISITED: u8 = 0x64;
const T_OUTCOME: u8 = 0x65;
const T_PUBNAME: u8 = 0x66;
const T_LOCATOR: u8 = 0x67;

pub fn is_control(name: &Identifier) -> bool {
    matches!(name.components(), [a, b, ..] if a == "minctl" && b == "resolve")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveRequest {
    pub query: Identifier,
    pub phase: Phase,
    pub visited: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Found {
        publication: Identifier,
        locator: Identifier,
    },
    NotFound,
    LoopDetected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveReply {
    pub outcome: Outcome,
    pub visited: Vec<String>,
}

impl ResolveRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        w.nested(T_REQ, |w| {
            w.id(T_QUERY, &self.query)
                .bytes(T_PHASE, &[matches!(self.phase, Phase::Down) as u8]);
            for v in &self.visited {
                w.str(T_VISITED, v);
            }
        });
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TlvError> {
        let mut outer = TlvReader::new(buf);
        let mut r = TlvReader::new(outer.expect(T_REQ)?);
        outer.finish()?;
        let query = r.id(T_QUERY)?;
        let phase = match r.expect(T_PHASE)? {
            [0] => Phase::Up,
            [1] => Phase::Down,
            _ => return Err(TlvError::BadField("phase")),
        };
        let mut visited = Vec::new();
        while !r.is_empty() {
            visited.push(r.str(T_VISITED)?.to_string());
        }
        Ok(Self {
            query,
            phase,
            visited,
        })
    }
}

impl ResolveReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = TlvWriter::new();
        w.nested(T_REPLY, |w| {
            match &self.outcome {
                Outcome::Found {
                    publication,
                    locator,
                } => {
                    w.bytes(T_OUTCOME, &[0])
                        .id(T_PUBNAME, publication)
                        .id(T_LOCATOR, locator);
                }
                Outcome::NotFound => {
                    w.bytes(T_OUTCOME, &[1]);
                }
                Outcome::LoopDetected => {
                    w.bytes(T_OUTCOME, &[2]);
                }
            }
            for v in &self.visited {
                w.str(T_VISITED, v);
            }
        });
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, TlvError> {
        let mut outer = TlvReader::new(buf);
        let mut r = TlvReader::new(outer.expect(T_REPLY)?);
        outer.finish()?;
        let outcome = match r.expect(T_OUTCOME)? {
            [0] => Outcome::Found {
                publication: r.id(T_PUBNAME)?,
                locator: r.id(T_LOCATOR)?,
            },
            [1] => Outcome::NotFound,
            [2] => Outcome::LoopDetected,
            _ => return Err(TlvError::BadField("outcome")),
        };
        let mut visited = Vec::new();
        while !r.is_empty() {
            visited.push(r.str(T_VISITED)?.to_string());
        }
        Ok(Self { outcome, visited })
    }
}

/// A finished resolution started on this node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub id: u64,
    pub query: Identifier,
    /// Domain nodes in the order they first handled the query.
    pub visited: Vec<String>,
    pub outcome: Outcome,
    pub started: Tick,
    pub finished: Tick,
}

#[derive(Debug, Clone)]
enum ReplyTo {
    /// Answer the control Interest with this name.
    Relay(Identifier),
    /// Local resolution id.
    Local(u64),
}

#[derive(Debug)]
struct Pending {
    query: Identifier,
    parked: Vec<Interest>,
    started: Tick,
}

#[derive(Default)]
pub(crate) struct ResolverState {
    next_qid: u64,
    relays: FxHashMap<Identifier, ReplyTo>,
    pending: BTreeMap<u64, Pending>,
    log: Vec<Resolution>,
}

impl MirNode {
    pub fn resolutions(&self) -> &[Resolution] {
        &self.res.log
    }

    pub fn resolution(&self, id: u64) -> Option<&Resolution> {
        self.res.log.iter().find(|r| r.id == id)
    }

    /// Starts resolving `query`; the result lands in [`Self::resolutions`].
    pub fn start_resolution(
        &mut self,
        now: Tick,
        query: Identifier,
        out: &mut Outbox<Frame>,
    ) -> u64 {
        self.begin(now, query, Vec::new(), out)
    }

    fn begin(
        &mut self,
        now: Tick,
        query: Identifier,
        parked: Vec<Interest>,
        out: &mut Outbox<Frame>,
    ) -> u64 {
        self.bump("resolutions_started");
        let id = self.res.next_qid;
        self.res.next_qid += 1;
        self.res.pending.insert(
            id,
            Pending {
                query: query.clone(),
                parked,
                started: now,
            },
        );
        let req = ResolveRequest {
            query,
            phase: Phase::Up,
            visited: Vec::new(),
        };
        self.resolve_step(now, req, ReplyTo::Local(id), out);
        id
    }

    /// Parks an Interest no table could route and resolves its name.
    pub(crate) fn escalate(&mut self, now: Tick, i: Interest, out: &mut Outbox<Frame>) {
        if self.domain.is_none() {
            return self.reject(now, &i.name, NackReason::NoRoute, out);
        }
        let query = i.name.clone();
        self.begin(now, query, vec![i], out);
    }

    fn resolve_step(
        &mut self,
        now: Tick,
        mut req: ResolveRequest,
        reply_to: ReplyTo,
        out: &mut Outbox<Frame>,
    ) {
        let me = self.name.clone();
        let seen = req.visited.contains(&me);
        if seen && req.phase == Phase::Up {
            return self.finish(now, reply_to, Outcome::LoopDetected, req.visited, out);
        }
        if !seen {
            req.visited.push(me);
            if let Some(e) = self.publications.longest_prefix_match(&req.query) {
                if let FibAction::Translate(loc) = e.action {
                    let outcome = Outcome::Found {
                        publication: e.key,
                        locator: *loc,
                    };
                    return self.finish(now, reply_to, outcome, req.visited, out);
                }
            }
        }
        let Some(dom) = self.domain.clone() else {
            return self.finish(now, reply_to, Outcome::NotFound, req.visited, out);
        };
        let climbing = req.phase == Phase::Up && dom.role != Role::Top && dom.parent.is_some();
        let next = if climbing {
            dom.parent.clone()
        } else {
            req.phase = Phase::Down;
            dom.children
                .iter()
                .filter(|(path, _)| path.is_prefix_of_same_kind(&req.query))
                .max_by_key(|(path, _)| path.depth())
                .map(|(_, loc)| loc.clone())
                .filter(|_| dom.path.is_prefix_of_same_kind(&req.query))
        };
        let Some(next) = next else {
            return self.finish(now, reply_to, Outcome::NotFound, req.visited, out);
        };
        let qid = self.res.next_qid;
        self.res.next_qid += 1;
        let name = Identifier::content(["minctl", "resolve", &self.name, &format!("q{qid}")])
            .expect("control names are valid");
        self.res.relays.insert(name.clone(), reply_to);
        self.bump("resolve_msgs");
        let mut i = Interest::new(name, self.nonce());
        i.hint = Some(next);
        i.tunnel_payload = Some(req.encode());
        self.on_interest(now, APP, i, out);
    }

    fn finish(
        &mut self,
        now: Tick,
        reply_to: ReplyTo,
        outcome: Outcome,
        visited: Vec<String>,
        out: &mut Outbox<Frame>,
    ) {
        match reply_to {
            ReplyTo::Relay(name) => {
                let reply = ResolveReply { outcome, visited };
                let d = Data::signed(name, reply.encode().into(), None, &self.key);
                self.emit_data(now, d, out);
            }
            ReplyTo::Local(id) => {
                let Some(p) = self.res.pending.remove(&id) else {
                    return;
                };
                match &outcome {
                    Outcome::Found {
                        publication,
                        locator,
                    } => {
                        self.bump("resolutions_found");
                        self.fib.insert(
                            HptFibEntry::translate(publication.clone(), locator.clone()).learned(),
                        );
                    }
                    _ => self.bump("resolutions_failed"),
                }
                self.res.log.push(Resolution {
                    id,
                    query: p.query,
                    visited,
                    outcome: outcome.clone(),
                    started: p.started,
                    finished: now,
                });
                for i in p.parked {
                    if self.pit.get(&i.name).is_none() {
                        continue;
                    }
                    match outcome {
                        Outcome::Found { .. } => self.route(now, i, APP, out),
                        _ => self.reject(now, &i.name, NackReason::NotFound, out),
                    }
                }
            }
        }
    }

    /// A control Interest addressed to this node.
    pub(crate) fn on_control_interest(&mut self, now: Tick, i: Interest, out: &mut Outbox<Frame>) {
        let req = i.tunnel_payload.as_deref().map(ResolveRequest::decode);
        match req {
            Some(Ok(req)) => self.resolve_step(now, req, ReplyTo::Relay(i.name), out),
            _ => self.reject(now, &i.name, NackReason::NotFound, out),
        }
    }

    /// The answer to a control Interest this node sent.
    pub(crate) fn on_control_reply(&mut self, now: Tick, p: Packet, out: &mut Outbox<Frame>) {
        let Some(reply_to) = self.res.relays.remove(p.name()) else {
            self.bump("app_unmatched");
            return;
        };
        let reply = match &p {
            Packet::Data(d) => ResolveReply::decode(&d.payload).ok(),
            _ => None,
        };
        let (outcome, visited) = match reply {
            Some(r) => (r.outcome, r.visited),
            None => (Outcome::NotFound, Vec::new()),
        };
        self.finish(now, reply_to, outcome, visited, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_messages_round_trip() {
        let req = ResolveRequest {
            query: "/ndr/gd/gdut/video".parse().unwrap(),
            phase: Phase::Down,
            visited: vec!["node10".into(), "node9".into()],
        };
        assert_eq!(ResolveRequest::decode(&req.encode()).unwrap(), req);
        for outcome in [
            Outcome::Found {
                publication: "/a".parse().unwrap(),
                locator: "/loc/x".parse().unwrap(),
            },
            Outcome::NotFound,
            Outcome::LoopDetected,
        ] {
            let r = ResolveReply {
                outcome,
                visited: vec!["a".into()],
            };
            assert_eq!(ResolveReply::decode(&r.encode()).unwrap(), r);
        }
    }

    #[test]
    fn control_prefix() {
        assert!(is_control(&"/minctl/resolve/a/q1".parse().unwrap()));
        assert!(!is_control(&"/minctl/other".parse().unwrap()));
    }
}
