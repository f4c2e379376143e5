//! Plain IP hosts and routers.

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::Arc;

use min_core::{FaceId, FibAction, HptFib, Identifier};
use rustc_hash::FxHashMap;

use crate::fetch::FetchSession;
use crate::packet::{segment_count, AppMsg, Frame, Proto, SimIpDatagram, SEGMENT_SIZE};
use crate::sim::{Node, Outbox, Tick};

/// A client transfer: `resource` fetched from `server`.
#[derive(Debug, Clone)]
pub struct IpFetch {
    pub server: IpAddr,
    pub resource: String,
    pub session: FetchSession,
}

pub struct IpNode {
    pub name: String,
    pub ip: IpAddr,
    /// Routers forward datagrams not addressed to them; hosts drop them.
    pub router: bool,
    pub routes: HptFib,
    files: BTreeMap<String, Arc<[u8]>>,
    fetches: Vec<IpFetch>,
    pending: FxHashMap<u64, (usize, u64)>,
    next_seq: u64,
    counters: BTreeMap<&'static str, u64>,
    violations: BTreeMap<FaceId, u64>,
}

impl IpNode {
    pub fn new(name: &str, ip: IpAddr, router: bool) -> Self {
        Self {
            name: name.to_string(),
            ip,
            router,
            routes: HptFib::new(),
            files: BTreeMap::new(),
            fetches: Vec::new(),
            pending: FxHashMap::default(),
            next_seq: 0,
            counters: BTreeMap::new(),
            violations: BTreeMap::new(),
        }
    }

    fn bump(&mut self, name: &'static str) {
        *self.counters.entry(name).or_insert(0) += 1;
    }

    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn violations(&self) -> u64 {
        self.violations.values().sum()
    }

    pub fn add_file(&mut self, resource: &str, bytes: Arc<[u8]>) {
        self.files.insert(resource.to_string(), bytes);
    }

    pub fn add_fetch(&mut self, f: IpFetch) -> usize {
        self.fetches.push(f);
        self.fetches.len() - 1
    }

    pub fn fetches(&self) -> &[IpFetch] {
        &self.fetches
    }

    fn send(&mut self, d: SimIpDatagram, out: &mut Outbox<Frame>) {
        match self
            .routes
            .longest_prefix_match(&Identifier::ip_host(d.dst))
            .map(|e| e.action)
        {
            Some(FibAction::Forward(f)) => {
                self.bump("ip_out");
                out.send(f, Frame::Ip(d));
            }
            _ => self.bump("ip_dropped"),
        }
    }

    fn serve(&mut self, d: SimIpDatagram, out: &mut Outbox<Frame>) {
        let msg = match AppMsg::decode(&d.payload) {
            Ok(AppMsg::Request { resource, seg }) => match self.files.get(&resource).cloned() {
                Some(bytes) if seg < segment_count(bytes.len()) => {
                    let lo = seg as usize * SEGMENT_SIZE;
                    let hi = (lo + SEGMENT_SIZE).min(bytes.len());
                    self.bump("segments_served");
                    AppMsg::Segment {
                        last: segment_count(bytes.len()) - 1,
                        bytes: bytes[lo..hi].to_vec(),
                        resource,
                        seg,
                    }
                }
                _ => AppMsg::Missing { resource },
            },
            Ok(AppMsg::Segment { .. } | AppMsg::Missing { .. }) => return,
            Err(_) => {
                self.bump("ip_dropped");
                return;
            }
        };
        let reply = SimIpDatagram {
            src: self.ip,
            dst: d.src,
            proto: d.proto,
            seq: d.seq,
            payload: msg.encode(),
        };
        self.send(reply, out);
    }

    fn on_local(&mut self, now: Tick, d: SimIpDatagram, out: &mut Outbox<Frame>) {
        if let Some((idx, seg)) = self.pending.get(&d.seq).copied() {
            match AppMsg::decode(&d.payload) {
                Ok(AppMsg::Segment { bytes, last, .. }) => {
                    self.pending.remove(&d.seq);
                    self.fetches[idx]
                        .session
                        .on_segment(now, seg, Some(last), &bytes);
                    return;
                }
                Ok(AppMsg::Missing { .. }) => {
                    self.pending.remove(&d.seq);
                    self.fetches[idx].session.fail(now, "NotFound");
                    return;
                }
                _ => {}
            }
        }
        self.serve(d, out);
    }
}

impl Node for IpNode {
    type Msg = Frame;

    fn on_message(&mut self, now: Tick, face: FaceId, msg: Frame, out: &mut Outbox<Frame>) {
        let d = match msg {
            Frame::Ip(d) => d,
            Frame::Ccn(_) => {
                *self.violations.entry(face).or_insert(0) += 1;
                return;
            }
        };
        self.bump("ip_in");
        if d.dst == self.ip {
            self.on_local(now, d, out);
        } else if self.router {
            self.bump("ip_forwarded");
            self.send(d, out);
        } else {
            self.bump("ip_dropped");
        }
    }

    fn on_tick(&mut self, now: Tick, out: &mut Outbox<Frame>) {
        for idx in 0..self.fetches.len() {
            let segs = self.fetches[idx].session.poll(now);
            for seg in segs {
                self.next_seq += 1;
                let seq = self.next_seq;
                self.pending.insert(seq, (idx, seg));
                let f = &self.fetches[idx];
                let d = SimIpDatagram {
                    src: self.ip,
                    dst: f.server,
                    proto: Proto::Tcp,
                    seq,
                    payload: AppMsg::Request {
                        resource: f.resource.clone(),
                        seg,
                    }
                    .encode(),
                };
                self.send(d, out);
            }
        }
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        let mut m: Vec<(String, u64)> = self
            .counters
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        m.push(("violations".into(), self.violations()));
        m
    }
}
