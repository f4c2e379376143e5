//! The multi-identifier router.
//!
//! Interest pipeline, in order: duplicate nonce and hop limit checks, the
//! DNS stub for legacy names, the FIB for IP names, the Content Store, the
//! PIT, then routing: own tunnel prefix, forwarding hint, publication
//! table, FIB, and finally recursive resolution through the domain tree.

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::Arc;

use min_core::{FaceId, FibAction, HptFib, HptFibEntry, IdKind, Identifier, KeyPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::fetch::FetchSession;
use crate::gateway::Gateway;
use crate::packet::{
    parse_segment, segment_count, segment_name, Data, Frame, Interest, Nack, NackReason, Packet,
    SEGMENT_SIZE,
};
use crate::resolve::ResolverState;
use crate::sim::{Node, Outbox, Tick};
use crate::tables::{ContentStore, NonceWindow, Pit, PitInsert, CS_CAPACITY, NONCE_WINDOW};

/// The local application face.
pub const APP: FaceId = FaceId(0);
/// Virtual faces for UDP tunnels are numbered from here.
pub const TUNNEL_FACE_BASE: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Top,
    Supervisory,
    Edge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainInfo {
    pub path: Identifier,
    pub role: Role,
    /// Locator of the parent domain node.
    pub parent: Option<Identifier>,
    /// `(domain path, locator)` of each child domain node.
    pub children: Vec<(Identifier, Identifier)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// CCN frames straight on a link.
    LinkLayer,
    /// Raw IP side of a gateway.
    IpNative,
    /// CCN carried in UDP to a peer gateway.
    IpUdp { peer: IpAddr },
}

/// Per-face traffic by regime. `violations` counts frames of the wrong
/// regime seen on the face.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaceStats {
    pub ccn_in: u64,
    pub ccn_out: u64,
    pub ip_in: u64,
    pub ip_out: u64,
    pub violations: u64,
}

pub fn locator_of(node: &str) -> Identifier {
    Identifier::content(["loc", node]).expect("node names are valid labels")
}

pub struct MirNode {
    pub name: String,
    pub locator: Identifier,
    pub domain: Option<DomainInfo>,
    pub ip: Option<IpAddr>,
    pub fib: HptFib,
    /// IP routes and IP translations (gateways only).
    pub ip_fib: HptFib,
    /// Publication table: published name → locator.
    pub publications: HptFib,
    pub dns: BTreeMap<Identifier, IpAddr>,
    pub key: KeyPair,
    pub(crate) faces: BTreeMap<FaceId, FaceKind>,
    pub(crate) face_stats: BTreeMap<FaceId, FaceStats>,
    nonces: FxHashMap<FaceId, NonceWindow>,
    pub(crate) cs: ContentStore,
    pub(crate) pit: Pit,
    repo: BTreeMap<Identifier, Arc<[u8]>>,
    pub(crate) fetches: BTreeMap<Identifier, FetchSession>,
    pub(crate) gw: Option<Gateway>,
    pub(crate) res: ResolverState,
    counters: BTreeMap<&'static str, u64>,
    rng: ChaCha8Rng,
}

impl MirNode {
    pub fn new(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            locator: locator_of(name),
            domain: None,
            ip: None,
            fib: HptFib::new(),
            ip_fib: HptFib::new(),
            publications: HptFib::new(),
            dns: BTreeMap::new(),
            key: KeyPair::derive(&format!("node:{name}")),
            faces: BTreeMap::new(),
            face_stats: BTreeMap::new(),
            nonces: FxHashMap::default(),
            cs: ContentStore::new(CS_CAPACITY),
            pit: Pit::new(),
            repo: BTreeMap::new(),
            fetches: BTreeMap::new(),
            gw: None,
            res: ResolverState::default(),
            counters: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn set_face(&mut self, face: FaceId, kind: FaceKind) {
        self.faces.insert(face, kind);
        self.face_stats.entry(face).or_default();
    }

    pub fn face_kind(&self, face: FaceId) -> Option<FaceKind> {
        self.faces.get(&face).copied()
    }

    pub fn face_stats(&self) -> &BTreeMap<FaceId, FaceStats> {
        &self.face_stats
    }

    pub fn violations(&self) -> u64 {
        self.face_stats.values().map(|s| s.violations).sum()
    }

    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub(crate) fn bump(&mut self, name: &'static str) {
        *self.counters.entry(name).or_insert(0) += 1;
    }

    pub(crate) fn nonce(&mut self) -> u64 {
        self.rng.random()
    }

    pub fn cs(&self) -> &ContentStore {
        &self.cs
    }

    pub fn pit(&self) -> &Pit {
        &self.pit
    }

    /// Serves `bytes` under `name` and lists it in the publication table.
    pub fn publish_local(&mut self, name: Identifier, bytes: Arc<[u8]>) {
        self.publications
            .insert(HptFibEntry::translate(name.clone(), self.locator.clone()));
        self.repo.insert(name, bytes);
    }

    pub fn add_fetch(&mut self, name: Identifier, session: FetchSession) {
        self.fetches.insert(name, session);
    }

    pub fn fetch(&self, name: &Identifier) -> Option<&FetchSession> {
        self.fetches.get(name)
    }

    pub fn fetches(&self) -> impl Iterator<Item = (&Identifier, &FetchSession)> {
        self.fetches.iter()
    }

    /// Handles one CCN packet arriving on `face`.
    pub fn on_packet(&mut self, now: Tick, face: FaceId, p: Packet, out: &mut Outbox<Frame>) {
        match p {
            Packet::Interest(i) => self.on_interest(now, face, i, out),
            Packet::Data(d) => self.on_data(now, face, d, out),
            Packet::Nack(n) => self.on_nack(now, n, out),
        }
    }

    pub fn on_interest(
        &mut self,
        now: Tick,
        face: FaceId,
        mut i: Interest,
        out: &mut Outbox<Frame>,
    ) {
        self.bump("interests_in");
        if face != APP {
            let w = self
                .nonces
                .entry(face)
                .or_insert_with(|| NonceWindow::new(NONCE_WINDOW));
            if !w.admit(i.nonce) {
                self.bump("drops_duplicate");
                return;
            }
            if i.hop_limit == 0 {
                self.bump("drops_hoplimit");
                return;
            }
            i.hop_limit -= 1;
        }
        match i.name.kind() {
            IdKind::LegacyDomain => return self.answer_dns(now, face, i, out),
            IdKind::Ip => {
                match self.fib.longest_prefix_match(&i.name).map(|e| e.action) {
                    Some(FibAction::Forward(f)) => {
                        if self.pit.insert(&i.name, face, i.nonce, now) == PitInsert::New {
                            self.forward(now, f, i, face, out);
                        }
                    }
                    Some(FibAction::Translate(t)) => {
                        i.hint = Some(*t);
                        self.pit_then_route(now, face, i, out);
                    }
                    None => self.nack_to(now, face, &i, NackReason::NoRoute, out),
                }
                return;
            }
            _ => {}
        }
        if let Some(d) = self.cs.lookup(&i.name) {
            self.bump("cs_hits");
            self.emit(now, face, Packet::Data(d), out);
            return;
        }
        self.pit_then_route(now, face, i, out);
    }

    fn pit_then_route(&mut self, now: Tick, face: FaceId, i: Interest, out: &mut Outbox<Frame>) {
        match self.pit.insert(&i.name, face, i.nonce, now) {
            PitInsert::Loop => self.bump("drops_loop"),
            PitInsert::Aggregated => self.bump("pit_aggregations"),
            PitInsert::Retransmit => {
                self.bump("pit_retransmits");
                self.route(now, i, face, out);
            }
            PitInsert::New => self.route(now, i, face, out),
        }
    }

    /// Chooses where an Interest already recorded in the PIT goes next.
    pub(crate) fn route(
        &mut self,
        now: Tick,
        mut i: Interest,
        in_face: FaceId,
        out: &mut Outbox<Frame>,
    ) {
        if let Some(gw) = &self.gw {
            if gw.tunnel_prefix.is_prefix_of_same_kind(&i.name) {
                return self.tunnel_egress(now, i, out);
            }
        }
        if let Some(h) = i.hint.clone() {
            if h == self.locator {
                return self.serve_local(now, i, out);
            }
            return match self.fib.longest_prefix_match(&h).map(|e| e.action) {
                Some(FibAction::Forward(f)) => self.forward(now, f, i, in_face, out),
                _ => self.reject(now, &i.name, NackReason::NoRoute, out),
            };
        }
        if let Some(e) = self.publications.longest_prefix_match(&i.name) {
            if let FibAction::Translate(loc) = e.action {
                i.hint = Some(*loc);
                return self.route(now, i, in_face, out);
            }
        }
        match self.fib.longest_prefix_match(&i.name).map(|e| e.action) {
            Some(FibAction::Forward(f)) => self.forward(now, f, i, in_face, out),
            Some(FibAction::Translate(t)) if t.kind() == IdKind::Ip => self.ccn_to_ip(now, i, out),
            Some(FibAction::Translate(t)) => {
                i.hint = Some(*t);
                self.route(now, i, in_face, out)
            }
            None if crate::resolve::is_control(&i.name) => {
                self.reject(now, &i.name, NackReason::NoRoute, out)
            }
            None => self.escalate(now, i, out),
        }
    }

    fn forward(
        &mut self,
        now: Tick,
        face: FaceId,
        i: Interest,
        in_face: FaceId,
        out: &mut Outbox<Frame>,
    ) {
        if face == in_face {
            return self.reject(now, &i.name, NackReason::NoRoute, out);
        }
        self.bump("interests_out");
        self.emit(now, face, Packet::Interest(i), out);
    }

    /// Answers an Interest whose route ends here.
    fn serve_local(&mut self, now: Tick, i: Interest, out: &mut Outbox<Frame>) {
        if crate::resolve::is_control(&i.name) {
            return self.on_control_interest(now, i, out);
        }
        let (base, k) = match self.repo.contains_key(&i.name) {
            true => (i.name.clone(), 0),
            false => parse_segment(&i.name).unwrap_or((i.name.clone(), 0)),
        };
        if let Some(bytes) = self.repo.get(&base).cloned() {
            let last = segment_count(bytes.len()) - 1;
            if k > last {
                return self.reject(now, &i.name, NackReason::NotFound, out);
            }
            let lo = k as usize * SEGMENT_SIZE;
            let hi = (lo + SEGMENT_SIZE).min(bytes.len());
            self.bump("data_served");
            let d = Data::signed(
                segment_name(&base, k),
                bytes[lo..hi].into(),
                Some(last),
                &self.key,
            );
            return self.emit_data(now, d, out);
        }
        let xlt = self.fib.longest_prefix_match(&i.name).map(|e| e.action);
        match xlt {
            Some(FibAction::Translate(t)) if t.kind() == IdKind::Ip => self.ccn_to_ip(now, i, out),
            _ => self.reject(now, &i.name, NackReason::NotFound, out),
        }
    }

    fn answer_dns(&mut self, now: Tick, face: FaceId, i: Interest, out: &mut Outbox<Frame>) {
        match self.dns.get(&i.name).copied() {
            Some(addr) => {
                self.bump("dns_answers");
                let d = Data::signed(
                    i.name,
                    addr.to_string().into_bytes().into(),
                    None,
                    &self.key,
                );
                self.emit(now, face, Packet::Data(d), out);
            }
            None => self.nack_to(now, face, &i, NackReason::NotFound, out),
        }
    }

    fn nack_to(
        &mut self,
        now: Tick,
        face: FaceId,
        i: &Interest,
        reason: NackReason,
        out: &mut Outbox<Frame>,
    ) {
        let n = Nack {
            name: i.name.clone(),
            nonce: i.nonce,
            reason,
        };
        self.emit(now, face, Packet::Nack(n), out);
    }

    /// Sends a Nack to every face waiting on `name`.
    pub(crate) fn reject(
        &mut self,
        now: Tick,
        name: &Identifier,
        reason: NackReason,
        out: &mut Outbox<Frame>,
    ) {
        self.bump(match reason {
            NackReason::NoRoute => "nacks_noroute",
            NackReason::NotFound => "nacks_notfound",
            NackReason::LoopDetected => "nacks_loop",
        });
        let Some(e) = self.pit.remove(name) else {
            return;
        };
        for r in e.in_records {
            let n = Nack {
                name: name.clone(),
                nonce: r.nonce,
                reason,
            };
            self.emit(now, r.face, Packet::Nack(n), out);
        }
    }

    /// Data produced on this node, returned through the PIT.
    pub(crate) fn emit_data(&mut self, now: Tick, d: Data, out: &mut Outbox<Frame>) {
        self.on_data(now, APP, d, out);
    }

    pub fn on_data(&mut self, now: Tick, face: FaceId, d: Data, out: &mut Outbox<Frame>) {
        if face != APP {
            self.bump("data_in");
        }
        let matched = self.pit.take_matching(&d.name);
        if matched.is_empty() {
            self.bump("unsolicited_data");
            return;
        }
        self.cs.insert(d.clone(), now);
        let mut faces: Vec<FaceId> = matched.iter().flat_map(|(_, e)| e.faces()).collect();
        faces.sort();
        faces.dedup();
        for f in faces {
            if f != APP {
                self.bump("data_out");
            }
            self.emit(now, f, Packet::Data(d.clone()), out);
        }
    }

    fn on_nack(&mut self, now: Tick, n: Nack, out: &mut Outbox<Frame>) {
        self.bump("nacks_in");
        let Some(e) = self.pit.remove(&n.name) else {
            return;
        };
        for r in e.in_records {
            let m = Nack {
                name: n.name.clone(),
                nonce: r.nonce,
                reason: n.reason,
            };
            self.emit(now, r.face, Packet::Nack(m), out);
        }
    }

    /// Sends a packet out of `face`, or hands it to local applications for
    /// the APP face.
    pub(crate) fn emit(&mut self, now: Tick, face: FaceId, p: Packet, out: &mut Outbox<Frame>) {
        if face == APP {
            return self.app_deliver(now, p, out);
        }
        match self.faces.get(&face).copied() {
            Some(FaceKind::LinkLayer) => {
                self.face_stats.get_mut(&face).unwrap().ccn_out += 1;
                out.send(face, Frame::Ccn(p));
            }
            Some(FaceKind::IpUdp { peer }) => self.send_udp(now, face, peer, p, out),
            Some(FaceKind::IpNative) => {
                self.face_stats.get_mut(&face).unwrap().violations += 1;
            }
            None => self.bump("unroutable"),
        }
    }

    fn app_deliver(&mut self, now: Tick, p: Packet, out: &mut Outbox<Frame>) {
        let name = p.name().clone();
        if crate::resolve::is_control(&name) {
            return self.on_control_reply(now, p, out);
        }
        if self.gw.is_some() && self.gateway_app(now, &p, out) {
            return;
        }
        let Some((base, k)) = parse_segment(&name) else {
            self.bump("app_unmatched");
            return;
        };
        let Some(f) = self.fetches.get_mut(&base) else {
            self.bump("app_unmatched");
            return;
        };
        match p {
            Packet::Data(d) => f.on_segment(now, k, d.final_segment, &d.payload),
            Packet::Nack(n) => f.fail(now, n.reason.as_str()),
            Packet::Interest(_) => {}
        }
    }

    fn poll_fetches(&mut self, now: Tick, out: &mut Outbox<Frame>) {
        let mut asks = Vec::new();
        for (name, f) in self.fetches.iter_mut() {
            for k in f.poll(now) {
                asks.push(segment_name(name, k));
            }
        }
        for name in asks {
            let i = Interest::new(name, self.nonce());
            self.on_interest(now, APP, i, out);
        }
    }
}

impl Node for MirNode {
    type Msg = Frame;

    fn on_message(&mut self, now: Tick, face: FaceId, msg: Frame, out: &mut Outbox<Frame>) {
        let kind = self.faces.get(&face).copied();
        let stats = self.face_stats.entry(face).or_default();
        match (msg, kind) {
            (Frame::Ccn(p), Some(FaceKind::LinkLayer)) => {
                stats.ccn_in += 1;
                self.on_packet(now, face, p, out);
            }
            (Frame::Ip(d), Some(FaceKind::IpNative)) => {
                stats.ip_in += 1;
                self.on_datagram(now, face, d, out);
            }
            _ => stats.violations += 1,
        }
    }

    fn on_tick(&mut self, now: Tick, out: &mut Outbox<Frame>) {
        for _ in self.pit.expire(now) {
            self.bump("pit_expired");
        }
        self.poll_fetches(now, out);
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        let mut m: Vec<(String, u64)> = self
            .counters
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        m.push(("cs_entries".into(), self.cs.len() as u64));
        m.push(("pit_entries".into(), self.pit.len() as u64));
        for (f, s) in &self.face_stats {
            m.push((format!("face{f}.ccn_in"), s.ccn_in));
            m.push((format!("face{f}.ccn_out"), s.ccn_out));
            m.push((format!("face{f}.ip_in"), s.ip_in));
            m.push((format!("face{f}.ip_out"), s.ip_out));
            m.push((format!("face{f}.violations"), s.violations));
        }
        m
    }
}
