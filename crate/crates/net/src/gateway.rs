//! IP/CCN interworking on gateway routers.
//!
//! A gateway's `ip_fib` holds both IP routes (`Forward`) and address
//! mappings (`Translate`). An address translated to a name under
//! `/mintun` is tunnelled: each datagram rides in an Interest to the peer
//! gateway, which replays it on its IP side and returns the matching reply
//! datagram as Data. Any other content target makes the gateway a content
//! proxy that answers IP requests from CCN. In the other direction a
//! content prefix translated to an IP host turns Interests into IP
//! requests. Peer gateways can also exchange raw CCN packets over UDP.
//!
//! Gateways never forward IP datagrams they cannot translate.

use std::net::IpAddr;

use min_core::{FaceId, FibAction, IdKind, Identifier};
use rustc_hash::{FxHashMap, FxHashSet};

use crate::packet::{
    decap_interest, encap_ip_in_interest, parse_segment, AppMsg, Data, Frame, Interest, NackReason,
    Packet, Proto, SimIpDatagram,
};
use crate::router::{FaceKind, MirNode, APP, TUNNEL_FACE_BASE};
use crate::sim::{Outbox, Tick};

pub fn tunnel_prefix_of(gateway: &str) -> Identifier {
    Identifier::content(["mintun", gateway]).expect("node names are valid labels")
}

fn is_tunnel_name(name: &Identifier) -> bool {
    name.components().first().is_some_and(|c| c == "mintun")
}

#[derive(Debug, Clone)]
struct ProxyWait {
    client: IpAddr,
    vaddr: IpAddr,
    seq: u64,
    resource: String,
    seg: u64,
}

pub(crate) struct Gateway {
    pub tunnel_prefix: Identifier,
    ingress: FxHashSet<Identifier>,
    egress: FxHashMap<(IpAddr, IpAddr, u64), Identifier>,
    proxy: FxHashMap<Identifier, ProxyWait>,
    upstream: FxHashMap<u64, Identifier>,
    tunnels: FxHashMap<IpAddr, FaceId>,
    next_seq: u64,
}

impl MirNode {
    pub fn make_gateway(&mut self, ip: IpAddr) {
        self.ip = Some(ip);
        self.gw = Some(Gateway {
            tunnel_prefix: tunnel_prefix_of(&self.name),
            ingress: FxHashSet::default(),
            egress: FxHashMap::default(),
            proxy: FxHashMap::default(),
            upstream: FxHashMap::default(),
            tunnels: FxHashMap::default(),
            next_seq: 0,
        });
    }

    pub fn is_gateway(&self) -> bool {
        self.gw.is_some()
    }

    /// Adds a CCN-over-UDP face to the gateway at `peer`.
    pub fn add_tunnel_face(&mut self, peer: IpAddr) -> FaceId {
        let gw = self.gw.as_mut().expect("tunnel faces need a gateway");
        let face = FaceId(TUNNEL_FACE_BASE + gw.tunnels.len() as u32);
        gw.tunnels.insert(peer, face);
        self.set_face(face, FaceKind::IpUdp { peer });
        face
    }

    fn translated(&mut self) {
        self.bump("translations");
    }

    fn next_seq(&mut self) -> u64 {
        let gw = self.gw.as_mut().unwrap();
        gw.next_seq += 1;
        gw.next_seq
    }

    /// Routes a datagram originated or relayed by this gateway.
    pub(crate) fn send_ip(&mut self, d: SimIpDatagram, out: &mut Outbox<Frame>) {
        let dst = Identifier::ip_host(d.dst);
        match self.ip_fib.longest_prefix_match(&dst).map(|e| e.action) {
            Some(FibAction::Forward(f)) => match self.faces.get(&f) {
                Some(FaceKind::IpNative) => {
                    self.face_stats.get_mut(&f).unwrap().ip_out += 1;
                    out.send(f, Frame::Ip(d));
                }
                _ => self.face_stats.entry(f).or_default().violations += 1,
            },
            _ => self.bump("ip_dropped"),
        }
    }

    pub(crate) fn send_udp(
        &mut self,
        _now: Tick,
        face: FaceId,
        peer: IpAddr,
        p: Packet,
        out: &mut Outbox<Frame>,
    ) {
        let Some(src) = self.ip else { return };
        self.face_stats.get_mut(&face).unwrap().ccn_out += 1;
        self.translated();
        let seq = self.next_seq();
        let d = SimIpDatagram {
            src,
            dst: peer,
            proto: Proto::Udp,
            seq,
            payload: p.encode(),
        };
        self.send_ip(d, out);
    }

    pub(crate) fn on_datagram(
        &mut self,
        now: Tick,
        _face: FaceId,
        d: SimIpDatagram,
        out: &mut Outbox<Frame>,
    ) {
        if self.gw.is_none() {
            self.bump("ip_dropped");
            return;
        }
        if Some(d.dst) == self.ip {
            return self.ip_local(now, d, out);
        }
        let key = (d.dst, d.src, d.seq);
        if let Some(name) = self.gw.as_mut().unwrap().egress.remove(&key) {
            self.translated();
            let data = Data::signed(name, d.encode().into(), None, &self.key);
            return self.emit_data(now, data, out);
        }
        let dst = Identifier::ip_host(d.dst);
        let target = match self.ip_fib.longest_prefix_match(&dst).map(|e| e.action) {
            Some(FibAction::Translate(t)) => *t,
            _ => {
                self.bump("ip_dropped");
                return;
            }
        };
        self.translated();
        if is_tunnel_name(&target) {
            let i = encap_ip_in_interest(&d, &target, self.nonce());
            self.gw.as_mut().unwrap().ingress.insert(i.name.clone());
            return self.on_interest(now, APP, i, out);
        }
        let Ok(AppMsg::Request { resource, seg }) = AppMsg::decode(&d.payload) else {
            self.bump("ip_dropped");
            return;
        };
        let labels: Vec<String> = resource.split('/').map(str::to_string).collect();
        let Ok(name) = target
            .join(&labels)
            .and_then(|n| n.child(format!("s{seg}")))
        else {
            return self.ip_reply(d.dst, d.src, d.seq, AppMsg::Missing { resource }, out);
        };
        let wait = ProxyWait {
            client: d.src,
            vaddr: d.dst,
            seq: d.seq,
            resource,
            seg,
        };
        self.gw.as_mut().unwrap().proxy.insert(name.clone(), wait);
        let i = Interest::new(name, self.nonce());
        self.on_interest(now, APP, i, out);
    }

    fn ip_reply(
        &mut self,
        src: IpAddr,
        dst: IpAddr,
        seq: u64,
        msg: AppMsg,
        out: &mut Outbox<Frame>,
    ) {
        let d = SimIpDatagram {
            src,
            dst,
            proto: Proto::Tcp,
            seq,
            payload: msg.encode(),
        };
        self.send_ip(d, out);
    }

    /// Datagrams addressed to the gateway itself: tunnelled CCN from a
    /// peer, or server replies to requests this gateway made.
    fn ip_local(&mut self, now: Tick, d: SimIpDatagram, out: &mut Outbox<Frame>) {
        let tunnel = self.gw.as_ref().unwrap().tunnels.get(&d.src).copied();
        if let (Proto::Udp, Some(face)) = (d.proto, tunnel) {
            match Packet::decode(&d.payload) {
                Ok(p) => {
                    self.translated();
                    self.face_stats.get_mut(&face).unwrap().ccn_in += 1;
                    self.on_packet(now, face, p, out);
                }
                Err(_) => self.bump("ip_dropped"),
            }
            return;
        }
        let Some(name) = self.gw.as_mut().unwrap().upstream.remove(&d.seq) else {
            self.bump("ip_dropped");
            return;
        };
        match AppMsg::decode(&d.payload) {
            Ok(AppMsg::Segment { bytes, last, .. }) => {
                let data = Data::signed(name, bytes.into(), Some(last), &self.key);
                self.emit_data(now, data, out);
            }
            _ => self.reject(now, &name, NackReason::NotFound, out),
        }
    }

    /// Tunnel egress: replays the carried datagram on the IP side.
    pub(crate) fn tunnel_egress(&mut self, now: Tick, i: Interest, out: &mut Outbox<Frame>) {
        let Ok(d) = decap_interest(&i) else {
            return self.reject(now, &i.name, NackReason::NotFound, out);
        };
        self.translated();
        self.gw
            .as_mut()
            .unwrap()
            .egress
            .insert((d.src, d.dst, d.seq), i.name);
        self.send_ip(d, out);
    }

    /// Turns an Interest for a mapped content prefix into an IP request.
    pub(crate) fn ccn_to_ip(&mut self, now: Tick, i: Interest, out: &mut Outbox<Frame>) {
        let Some(entry) = self.fib.longest_prefix_match(&i.name) else {
            return self.reject(now, &i.name, NackReason::NoRoute, out);
        };
        let FibAction::Translate(target) = entry.action else {
            unreachable!()
        };
        let (Some(src), Some(p)) = (self.ip, target.ip_prefix()) else {
            return self.reject(now, &i.name, NackReason::NoRoute, out);
        };
        let (rest, seg) = match parse_segment(&i.name) {
            Some((base, k)) if base.depth() > entry.key.depth() => (base, k),
            _ => (i.name.clone(), 0),
        };
        let resource = rest.components()[entry.key.depth()..].join("/");
        if resource.is_empty() {
            return self.reject(now, &i.name, NackReason::NotFound, out);
        }
        self.translated();
        let seq = self.next_seq();
        self.gw.as_mut().unwrap().upstream.insert(seq, i.name);
        let d = SimIpDatagram {
            src,
            dst: p.addr(),
            proto: Proto::Tcp,
            seq,
            payload: AppMsg::Request { resource, seg }.encode(),
        };
        self.send_ip(d, out);
    }

    /// Packets delivered to the APP face of a gateway. Returns false when
    /// they belong to someone else.
    pub(crate) fn gateway_app(&mut self, _now: Tick, p: &Packet, out: &mut Outbox<Frame>) -> bool {
        let name = p.name();
        let gw = self.gw.as_mut().unwrap();
        if gw.ingress.remove(name) {
            if let Packet::Data(d) = p {
                if let Ok(reply) = SimIpDatagram::decode(&d.payload) {
                    self.translated();
                    self.send_ip(reply, out);
                }
            }
            return true;
        }
        let Some(w) = gw.proxy.remove(name) else {
            return false;
        };
        let msg = match p {
            Packet::Data(d) => AppMsg::Segment {
                resource: w.resource,
                seg: w.seg,
                last: d.final_segment.unwrap_or(w.seg),
                bytes: d.payload.to_vec(),
            },
            _ => AppMsg::Missing {
                resource: w.resource,
            },
        };
        self.translated();
        self.ip_reply(w.vaddr, w.client, w.seq, msg, out);
        true
    }
}

/// Kind check for identifiers used as IP map keys.
pub fn is_ip(id: &Identifier) -> bool {
    id.kind() == IdKind::Ip
}
