//! Builds a simulated world from a [`Config`] and drives workloads on it.

use std::collections::{BTreeMap, VecDeque};
use std::net::IpAddr;
use std::sync::Arc;

use min_core::{Digest, FaceId, HptFibEntry, IdKind, Identifier, IpPrefix};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, ConfigError, GatewayDecl, LinkKind, NodeKind, Workload};
use crate::fetch::{FetchSession, DEFAULT_RTO};
use crate::gateway::tunnel_prefix_of;
use crate::ipnode::{IpFetch, IpNode};
use crate::packet::Frame;
use crate::resolve::Resolution;
use crate::router::{locator_of, DomainInfo, FaceKind, MirNode};
use crate::sim::{LinkSpec, Node, Outbox, Tick, World};

pub enum SimNode {
    Mir(Box<MirNode>),
    Ip(IpNode),
}

impl SimNode {
    pub fn as_mir(&self) -> Option<&MirNode> {
        match self {
            SimNode::Mir(m) => Some(m),
            SimNode::Ip(_) => None,
        }
    }

    pub fn as_mir_mut(&mut self) -> Option<&mut MirNode> {
        match self {
            SimNode::Mir(m) => Some(m),
            SimNode::Ip(_) => None,
        }
    }

    pub fn as_ip(&self) -> Option<&IpNode> {
        match self {
            SimNode::Ip(n) => Some(n),
            SimNode::Mir(_) => None,
        }
    }

    pub fn violations(&self) -> u64 {
        match self {
            SimNode::Mir(m) => m.violations(),
            SimNode::Ip(n) => n.violations(),
        }
    }
}

impl Node for SimNode {
    type Msg = Frame;

    fn on_message(&mut self, now: Tick, face: FaceId, msg: Frame, out: &mut Outbox<Frame>) {
        match self {
            SimNode::Mir(m) => m.on_message(now, face, msg, out),
            SimNode::Ip(n) => n.on_message(now, face, msg, out),
        }
    }

    fn on_tick(&mut self, now: Tick, out: &mut Outbox<Frame>) {
        match self {
            SimNode::Mir(m) => m.on_tick(now, out),
            SimNode::Ip(n) => n.on_tick(now, out),
        }
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        match self {
            SimNode::Mir(m) => m.metrics(),
            SimNode::Ip(n) => n.metrics(),
        }
    }
}

/// Deterministic pseudorandom content.
pub fn pseudorandom(size: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; size];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum FlowKey {
    Ccn(Identifier),
    Ip(usize),
}

#[derive(Debug, Clone)]
struct Flow {
    node: usize,
    target: String,
    key: FlowKey,
}

/// Outcome of one fetch.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub node: String,
    pub target: String,
    pub complete: bool,
    pub failure: Option<String>,
    pub bytes: u64,
    pub start: Tick,
    pub end: Option<Tick>,
    pub digest: Digest,
    pub retransmissions: u64,
}

impl FlowReport {
    /// Goodput in bytes per tick.
    pub fn rate(&self) -> f64 {
        match self.end {
            Some(e) if self.complete => {
                self.bytes as f64 / e.saturating_sub(self.start).max(1) as f64
            }
            _ => 0.0,
        }
    }
}

/// Bytes carried by one link over the run.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkUse {
    pub a: String,
    pub b: String,
    pub capacity: u64,
    pub bytes: [u64; 2],
    /// Busier direction's bytes over capacity × elapsed ticks.
    pub utilization: f64,
    pub peak_tick_bytes: u64,
}

pub struct Network {
    pub world: World<SimNode>,
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    links: Vec<(String, String)>,
    flows: Vec<Flow>,
    sources: BTreeMap<String, Digest>,
}

impl Network {
    pub fn parse(text: &str, seed: u64) -> Result<Self, ConfigError> {
        Self::build(&Config::parse(text)?, seed)
    }

    pub fn build(cfg: &Config, seed: u64) -> Result<Self, ConfigError> {
        let mut world = World::new(seed);
        let mut index = BTreeMap::new();
        let mut names = Vec::new();
        for (k, n) in cfg.nodes.iter().enumerate() {
            let node_seed = seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let node = match n.kind {
                NodeKind::Router => SimNode::Mir(Box::new(MirNode::new(&n.name, node_seed))),
                NodeKind::Gateway => {
                    let mut m = MirNode::new(&n.name, node_seed);
                    m.make_gateway(n.ip.unwrap());
                    SimNode::Mir(Box::new(m))
                }
                NodeKind::Host => SimNode::Ip(IpNode::new(&n.name, n.ip.unwrap(), false)),
                NodeKind::IpRouter => SimNode::Ip(IpNode::new(&n.name, n.ip.unwrap(), true)),
            };
            index.insert(n.name.clone(), world.add_node(node));
            names.push(n.name.clone());
        }
        let mut net = Self {
            world,
            names,
            index,
            links: Vec::new(),
            flows: Vec::new(),
            sources: BTreeMap::new(),
        };
        // (neighbour, face) adjacency per regime.
        let n = cfg.nodes.len();
        let mut ccn: Vec<Vec<(usize, FaceId)>> = vec![Vec::new(); n];
        let mut link_layer: Vec<Vec<(usize, FaceId)>> = vec![Vec::new(); n];
        let mut ip: Vec<Vec<(usize, FaceId)>> = vec![Vec::new(); n];
        for l in &cfg.links {
            let (a, b) = (net.index[&l.a], net.index[&l.b]);
            let spec = LinkSpec {
                loss: l.loss,
                jitter: l.jitter,
                ..LinkSpec::new(a, b, l.capacity, l.latency)
            };
            let (fa, fb) = net.world.add_link(spec);
            net.links.push((l.a.clone(), l.b.clone()));
            let kind = match l.kind {
                LinkKind::LinkLayer => FaceKind::LinkLayer,
                LinkKind::Ip => FaceKind::IpNative,
            };
            for (x, f) in [(a, fa), (b, fb)] {
                if let Some(m) = net.world.node_mut(x).as_mir_mut() {
                    m.set_face(f, kind);
                }
            }
            let adj = match l.kind {
                LinkKind::LinkLayer => {
                    link_layer[a].push((b, fa));
                    link_layer[b].push((a, fb));
                    &mut ccn
                }
                LinkKind::Ip => &mut ip,
            };
            adj[a].push((b, fa));
            adj[b].push((a, fb));
        }
        for g in &cfg.gateways {
            match g {
                GatewayDecl::Tunnel { a, b, .. } => {
                    let (ia, ib) = (net.index[a], net.index[b]);
                    let (ipa, ipb) = (
                        cfg.node(a).unwrap().ip.unwrap(),
                        cfg.node(b).unwrap().ip.unwrap(),
                    );
                    let fa = net.mir_mut(ia).add_tunnel_face(ipb);
                    let fb = net.mir_mut(ib).add_tunnel_face(ipa);
                    ccn[ia].push((ib, fa));
                    ccn[ib].push((ia, fb));
                }
                GatewayDecl::Map { .. } => {}
            }
        }
        net.install_ccn_routes(cfg, &ccn, &link_layer);
        net.install_ip_routes(cfg, &ip);
        net.install_maps(cfg);
        net.install_domains(cfg);
        for d in &cfg.dns {
            let i = net.index[&d.node];
            net.mir_mut(i).dns.insert(d.name.clone(), d.addr);
        }
        for w in &cfg.workloads {
            net.apply(w).map_err(|msg| ConfigError {
                line: 0,
                field: "workload".into(),
                msg,
            })?;
        }
        Ok(net)
    }

    fn mir_mut(&mut self, i: usize) -> &mut MirNode {
        self.world.node_mut(i).as_mir_mut().expect("CCN node")
    }

    /// First-hop face from `s` to every node reachable over `adj`, not
    /// expanding nodes for which `transit` is false.
    fn first_hops(
        adj: &[Vec<(usize, FaceId)>],
        s: usize,
        transit: impl Fn(usize) -> bool,
    ) -> Vec<Option<FaceId>> {
        let mut hop = vec![None; adj.len()];
        let mut seen = vec![false; adj.len()];
        seen[s] = true;
        let mut q = VecDeque::new();
        let mut nbrs = adj[s].clone();
        nbrs.sort_by_key(|&(_, f)| f);
        for (v, f) in nbrs {
            if !seen[v] {
                seen[v] = true;
                hop[v] = Some(f);
                q.push_back(v);
            }
        }
        while let Some(u) = q.pop_front() {
            if !transit(u) {
                continue;
            }
            let mut nbrs = adj[u].clone();
            nbrs.sort_by_key(|&(_, f)| f);
            for (v, _) in nbrs {
                if !seen[v] {
                    seen[v] = true;
                    hop[v] = hop[u];
                    q.push_back(v);
                }
            }
        }
        hop
    }

    fn install_ccn_routes(
        &mut self,
        cfg: &Config,
        ccn: &[Vec<(usize, FaceId)>],
        link_layer: &[Vec<(usize, FaceId)>],
    ) {
        for (s, decl) in cfg.nodes.iter().enumerate() {
            if !decl.kind.is_ccn() {
                continue;
            }
            let hops = Self::first_hops(ccn, s, |_| true);
            let ll = Self::first_hops(link_layer, s, |_| true);
            for (d, target) in cfg.nodes.iter().enumerate() {
                if let Some(f) = hops[d] {
                    self.mir_mut(s)
                        .fib
                        .insert(HptFibEntry::forward(locator_of(&target.name), f));
                }
                if let (Some(f), NodeKind::Gateway) = (ll[d], target.kind) {
                    self.mir_mut(s)
                        .fib
                        .insert(HptFibEntry::forward(tunnel_prefix_of(&target.name), f));
                }
            }
        }
    }

    fn install_ip_routes(&mut self, cfg: &Config, ip: &[Vec<(usize, FaceId)>]) {
        let forwards = |i: usize| cfg.nodes[i].kind == NodeKind::IpRouter;
        let real: Vec<IpAddr> = cfg.nodes.iter().filter_map(|n| n.ip).collect();
        for (s, decl) in cfg.nodes.iter().enumerate() {
            if !decl.kind.is_ip() {
                continue;
            }
            let hops = Self::first_hops(ip, s, forwards);
            let mut entries = Vec::new();
            for (d, target) in cfg.nodes.iter().enumerate() {
                if let (Some(f), Some(addr)) = (hops[d], target.ip) {
                    entries.push(HptFibEntry::forward(Identifier::ip_host(addr), f));
                }
            }
            // Mapped addresses are reachable through their gateway.
            for g in &cfg.gateways {
                if let GatewayDecl::Map { gateway, key, .. } = g {
                    let gi = self.index[gateway];
                    let addr = key.ip_prefix().map(|p| p.addr());
                    if let (Some(f), Some(addr)) = (hops[gi], addr) {
                        if gi != s && !real.contains(&addr) {
                            entries.push(HptFibEntry::forward(key.clone(), f));
                        }
                    }
                }
            }
            if decl.kind == NodeKind::Host {
                if let Some(&(_, f)) = ip[s].iter().min_by_key(|&&(_, f)| f) {
                    let any = match decl.ip.unwrap() {
                        IpAddr::V4(_) => IpPrefix::new("0.0.0.0".parse().unwrap(), 0),
                        IpAddr::V6(_) => IpPrefix::new("::".parse().unwrap(), 0),
                    };
                    entries.push(HptFibEntry::forward(Identifier::ip(any.unwrap()), f));
                }
            }
            let table = match self.world.node_mut(s) {
                SimNode::Mir(m) => &mut m.ip_fib,
                SimNode::Ip(n) => &mut n.routes,
            };
            for e in entries {
                table.insert(e);
            }
        }
    }

    fn install_maps(&mut self, cfg: &Config) {
        for g in &cfg.gateways {
            let GatewayDecl::Map {
                gateway,
                key,
                target,
                ..
            } = g
            else {
                continue;
            };
            let i = self.index[gateway];
            let m = self.mir_mut(i);
            let entry = HptFibEntry::translate(key.clone(), target.clone());
            if key.kind() == IdKind::Ip {
                m.ip_fib.insert(entry);
            } else {
                m.fib.insert(entry);
                let loc = m.locator.clone();
                m.publications
                    .insert(HptFibEntry::translate(key.clone(), loc));
            }
        }
    }

    fn install_domains(&mut self, cfg: &Config) {
        for d in &cfg.domains {
            let children = cfg
                .domains
                .iter()
                .filter(|c| c.parent.as_deref() == Some(&d.node))
                .map(|c| (c.path.clone(), locator_of(&c.node)))
                .collect();
            let info = DomainInfo {
                path: d.path.clone(),
                role: d.role,
                parent: d.parent.as_deref().map(locator_of),
                children,
            };
            let i = self.index[&d.node];
            self.mir_mut(i).domain = Some(info);
        }
    }

    fn apply(&mut self, w: &Workload) -> Result<(), String> {
        match w {
            Workload::Serve {
                node,
                name,
                size,
                seed,
            } => {
                let bytes = pseudorandom(*size, *seed);
                self.serve(node, name, bytes)
            }
            Workload::Fetch {
                node,
                target,
                resource,
                start,
                window,
            } => self
                .fetch(node, target, resource.as_deref(), *start, *window)
                .map(|_| ()),
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mir(&self, name: &str) -> Option<&MirNode> {
        self.world.node(self.index(name)?).as_mir()
    }

    pub fn ip_node(&self, name: &str) -> Option<&IpNode> {
        self.world.node(self.index(name)?).as_ip()
    }

    /// Publishes bytes on a CCN node, or stores a file on an IP host.
    /// Returns the content digest.
    pub fn serve(&mut self, node: &str, name: &str, bytes: Vec<u8>) -> Result<(), String> {
        let i = self
            .index(node)
            .ok_or_else(|| format!("unknown node {node:?}"))?;
        let digest = Digest::of(&bytes);
        let bytes: Arc<[u8]> = bytes.into();
        match self.world.node_mut(i) {
            SimNode::Mir(m) => {
                let id: Identifier = name.parse().map_err(|e| format!("{name}: {e}"))?;
                m.publish_local(id, bytes);
            }
            SimNode::Ip(h) => h.add_file(name, bytes),
        }
        self.sources.insert(format!("{node}:{name}"), digest);
        Ok(())
    }

    /// Digest of what `serve` stored under `node:name`.
    pub fn source_digest(&self, node: &str, name: &str) -> Option<Digest> {
        self.sources.get(&format!("{node}:{name}")).copied()
    }

    /// Starts a fetch; returns the flow id.
    pub fn fetch(
        &mut self,
        node: &str,
        target: &str,
        resource: Option<&str>,
        start: Tick,
        window: usize,
    ) -> Result<usize, String> {
        let i = self
            .index(node)
            .ok_or_else(|| format!("unknown node {node:?}"))?;
        let session = FetchSession::new(start, window, DEFAULT_RTO);
        let key = match self.world.node_mut(i) {
            SimNode::Mir(m) => {
                let id: Identifier = target.parse().map_err(|e| format!("{target}: {e}"))?;
                m.add_fetch(id.clone(), session);
                FlowKey::Ccn(id)
            }
            SimNode::Ip(h) => {
                let server = target
                    .parse()
                    .map_err(|_| format!("bad address {target:?}"))?;
                let resource = resource.ok_or("IP fetches need a resource")?.to_string();
                FlowKey::Ip(h.add_fetch(IpFetch {
                    server,
                    resource,
                    session,
                }))
            }
        };
        let label = match resource {
            Some(r) => format!("{target}/{r}"),
            None => target.to_string(),
        };
        self.flows.push(Flow {
            node: i,
            target: label,
            key,
        });
        Ok(self.flows.len() - 1)
    }

    fn session(&self, f: &Flow) -> &FetchSession {
        match (&f.key, self.world.node(f.node)) {
            (FlowKey::Ccn(id), SimNode::Mir(m)) => m.fetch(id).unwrap(),
            (FlowKey::Ip(k), SimNode::Ip(h)) => &h.fetches()[*k].session,
            _ => unreachable!("flow bound to the wrong node type"),
        }
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn flow(&self, id: usize) -> FlowReport {
        let f = &self.flows[id];
        let s = self.session(f);
        FlowReport {
            node: self.names[f.node].clone(),
            target: f.target.clone(),
            complete: s.is_complete(),
            failure: match s.state() {
                crate::fetch::FetchState::Failed(r) => Some(r.clone()),
                _ => None,
            },
            bytes: s.bytes_received(),
            start: s.start,
            end: s.end,
            digest: s.digest(),
            retransmissions: s.retransmissions,
        }
    }

    pub fn flows_done(&self) -> bool {
        self.flows.iter().all(|f| self.session(f).is_done())
    }

    /// Steps until every flow finishes; false if `max_ticks` ran out.
    pub fn run(&mut self, max_ticks: Tick) -> bool {
        let mut left = max_ticks;
        while left > 0 {
            if self.flows_done() {
                return true;
            }
            // Checking every tick is wasteful on long transfers.
            let chunk = left.min(64);
            for _ in 0..chunk {
                self.world.step();
            }
            left -= chunk;
        }
        self.flows_done()
    }

    /// Resolves `name` from `node` through the domain tree.
    pub fn resolve(
        &mut self,
        node: &str,
        name: &Identifier,
        max_ticks: Tick,
    ) -> Option<Resolution> {
        let i = self.index(node)?;
        self.world.node(i).as_mir()?;
        let q = name.clone();
        let id = self.world.act(i, |n, now, out| {
            n.as_mir_mut().unwrap().start_resolution(now, q, out)
        });
        let done = |w: &World<SimNode>| w.node(i).as_mir().unwrap().resolution(id).is_some();
        self.world.run_until(max_ticks, done);
        self.world.node(i).as_mir().unwrap().resolution(id).cloned()
    }

    pub fn violations(&self) -> u64 {
        self.world.nodes().iter().map(SimNode::violations).sum()
    }

    /// Gateways that translated at least once.
    pub fn translating_gateways(&self) -> Vec<String> {
        self.world
            .nodes()
            .iter()
            .filter_map(SimNode::as_mir)
            .filter(|m| m.is_gateway() && m.counter("translations") > 0)
            .map(|m| m.name.clone())
            .collect()
    }

    pub fn link_usage(&self) -> Vec<LinkUse> {
        let ticks = self.world.now().max(1) as f64;
        (0..self.world.link_count())
            .map(|l| {
                let spec = self.world.link_spec(l);
                let (s0, s1) = (self.world.link_stats(l, 0), self.world.link_stats(l, 1));
                LinkUse {
                    a: self.links[l].0.clone(),
                    b: self.links[l].1.clone(),
                    capacity: spec.capacity,
                    bytes: [s0.bytes, s1.bytes],
                    utilization: s0.bytes.max(s1.bytes) as f64 / (spec.capacity as f64 * ticks),
                    peak_tick_bytes: s0.peak_tick_bytes.max(s1.peak_tick_bytes),
                }
            })
            .collect()
    }

    pub fn metrics_csv(&self) -> String {
        self.world.metrics_csv(&self.names)
    }
}
