//! Discrete-time network simulator.
//!
//! One step is one tick. Each step first transmits queued bytes on every
//! link, then delivers due messages in `(tick, sequence)` order, then gives
//! every node its tick callback. A message is handed to the far end
//! `latency` ticks (plus optional jitter) after its last byte left the
//! queue. With zero jitter delivery order per link direction is FIFO.

use std::collections::{BTreeMap, VecDeque};

use min_core::FaceId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Tick = u64;

/// Anything that can cross a link.
pub trait Wire: Clone {
    fn wire_len(&self) -> usize;
}

/// Messages a node emits during one callback.
#[derive(Debug)]
pub struct Outbox<M> {
    sends: Vec<(FaceId, M)>,
}

impl<M> Default for Outbox<M> {
    fn default() -> Self {
        Self { sends: Vec::new() }
    }
}

impl<M> Outbox<M> {
    pub fn send(&mut self, face: FaceId, msg: M) {
        self.sends.push((face, msg));
    }

    pub fn len(&self) -> usize {
        self.sends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty()
    }

    pub fn drain(&mut self) -> impl Iterator<Item = (FaceId, M)> + '_ {
        self.sends.drain(..)
    }
}

pub trait Node {
    type Msg: Wire;

    fn on_message(&mut self, now: Tick, face: FaceId, msg: Self::Msg, out: &mut Outbox<Self::Msg>);

    fn on_tick(&mut self, _now: Tick, _out: &mut Outbox<Self::Msg>) {}

    /// `(counter, value)` pairs for the metrics dump.
    fn metrics(&self) -> Vec<(String, u64)> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub a: usize,
    pub b: usize,
    /// Bytes per tick, each direction.
    pub capacity: u64,
    pub latency: Tick,
    pub loss: f64,
    /// Extra delay drawn uniformly from `0..=jitter`.
    pub jitter: Tick,
}

impl LinkSpec {
    pub fn new(a: usize, b: usize, capacity: u64, latency: Tick) -> Self {
        Self {
            a,
            b,
            capacity,
            latency,
            loss: 0.0,
            jitter: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirStats {
    pub messages: u64,
    pub bytes: u64,
    /// Largest byte count sent in a single tick.
    pub peak_tick_bytes: u64,
    pub lost: u64,
}

#[derive(Debug)]
struct Direction<M> {
    from: usize,
    to: usize,
    to_face: FaceId,
    queue: VecDeque<(M, u64)>,
    stats: DirStats,
}

impl<M> Direction<M> {
    fn new(from: usize, to: usize, to_face: FaceId) -> Self {
        Self {
            from,
            to,
            to_face,
            queue: VecDeque::new(),
            stats: DirStats::default(),
        }
    }
}

#[derive(Debug)]
struct Link<M> {
    spec: LinkSpec,
    dirs: [Direction<M>; 2],
}

/// Global message counters. `sent == delivered + lost + queued + in_flight`
/// holds between steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    /// Emissions on a face with no link.
    pub unroutable: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: Tick,
    pub from: usize,
    pub to: usize,
    pub bytes: usize,
}

struct Delivery<M> {
    node: usize,
    face: FaceId,
    msg: M,
}

pub struct World<N: Node> {
    now: Tick,
    nodes: Vec<N>,
    /// Per node, face id - 1 → (link, direction used for sending).
    faces: Vec<Vec<(usize, usize)>>,
    links: Vec<Link<N::Msg>>,
    events: BTreeMap<(Tick, u64), Delivery<N::Msg>>,
    seq: u64,
    rng: ChaCha8Rng,
    counters: Counters,
    trace: Option<Vec<TraceEvent>>,
}

impl<N: Node> World<N> {
    pub fn new(seed: u64) -> Self {
        Self {
            now: 0,
            nodes: Vec::new(),
            faces: Vec::new(),
            links: Vec::new(),
            events: BTreeMap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counters: Counters::default(),
            trace: None,
        }
    }

    pub fn add_node(&mut self, node: N) -> usize {
        self.nodes.push(node);
        self.faces.push(Vec::new());
        self.nodes.len() - 1
    }

    /// Connects two nodes; returns the new face on each side.
    pub fn add_link(&mut self, spec: LinkSpec) -> (FaceId, FaceId) {
        assert!(spec.capacity > 0, "link capacity must be positive");
        let l = self.links.len();
        self.faces[spec.a].push((l, 0));
        let fa = FaceId(self.faces[spec.a].len() as u32);
        self.faces[spec.b].push((l, 1));
        let fb = FaceId(self.faces[spec.b].len() as u32);
        self.links.push(Link {
            spec,
            dirs: [
                Direction::new(spec.a, spec.b, fb),
                Direction::new(spec.b, spec.a, fa),
            ],
        });
        (fa, fb)
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn node(&self, i: usize) -> &N {
        &self.nodes[i]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut N {
        &mut self.nodes[i]
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_spec(&self, l: usize) -> &LinkSpec {
        &self.links[l].spec
    }

    /// Stats for link `l`, direction 0 is `a → b`.
    pub fn link_stats(&self, l: usize, dir: usize) -> &DirStats {
        &self.links[l].dirs[dir].stats
    }

    pub fn face_count(&self, node: usize) -> usize {
        self.faces[node].len()
    }

    /// The node on the other side of `face`.
    pub fn peer(&self, node: usize, face: FaceId) -> Option<usize> {
        let &(l, d) = self.faces[node].get((face.0 as usize).checked_sub(1)?)?;
        Some(self.links[l].dirs[d].to)
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn queued(&self) -> u64 {
        self.links
            .iter()
            .flat_map(|l| l.dirs.iter())
            .map(|d| d.queue.len() as u64)
            .sum()
    }

    pub fn in_flight(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn conserved(&self) -> bool {
        let c = self.counters;
        c.sent == c.delivered + c.lost + self.queued() + self.in_flight()
    }

    /// True when nothing is queued or in flight.
    pub fn quiescent(&self) -> bool {
        self.events.is_empty() && self.queued() == 0
    }

    /// Queues `msg` for transmission from `node` out of `face`.
    pub fn send(&mut self, node: usize, face: FaceId, msg: N::Msg) {
        let slot = (face.0 as usize)
            .checked_sub(1)
            .and_then(|i| self.faces[node].get(i));
        match slot {
            Some(&(l, d)) => {
                let len = msg.wire_len().max(1) as u64;
                self.links[l].dirs[d].queue.push_back((msg, len));
                self.counters.sent += 1;
            }
            None => self.counters.unroutable += 1,
        }
    }

    /// Runs `f` against one node outside of message delivery and queues
    /// whatever it emits.
    pub fn act<R>(
        &mut self,
        node: usize,
        f: impl FnOnce(&mut N, Tick, &mut Outbox<N::Msg>) -> R,
    ) -> R {
        let mut out = Outbox::default();
        let r = f(&mut self.nodes[node], self.now, &mut out);
        self.flush(node, &mut out);
        r
    }

    fn flush(&mut self, node: usize, out: &mut Outbox<N::Msg>) {
        for (face, msg) in out.sends.drain(..) {
            self.send(node, face, msg);
        }
    }

    fn transmit(&mut self) {
        let now = self.now;
        for link in &mut self.links {
            let spec = link.spec;
            for dir in &mut link.dirs {
                let mut budget = spec.capacity;
                let mut sent = 0;
                while budget > 0 {
                    let Some(front) = dir.queue.front_mut() else {
                        break;
                    };
                    let take = budget.min(front.1);
                    front.1 -= take;
                    budget -= take;
                    sent += take;
                    if front.1 > 0 {
                        break;
                    }
                    let (msg, _) = dir.queue.pop_front().unwrap();
                    dir.stats.messages += 1;
                    if spec.loss > 0.0 && self.rng.random::<f64>() < spec.loss {
                        dir.stats.lost += 1;
                        self.counters.lost += 1;
                        continue;
                    }
                    let jitter = if spec.jitter > 0 {
                        self.rng.random_range(0..=spec.jitter)
                    } else {
                        0
                    };
                    if let Some(t) = &mut self.trace {
                        t.push(TraceEvent {
                            tick: now,
                            from: dir.from,
                            to: dir.to,
                            bytes: msg.wire_len(),
                        });
                    }
                    self.events.insert(
                        (now + spec.latency + jitter, self.seq),
                        Delivery {
                            node: dir.to,
                            face: dir.to_face,
                            msg,
                        },
                    );
                    self.seq += 1;
                }
                dir.stats.bytes += sent;
                dir.stats.peak_tick_bytes = dir.stats.peak_tick_bytes.max(sent);
            }
        }
    }

    /// Advances the clock by one tick.
    pub fn step(&mut self) {
        self.transmit();
        let mut out = Outbox::default();
        while let Some(entry) = self.events.first_entry() {
            if entry.key().0 > self.now {
                break;
            }
            let d = entry.remove();
            self.counters.delivered += 1;
            self.nodes[d.node].on_message(self.now, d.face, d.msg, &mut out);
            self.flush(d.node, &mut out);
        }
        for i in 0..self.nodes.len() {
            self.nodes[i].on_tick(self.now, &mut out);
            self.flush(i, &mut out);
        }
        self.now += 1;
    }

    /// Steps until `done` holds or `max_ticks` elapse; returns whether
    /// `done` was reached.
    pub fn run_until(&mut self, max_ticks: Tick, mut done: impl FnMut(&Self) -> bool) -> bool {
        let end = self.now + max_ticks;
        while self.now < end {
            if done(self) {
                return true;
            }
            self.step();
        }
        done(self)
    }

    /// CSV metrics: one `scope,name,value` row per counter, nodes first,
    /// then link directions, in index order.
    pub fn metrics_csv(&self, node_names: &[String]) -> String {
        let mut s = String::from("scope,name,value\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = node_names.get(i).cloned().unwrap_or_else(|| i.to_string());
            let mut m = n.metrics();
            m.sort();
            for (k, v) in m {
                s.push_str(&format!("{label},{k},{v}\n"));
            }
        }
        for (l, link) in self.links.iter().enumerate() {
            for (d, dir) in link.dirs.iter().enumerate() {
                let st = &dir.stats;
                let scope = format!("link{l}.{d}");
                s.push_str(&format!("{scope},messages,{}\n", st.messages));
                s.push_str(&format!("{scope},bytes,{}\n", st.bytes));
                s.push_str(&format!("{scope},peak_tick_bytes,{}\n", st.peak_tick_bytes));
                s.push_str(&format!("{scope},lost,{}\n", st.lost));
            }
        }
        let c = self.counters;
        s.push_str(&format!("world,ticks,{}\n", self.now));
        s.push_str(&format!("world,sent,{}\n", c.sent));
        s.push_str(&format!("world,delivered,{}\n", c.delivered));
        s.push_str(&format!("world,lost,{}\n", c.lost));
        s
    }
}
