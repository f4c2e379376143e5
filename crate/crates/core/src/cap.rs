//! Partition-tolerance analysis.
//!
//! Edges fail independently with probability `p`. A failure state is
//! *consensus-capable* when some connected component of the surviving graph
//! holds strictly more than the quorum fraction of participants.
//!
//! The minimum repair time of a failing state is the smallest number of
//! failed edges whose restoration makes the state capable again. Reports
//! give its mean conditioned on failure; it is zero when nothing fails and
//! infinite when even the intact graph lacks quorum.
//!
//! Hierarchical topologies compose under conjunctive liveness: every level
//! must be capable on its own edges and the levels must stay connected
//! through the inter-level edges.
//!
//! Text format:
//!
//! ```text
//! level 0
//! node 1 participant
//! node 2 relay
//! edge 1 2 0.05
//! ```
//!
//! `level` is optional; nodes before the first directive are in level 0.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use thiserror::Error;

use crate::scalar::Scalar;

pub type NodeId = u32;

/// Largest node count for which repair search is supported.
pub const MAX_NODES: usize = 128;
/// Largest edge count for exact enumeration.
pub const MAX_EXACT_EDGES: usize = 24;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CapError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("probability {0} out of [0, 1]")]
    BadProbability(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("{0} edges exceed the exact enumeration limit")]
    TooManyEdges(usize),
    #[error("{0} nodes exceed the supported size")]
    TooManyNodes(usize),
    #[error("node {0} belongs to more than one sub-topology")]
    OverlappingSubtopologies(NodeId),
    #[error("no levels to compose")]
    NoLevels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Participant,
    Relay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<S> {
    pub a: usize,
    pub b: usize,
    pub p_fail: S,
}

/// Consensus needs strictly more than `num/den` of all participants in one
/// component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuorumRule {
    pub num: u32,
    pub den: u32,
}

impl QuorumRule {
    pub const POV: QuorumRule = QuorumRule { num: 1, den: 2 };

    pub fn met(&self, have: usize, total: usize) -> bool {
        have as u64 * self.den as u64 > self.num as u64 * total as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology<S> {
    ids: Vec<NodeId>,
    roles: Vec<Role>,
    levels: Vec<u32>,
    edges: Vec<Edge<S>>,
    index: BTreeMap<NodeId, usize>,
}

impl<S: Scalar> Default for Topology<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Topology<S> {
    pub fn new() -> Self {
        Self {
            ids: Vec::new(),
            roles: Vec::new(),
            levels: Vec::new(),
            edges: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add_node(&mut self, id: NodeId, role: Role) -> Result<usize, CapError> {
        self.add_node_at(id, role, 0)
    }

    pub fn add_node_at(&mut self, id: NodeId, role: Role, level: u32) -> Result<usize, CapError> {
        if self.index.contains_key(&id) {
            return Err(CapError::DuplicateNode(id));
        }
        let i = self.ids.len();
        self.ids.push(id);
        self.roles.push(role);
        self.levels.push(level);
        self.index.insert(id, i);
        Ok(i)
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId, p_fail: S) -> Result<(), CapError> {
        if !(p_fail >= S::zero() && p_fail <= S::one()) {
            return Err(CapError::BadProbability(p_fail.to_string()));
        }
        let ia = *self.index.get(&a).ok_or(CapError::UnknownNode(a))?;
        let ib = *self.index.get(&b).ok_or(CapError::UnknownNode(b))?;
        self.edges.push(Edge {
            a: ia,
            b: ib,
            p_fail,
        });
        Ok(())
    }

    /// `n` participants in a cycle, every edge failing with `p`.
    pub fn ring(n: u32, p: S) -> Self {
        let mut t = Self::new();
        for i in 0..n {
            t.add_node(i, Role::Participant).unwrap();
        }
        for i in 0..n {
            t.add_edge(i, (i + 1) % n, p).unwrap();
        }
        t
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }

    pub fn node_id(&self, i: usize) -> NodeId {
        self.ids[i]
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn participants(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| **r == Role::Participant)
            .count()
    }

    pub fn set_p_fail(&mut self, edge: usize, p: S) {
        self.edges[edge].p_fail = p;
    }

    pub fn parse(text: &str) -> Result<Self, CapError> {
        let mut t = Self::new();
        let mut level = 0;
        for (i, line) in text.lines().enumerate() {
            let err = |msg: &str| CapError::Syntax {
                line: i + 1,
                msg: msg.to_string(),
            };
            let num = |s: &str| s.parse::<u32>().map_err(|_| err("bad number"));
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                [w, ..] if w.starts_with('#') => {}
                ["level", n] => level = num(n)?,
                ["node", id, role] => {
                    let role = match *role {
                        "participant" => Role::Participant,
                        "relay" => Role::Relay,
                        _ => return Err(err("role must be participant or relay")),
                    };
                    t.add_node_at(num(id)?, role, level)?;
                }
                ["edge", a, b, p] => {
                    let p: f64 = p.parse().map_err(|_| err("bad probability"))?;
                    t.add_edge(num(a)?, num(b)?, S::lit(p))?;
                }
                _ => return Err(err("unrecognized directive")),
            }
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut level = 0;
        for i in 0..self.ids.len() {
            if self.levels[i] != level {
                level = self.levels[i];
                s.push_str(&format!("level {level}\n"));
            }
            let role = match self.roles[i] {
                Role::Participant => "participant",
                Role::Relay => "relay",
            };
            s.push_str(&format!("node {} {role}\n", self.ids[i]));
        }
        for e in &self.edges {
            s.push_str(&format!(
                "edge {} {} {}\n",
                self.ids[e.a], self.ids[e.b], e.p_fail
            ));
        }
        s
    }

    /// Splits along `level` directives into sub-topologies and the edges
    /// that join them.
    pub fn split_levels(&self) -> (Vec<Topology<S>>, Vec<InterLevelEdge<S>>) {
        let mut levels: BTreeMap<u32, Topology<S>> = BTreeMap::new();
        for i in 0..self.ids.len() {
            levels
                .entry(self.levels[i])
                .or_default()
                .add_node_at(self.ids[i], self.roles[i], self.levels[i])
                .unwrap();
        }
        let mut inter = Vec::new();
        for e in &self.edges {
            let (a, b) = (self.ids[e.a], self.ids[e.b]);
            if self.levels[e.a] == self.levels[e.b] {
                levels
                    .get_mut(&self.levels[e.a])
                    .unwrap()
                    .add_edge(a, b, e.p_fail)
                    .unwrap();
            } else {
                inter.push(InterLevelEdge {
                    a,
                    b,
                    p_fail: e.p_fail,
                });
            }
        }
        (levels.into_values().collect(), inter)
    }

    fn check_size(&self) -> Result<(), CapError> {
        if self.ids.len() > MAX_NODES {
            return Err(CapError::TooManyNodes(self.ids.len()));
        }
        Ok(())
    }
}

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i as u32;
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let g = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = g;
            x = g;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
}

/// Reusable scratch space for evaluating failure states.
struct Evaluator<'a, S> {
    topo: &'a Topology<S>,
    rule: QuorumRule,
    total: usize,
    dsu: Dsu,
    comp: Vec<usize>,
    weight: Vec<usize>,
}

impl<'a, S: Scalar> Evaluator<'a, S> {
    fn new(topo: &'a Topology<S>, rule: QuorumRule) -> Self {
        let n = topo.node_count();
        Self {
            topo,
            rule,
            total: topo.participants(),
            dsu: Dsu::new(n),
            comp: vec![0; n],
            weight: Vec::with_capacity(n),
        }
    }

    /// Labels components of the surviving graph; returns their count.
    fn label(&mut self, failed: &[bool]) -> usize {
        self.dsu.reset();
        for (e, f) in self.topo.edges.iter().zip(failed) {
            if !f {
                self.dsu.union(e.a as u32, e.b as u32);
            }
        }
        self.weight.clear();
        let mut root_comp: Vec<usize> = vec![usize::MAX; self.comp.len()];
        for i in 0..self.comp.len() {
            let r = self.dsu.find(i as u32) as usize;
            if root_comp[r] == usize::MAX {
                root_comp[r] = self.weight.len();
                self.weight.push(0);
            }
            let c = root_comp[r];
            self.comp[i] = c;
            if self.topo.roles[i] == Role::Participant {
                self.weight[c] += 1;
            }
        }
        self.weight.len()
    }

    fn capable(&mut self, failed: &[bool]) -> bool {
        self.label(failed);
        let max = self.weight.iter().copied().max().unwrap_or(0);
        self.rule.met(max, self.total)
    }

    /// Fewest failed edges to restore for quorum; `None` if impossible.
    fn min_repair(&mut self, failed: &[bool]) -> Option<u32> {
        let c = self.label(failed);
        if self.weight.iter().any(|&w| self.rule.met(w, self.total)) {
            return Some(0);
        }
        assert!(c <= MAX_NODES, "topology too large for repair search");
        let mut adj = vec![0u128; c];
        for (e, f) in self.topo.edges.iter().zip(failed) {
            let (x, y) = (self.comp[e.a], self.comp[e.b]);
            if *f && x != y {
                adj[x] |= 1 << y;
                adj[y] |= 1 << x;
            }
        }
        let weight_of = |mask: u128| -> usize {
            let mut m = mask;
            let mut w = 0;
            while m != 0 {
                w += self.weight[m.trailing_zeros() as usize];
                m &= m - 1;
            }
            w
        };
        // connected component sets, grown one neighbouring component at a time
        let mut level: FxHashSet<u128> = (0..c).map(|i| 1u128 << i).collect();
        let mut k = 0;
        while !level.is_empty() {
            k += 1;
            let mut next = FxHashSet::default();
            for &set in &level {
                let mut nb = 0u128;
                let mut m = set;
                while m != 0 {
                    nb |= adj[m.trailing_zeros() as usize];
                    m &= m - 1;
                }
                nb &= !set;
                while nb != 0 {
                    let grown = set | 1 << nb.trailing_zeros();
                    nb &= nb - 1;
                    if next.insert(grown) && self.rule.met(weight_of(grown), self.total) {
                        return Some(k);
                    }
                }
            }
            level = next;
        }
        None
    }
}

pub fn is_consensus_capable<S: Scalar>(
    topo: &Topology<S>,
    failed: &[bool],
    rule: QuorumRule,
) -> bool {
    Evaluator::new(topo, rule).capable(failed)
}

/// Fewest failed edges whose restoration re-achieves quorum.
pub fn min_repair<S: Scalar>(topo: &Topology<S>, failed: &[bool], rule: QuorumRule) -> Option<u32> {
    Evaluator::new(topo, rule).min_repair(failed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionReport<S> {
    pub tolerance_probability: S,
    /// Mean minimum repair (edges) given quorum loss.
    pub avg_min_repair_time: S,
    /// Number of samples, or of enumerated states for exact reports.
    pub sample_count: u64,
    /// 95% confidence half-width of the tolerance; zero when exact.
    pub half_width: S,
}

impl<S: Scalar> PartitionReport<S> {
    pub const CSV_HEADER: &'static str = "tolerance,half_width,avg_min_repair,samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.tolerance_probability,
            self.half_width,
            self.avg_min_repair_time,
            self.sample_count
        )
    }

    fn from_counts(ok: u64, fails: u64, repair_sum: u64, n: u64, unrepairable: bool) -> Self {
        let t = ok as f64 / n as f64;
        let repair = if fails == 0 {
            0.0
        } else if unrepairable {
            f64::INFINITY
        } else {
            repair_sum as f64 / fails as f64
        };
        Self {
            tolerance_probability: S::lit(t),
            avg_min_repair_time: S::lit(repair),
            sample_count: n,
            half_width: S::lit(1.96 * (t * (1.0 - t) / n as f64).sqrt()),
        }
    }
}

impl<S: Scalar> fmt::Display for PartitionReport<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "partition tolerance {:.6} ± {:.6} over {} states; mean minimum repair {:.4} edges",
            self.tolerance_probability,
            self.half_width,
            self.sample_count,
            self.avg_min_repair_time
        )
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    ok: u64,
    fails: u64,
    repair_sum: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            ok: self.ok + o.ok,
            fails: self.fails + o.fails,
            repair_sum: self.repair_sum + o.repair_sum,
        }
    }
}

/// Draws one failure state. Every edge consumes one uniform, so states
/// drawn for different `p` under the same seed are coupled.
fn draw<S: Scalar>(rng: &mut ChaCha8Rng, edges: &[Edge<S>], out: &mut [bool]) {
    for (e, f) in edges.iter().zip(out.iter_mut()) {
        let u: f64 = rng.random();
        *f = u < e.p_fail.as_f64();
    }
}

fn sample_chunks<S, C, I, F>(
    topo: &Topology<S>,
    samples: u64,
    seed: u64,
    init: I,
    per_state: F,
) -> Tally
where
    S: Scalar,
    I: Fn() -> C + Sync,
    F: Fn(&mut C, &[bool]) -> Tally + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ci);
            let n = CHUNK.min(samples - ci * CHUNK);
            let mut failed = vec![false; topo.edges.len()];
            let mut state = init();
            let mut t = Tally::default();
            for _ in 0..n {
                draw(&mut rng, &topo.edges, &mut failed);
                t = t.merge(per_state(&mut state, &failed));
            }
            t
        })
        .reduce(Tally::default, Tally::merge)
}

/// Monte-Carlo estimate over `samples` failure states.
pub fn estimate_tolerance<S: Scalar>(
    topo: &Topology<S>,
    rule: QuorumRule,
    samples: u64,
    seed: u64,
) -> Result<PartitionReport<S>, CapError> {
    assert!(samples >= 1, "need at least one sample");
    topo.check_size()?;
    let intact_ok = is_consensus_capable(topo, &vec![false; topo.edges.len()], rule);
    let init = || Evaluator::new(topo, rule);
    let tally = sample_chunks(topo, samples, seed, init, |ev, failed| {
        if ev.capable(failed) {
            Tally {
                ok: 1,
                ..Tally::default()
            }
        } else {
            let r = if intact_ok {
                ev.min_repair(failed).unwrap_or(0)
            } else {
                0
            };
            Tally {
                ok: 0,
                fails: 1,
                repair_sum: r as u64,
            }
        }
    });
    Ok(PartitionReport::from_counts(
        tally.ok,
        tally.fails,
        tally.repair_sum,
        samples,
        !intact_ok,
    ))
}

fn for_each_state<S: Scalar>(
    topo: &Topology<S>,
    mut f: impl FnMut(u64, &[bool]),
) -> Result<(), CapError> {
    let m = topo.edges.len();
    if m > MAX_EXACT_EDGES {
        return Err(CapError::TooManyEdges(m));
    }
    topo.check_size()?;
    let mut failed = vec![false; m];
    for mask in 0u64..1 << m {
        for (i, f) in failed.iter_mut().enumerate() {
            *f = mask >> i & 1 == 1;
        }
        f(mask, &failed);
    }
    Ok(())
}

/// Exact report by enumerating all `2^|E|` failure states.
pub fn exact_tolerance<S: Scalar>(
    topo: &Topology<S>,
    rule: QuorumRule,
) -> Result<PartitionReport<S>, CapError> {
    let mut ev = Evaluator::new(topo, rule);
    let intact_ok = ev.capable(&vec![false; topo.edges.len()]);
    let (mut tol, mut fail_p, mut repair) = (S::zero(), S::zero(), S::zero());
    let mut states = 0;
    for_each_state(topo, |_, failed| {
        states += 1;
        let p: S = topo
            .edges
            .iter()
            .zip(failed)
            .map(|(e, &f)| if f { e.p_fail } else { S::one() - e.p_fail })
            .fold(S::one(), |a, b| a * b);
        if ev.capable(failed) {
            tol = tol + p;
        } else {
            fail_p = fail_p + p;
            if let Some(r) = ev.min_repair(failed) {
                repair = repair + p * S::lit(r as f64);
            }
        }
    })?;
    let avg = if fail_p == S::zero() {
        S::zero()
    } else if !intact_ok {
        S::infinity()
    } else {
        repair / fail_p
    };
    Ok(PartitionReport {
        tolerance_probability: tol,
        avg_min_repair_time: avg,
        sample_count: states,
        half_width: S::zero(),
    })
}

/// Exact tolerance and conditional mean repair in rational arithmetic.
/// Probabilities are converted from their binary floating-point values
/// without rounding. Repair is `None` when no state fails or the intact
/// graph lacks quorum.
pub fn exact_tolerance_rational<S: Scalar>(
    topo: &Topology<S>,
    rule: QuorumRule,
) -> Result<(BigRational, Option<BigRational>), CapError> {
    let probs: Vec<BigRational> = topo
        .edges
        .iter()
        .map(|e| BigRational::from_float(e.p_fail.as_f64()).expect("finite probability"))
        .collect();
    let one = BigRational::one();
    let mut ev = Evaluator::new(topo, rule);
    let intact_ok = ev.capable(&vec![false; topo.edges.len()]);
    let (mut tol, mut fail_p, mut repair) = (
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
    );
    for_each_state(topo, |_, failed| {
        let mut p = one.clone();
        for (q, &f) in probs.iter().zip(failed) {
            p *= if f { q.clone() } else { &one - q };
        }
        if ev.capable(failed) {
            tol += p;
        } else {
            if let Some(r) = ev.min_repair(failed) {
                repair += &p * BigRational::from_integer(BigInt::from(r));
            }
            fail_p += p;
        }
    })?;
    let avg = (intact_ok && !fail_p.is_zero()).then(|| repair / fail_p);
    Ok((tol, avg))
}

/// A sub-topology's report together with the nodes it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport<S> {
    pub nodes: Vec<NodeId>,
    pub report: PartitionReport<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterLevelEdge<S> {
    pub a: NodeId,
    pub b: NodeId,
    pub p_fail: S,
}

fn level_index<S: Scalar>(
    levels: &[Vec<NodeId>],
    inter: &[InterLevelEdge<S>],
) -> Result<Vec<(usize, usize)>, CapError> {
    let mut owner = BTreeMap::new();
    for (li, nodes) in levels.iter().enumerate() {
        for &n in nodes {
            if owner.insert(n, li).is_some() {
                return Err(CapError::OverlappingSubtopologies(n));
            }
        }
    }
    inter
        .iter()
        .map(|e| {
            let a = *owner.get(&e.a).ok_or(CapError::UnknownNode(e.a))?;
            let b = *owner.get(&e.b).ok_or(CapError::UnknownNode(e.b))?;
            Ok((a, b))
        })
        .collect()
}

/// Components of the level graph left after `failed` inter-level edges.
fn quotient_components(n: usize, ends: &[(usize, usize)], failed: &[bool]) -> usize {
    let mut dsu = Dsu::new(n);
    for (&(a, b), f) in ends.iter().zip(failed) {
        if !f {
            dsu.union(a as u32, b as u32);
        }
    }
    (0..n as u32).filter(|&i| dsu.find(i) == i).count()
}

/// Combines per-level reports over the quotient graph whose vertices are
/// levels. Exact when levels are edge-disjoint and liveness is conjunctive.
pub fn compose_hierarchical<S: Scalar>(
    levels: &[LevelReport<S>],
    inter: &[InterLevelEdge<S>],
) -> Result<PartitionReport<S>, CapError> {
    if levels.is_empty() {
        return Err(CapError::NoLevels);
    }
    let nodes: Vec<Vec<NodeId>> = levels.iter().map(|l| l.nodes.clone()).collect();
    let ends = level_index(&nodes, inter)?;
    if inter.len() > MAX_EXACT_EDGES {
        return Err(CapError::TooManyEdges(inter.len()));
    }
    let k = levels.len();
    // quotient connectivity and its expected repair, exactly
    let (mut q_ok, mut q_repair) = (S::zero(), S::zero());
    let mut failed = vec![false; inter.len()];
    for mask in 0u64..1 << inter.len() {
        for (i, f) in failed.iter_mut().enumerate() {
            *f = mask >> i & 1 == 1;
        }
        let p = inter
            .iter()
            .zip(&failed)
            .map(|(e, &f)| if f { e.p_fail } else { S::one() - e.p_fail })
            .fold(S::one(), |a, b| a * b);
        let comps = quotient_components(k, &ends, &failed);
        if comps == 1 {
            q_ok = q_ok + p;
        } else {
            q_repair = q_repair + p * S::lit((comps - 1) as f64);
        }
    }
    let t_levels = levels
        .iter()
        .map(|l| l.report.tolerance_probability)
        .fold(S::one(), |a, b| a * b);
    let tol = t_levels * q_ok;
    let mut expected_repair = q_repair;
    for l in levels {
        let r = &l.report;
        if r.tolerance_probability < S::one() {
            expected_repair =
                expected_repair + (S::one() - r.tolerance_probability) * r.avg_min_repair_time;
        }
    }
    let fail = S::one() - tol;
    let avg = if fail <= S::zero() {
        S::zero()
    } else {
        expected_repair / fail
    };
    // delta method on the product of independent estimates
    let rel: S = levels
        .iter()
        .filter(|l| l.report.tolerance_probability > S::zero())
        .map(|l| {
            let x = l.report.half_width / l.report.tolerance_probability;
            x * x
        })
        .sum();
    let half_width = if tol > S::zero() {
        tol * rel.sqrt()
    } else {
        levels
            .iter()
            .map(|l| l.report.half_width)
            .fold(S::zero(), S::max)
    };
    let sample_count = levels
        .iter()
        .map(|l| l.report.sample_count)
        .min()
        .unwrap_or(0);
    Ok(PartitionReport {
        tolerance_probability: tol,
        avg_min_repair_time: avg,
        sample_count,
        half_width,
    })
}

/// Runs [`estimate_tolerance`] on every level and composes the results.
pub fn estimate_hierarchical<S: Scalar>(
    topo: &Topology<S>,
    rule: QuorumRule,
    samples: u64,
    seed: u64,
) -> Result<PartitionReport<S>, CapError> {
    let (subs, inter) = topo.split_levels();
    let levels = subs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(LevelReport {
                nodes: t.ids.clone(),
                report: estimate_tolerance(t, rule, samples, seed.wrapping_add(i as u64))?,
            })
        })
        .collect::<Result<Vec<_>, CapError>>()?;
    compose_hierarchical(&levels, &inter)
}

/// Monte-Carlo over the whole graph with the conjunctive predicate: each
/// level capable on its own edges and all levels joined by surviving
/// inter-level edges.
pub fn estimate_flat_conjunctive<S: Scalar>(
    topo: &Topology<S>,
    rule: QuorumRule,
    samples: u64,
    seed: u64,
) -> Result<PartitionReport<S>, CapError> {
    topo.check_size()?;
    let (subs, _) = topo.split_levels();
    let level_ids: Vec<u32> = {
        let mut v = topo.levels.clone();
        v.sort_unstable();
        v.dedup();
        v
    };
    let pos = |l: u32| level_ids.binary_search(&l).unwrap();
    // edge routing: (level, index within level) or inter-level endpoints
    let mut intra: Vec<Vec<usize>> = vec![Vec::new(); subs.len()];
    let mut inter: Vec<(usize, (usize, usize))> = Vec::new();
    for (i, e) in topo.edges.iter().enumerate() {
        let (la, lb) = (pos(topo.levels[e.a]), pos(topo.levels[e.b]));
        if la == lb {
            intra[la].push(i);
        } else {
            inter.push((i, (la, lb)));
        }
    }
    let ends: Vec<(usize, usize)> = inter.iter().map(|x| x.1).collect();
    let init = || {
        subs.iter()
            .map(|s| Evaluator::new(s, rule))
            .collect::<Vec<_>>()
    };
    let tally = sample_chunks(topo, samples, seed, init, |evs, failed| {
        let mut ok = true;
        let mut repair = 0u64;
        for (li, ev) in evs.iter_mut().enumerate() {
            let f: Vec<bool> = intra[li].iter().map(|&i| failed[i]).collect();
            if !ev.capable(&f) {
                ok = false;
                repair += ev.min_repair(&f).unwrap_or(0) as u64;
            }
        }
        let fi: Vec<bool> = inter.iter().map(|x| failed[x.0]).collect();
        let comps = quotient_components(subs.len(), &ends, &fi);
        if comps > 1 {
            ok = false;
            repair += (comps - 1) as u64;
        }
        if ok {
            Tally {
                ok: 1,
                ..Tally::default()
            }
        } else {
            Tally {
                ok: 0,
                fails: 1,
                repair_sum: repair,
            }
        }
    });
    Ok(PartitionReport::from_counts(
        tally.ok,
        tally.fails,
        tally.repair_sum,
        samples,
        false,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use rand::Rng;

    /// Independent capability check: adjacency lists and DFS.
    fn oracle_capable(n: usize, parts: &[bool], edges: &[(usize, usize)], failed: &[bool]) -> bool {
        let mut adj = vec![Vec::new(); n];
        for (&(a, b), &f) in edges.iter().zip(failed) {
            if !f {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let total = parts.iter().filter(|p| **p).count();
        let mut seen = vec![false; n];
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut stack = vec![s];
            seen[s] = true;
            let mut w = 0;
            while let Some(v) = stack.pop() {
                w += parts[v] as usize;
                for &u in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            if 2 * w > total {
                return true;
            }
        }
        false
    }

    /// Exhaustive oracle: tolerance and conditional mean repair, repair
    /// found by trying every subset of failed edges.
    fn oracle_exact(n: usize, parts: &[bool], edges: &[(usize, usize)], p: &[f64]) -> (f64, f64) {
        let m = edges.len();
        let (mut tol, mut fail, mut rep) = (0.0, 0.0, 0.0);
        for mask in 0u32..1 << m {
            let failed: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
            let pr: f64 = (0..m)
                .map(|i| if failed[i] { p[i] } else { 1.0 - p[i] })
                .product();
            if oracle_capable(n, parts, edges, &failed) {
                tol += pr;
                continue;
            }
            fail += pr;
            let best = (0u32..1 << m)
                .filter(|r| r & !mask == 0)
                .filter(|r| {
                    let f2: Vec<bool> = (0..m).map(|i| (mask & !r) >> i & 1 == 1).collect();
                    oracle_capable(n, parts, edges, &f2)
                })
                .map(u32::count_ones)
                .min()
                .unwrap();
            rep += pr * best as f64;
        }
        (tol, if fail > 0.0 { rep / fail } else { 0.0 })
    }

    fn random_graph(
        rng: &mut ChaCha8Rng,
        max_edges: usize,
    ) -> (Topology<f64>, Vec<bool>, Vec<(usize, usize)>, Vec<f64>) {
        let n = rng.random_range(2..=7usize);
        let mut t = Topology::new();
        let mut parts = Vec::new();
        for i in 0..n {
            let part = i < 2 || rng.random_bool(0.7);
            parts.push(part);
            t.add_node(
                i as u32 * 3,
                if part { Role::Participant } else { Role::Relay },
            )
            .unwrap();
        }
        let mut edges = Vec::new();
        let mut ps = Vec::new();
        // spanning chain then extras
        for i in 1..n {
            edges.push((rng.random_range(0..i), i));
        }
        while edges.len() < max_edges.min(n + rng.random_range(0..=n)) {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.push((a, b));
            }
        }
        for &(a, b) in &edges {
            let p = (rng.random_range(0..=20) as f64) / 40.0;
            ps.push(p);
            t.add_edge(a as u32 * 3, b as u32 * 3, p).unwrap();
        }
        (t, parts, edges, ps)
    }

    #[test]
    fn trivial_states() {
        let t = Topology::<f64>::ring(4, 0.3);
        assert!(is_consensus_capable(&t, &[false; 4], QuorumRule::POV));
        assert!(!is_consensus_capable(&t, &[true; 4], QuorumRule::POV));
        assert_eq!(min_repair(&t, &[true; 4], QuorumRule::POV), Some(2));
    }

    #[test]
    fn ring5_all_subsets() {
        let t = Topology::<f64>::ring(5, 0.5);
        let edges: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        for mask in 0u32..32 {
            let failed: Vec<bool> = (0..5).map(|i| mask >> i & 1 == 1).collect();
            assert_eq!(
                is_consensus_capable(&t, &failed, QuorumRule::POV),
                oracle_capable(5, &[true; 5], &edges, &failed),
                "mask {mask:05b}"
            );
        }
    }

    #[test]
    fn quorum_rule_is_strict() {
        assert!(!QuorumRule::POV.met(2, 4));
        assert!(QuorumRule::POV.met(3, 4));
        assert!(QuorumRule::POV.met(1, 1));
        assert!(QuorumRule { num: 2, den: 3 }.met(3, 4));
        assert!(!QuorumRule { num: 2, den: 3 }.met(2, 3));
    }

    #[test]
    fn zero_and_one_probabilities() {
        let t = Topology::<f64>::ring(6, 0.0);
        let r = estimate_tolerance(&t, QuorumRule::POV, 1000, 1).unwrap();
        assert_eq!((r.tolerance_probability, r.avg_min_repair_time), (1.0, 0.0));
        let mut t = Topology::<f64>::new();
        t.add_node(1, Role::Participant).unwrap();
        t.add_node(2, Role::Participant).unwrap();
        t.add_edge(1, 2, 1.0).unwrap();
        let r = estimate_tolerance(&t, QuorumRule::POV, 1000, 1).unwrap();
        assert_eq!((r.tolerance_probability, r.avg_min_repair_time), (0.0, 1.0));
        let e = exact_tolerance(&t, QuorumRule::POV).unwrap();
        assert_eq!((e.tolerance_probability, e.avg_min_repair_time), (0.0, 1.0));
    }

    #[test]
    fn unreachable_quorum_is_infinite() {
        let mut t = Topology::<f64>::new();
        for i in 0..4 {
            t.add_node(i, Role::Participant).unwrap();
        }
        t.add_edge(0, 1, 0.5).unwrap();
        t.add_edge(2, 3, 0.5).unwrap();
        let r = exact_tolerance(&t, QuorumRule::POV).unwrap();
        assert_eq!(r.tolerance_probability, 0.0);
        assert!(r.avg_min_repair_time.is_infinite());
        assert!(estimate_tolerance(&t, QuorumRule::POV, 100, 0)
            .unwrap()
            .avg_min_repair_time
            .is_infinite());
    }

    #[test]
    fn library_exact_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let (t, parts, edges, ps) = random_graph(&mut rng, 10);
            let (tol, rep) = oracle_exact(t.node_count(), &parts, &edges, &ps);
            let r = exact_tolerance(&t, QuorumRule::POV).unwrap();
            assert!(
                (r.tolerance_probability - tol).abs() < 1e-12,
                "{}",
                t.to_text()
            );
            assert!(
                (r.avg_min_repair_time - rep).abs() < 1e-9,
                "{}",
                t.to_text()
            );
            let (qt, qr) = exact_tolerance_rational(&t, QuorumRule::POV).unwrap();
            assert!((qt.to_f64().unwrap() - tol).abs() < 1e-12);
            assert!((qr.map_or(0.0, |x| x.to_f64().unwrap()) - rep).abs() < 1e-9);
        }
    }

    #[test]
    fn estimate_within_002_of_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..8 {
            let (t, parts, edges, ps) = random_graph(&mut rng, 12);
            let (tol, _) = oracle_exact(t.node_count(), &parts, &edges, &ps);
            let r = estimate_tolerance(&t, QuorumRule::POV, 100_000, k).unwrap();
            assert!(
                (r.tolerance_probability - tol).abs() <= 0.02,
                "{} vs {tol}",
                r.tolerance_probability
            );
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let t = Topology::<f64>::ring(7, 0.2);
        let a = estimate_tolerance(&t, QuorumRule::POV, 20_000, 9).unwrap();
        let b = estimate_tolerance(&t, QuorumRule::POV, 20_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monotone_in_failure_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = Topology::<f64>::ring(8, 0.25);
        t.add_edge(0, 4, 0.3).unwrap();
        t.add_edge(2, 6, 0.3).unwrap();
        for _ in 0..50 {
            let base = estimate_tolerance(&t, QuorumRule::POV, 4000, 77).unwrap();
            let e = rng.random_range(0..t.edges().len());
            let mut lower = t.clone();
            lower.set_p_fail(e, t.edges()[e].p_fail * rng.random::<f64>());
            let r = estimate_tolerance(&lower, QuorumRule::POV, 4000, 77).unwrap();
            assert!(r.tolerance_probability >= base.tolerance_probability);
            t = lower;
        }
    }

    #[test]
    fn half_width_shrinks_with_samples() {
        let t = Topology::<f64>::ring(5, 0.3);
        let a = estimate_tolerance(&t, QuorumRule::POV, 10_000, 1).unwrap();
        let b = estimate_tolerance(&t, QuorumRule::POV, 40_000, 1).unwrap();
        let ratio = a.half_width / b.half_width;
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn repair_zero_iff_tolerance_one() {
        let t = Topology::<f64>::ring(5, 0.0);
        let r = exact_tolerance(&t, QuorumRule::POV).unwrap();
        assert_eq!((r.tolerance_probability, r.avg_min_repair_time), (1.0, 0.0));
        let t = Topology::<f64>::ring(5, 0.1);
        let r = exact_tolerance(&t, QuorumRule::POV).unwrap();
        assert!(r.tolerance_probability < 1.0 && r.avg_min_repair_time > 0.0);
    }

    #[test]
    fn f32_matches_f64() {
        let a = exact_tolerance(&Topology::<f64>::ring(6, 0.2), QuorumRule::POV).unwrap();
        let b = exact_tolerance(&Topology::<f32>::ring(6, 0.2), QuorumRule::POV).unwrap();
        assert!((a.tolerance_probability - b.tolerance_probability as f64).abs() < 1e-5);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let text = "node 1 participant\nnode 2 relay\nlevel 1\nnode 3 participant\nedge 1 2 0.25\nedge 2 3 0.5\n";
        let t = Topology::<f64>::parse(text).unwrap();
        assert_eq!(Topology::<f64>::parse(&t.to_text()).unwrap(), t);
        let (subs, inter) = t.split_levels();
        assert_eq!(subs.len(), 2);
        assert_eq!(
            inter,
            vec![InterLevelEdge {
                a: 2,
                b: 3,
                p_fail: 0.5
            }]
        );
        assert!(matches!(
            Topology::<f64>::parse("node 1 boss"),
            Err(CapError::Syntax { line: 1, .. })
        ));
        assert_eq!(
            Topology::<f64>::parse("edge 1 2 0.1"),
            Err(CapError::UnknownNode(1))
        );
        assert!(matches!(
            Topology::<f64>::parse("node 1 relay\nnode 2 relay\nedge 1 2 1.5"),
            Err(CapError::BadProbability(_))
        ));
    }

    #[test]
    fn single_level_composition_is_identity() {
        let t = Topology::<f64>::ring(5, 0.2);
        let r = estimate_tolerance(&t, QuorumRule::POV, 10_000, 4).unwrap();
        let c = compose_hierarchical(
            &[LevelReport {
                nodes: (0..5).collect(),
                report: r,
            }],
            &[],
        )
        .unwrap();
        assert_eq!(c, r);
    }

    #[test]
    fn two_levels_product() {
        let a = Topology::<f64>::ring(5, 0.2);
        let mut b = Topology::<f64>::new();
        for i in 10..13 {
            b.add_node(i, Role::Participant).unwrap();
        }
        b.add_edge(10, 11, 0.3).unwrap();
        b.add_edge(11, 12, 0.1).unwrap();
        let ra = exact_tolerance(&a, QuorumRule::POV).unwrap();
        let rb = exact_tolerance(&b, QuorumRule::POV).unwrap();
        let link = [InterLevelEdge {
            a: 0,
            b: 10,
            p_fail: 0.0,
        }];
        let c = compose_hierarchical(
            &[
                LevelReport {
                    nodes: (0..5).collect(),
                    report: ra,
                },
                LevelReport {
                    nodes: vec![10, 11, 12],
                    report: rb,
                },
            ],
            &link,
        )
        .unwrap();
        let product = ra.tolerance_probability * rb.tolerance_probability;
        assert!((c.tolerance_probability - product).abs() < 1e-12);
        // against flat sampling of the joined graph
        let mut flat = Topology::<f64>::parse(&a.to_text()).unwrap();
        for i in 10..13 {
            flat.add_node_at(i, Role::Participant, 1).unwrap();
        }
        flat.add_edge(10, 11, 0.3).unwrap();
        flat.add_edge(11, 12, 0.1).unwrap();
        flat.add_edge(0, 10, 0.0).unwrap();
        let f = estimate_flat_conjunctive(&flat, QuorumRule::POV, 100_000, 2).unwrap();
        assert!((f.tolerance_probability - product).abs() <= 2.0 * f.half_width);
    }

    #[test]
    fn overlapping_levels_rejected() {
        let r = PartitionReport {
            tolerance_probability: 1.0,
            avg_min_repair_time: 0.0,
            sample_count: 1,
            half_width: 0.0,
        };
        let l = |nodes: Vec<u32>| LevelReport { nodes, report: r };
        assert_eq!(
            compose_hierarchical(&[l(vec![1, 2]), l(vec![2, 3])], &[]),
            Err(CapError::OverlappingSubtopologies(2))
        );
        assert_eq!(
            compose_hierarchical(
                &[l(vec![1]), l(vec![3])],
                &[InterLevelEdge {
                    a: 1,
                    b: 9,
                    p_fail: 0.0
                }]
            ),
            Err(CapError::UnknownNode(9))
        );
    }

    #[test]
    fn three_level_tree_composed_vs_flat() {
        let text = "\
level 0
node 0 participant
node 1 participant
node 2 participant
edge 0 1 0.1
edge 1 2 0.1
edge 0 2 0.1
level 1
node 3 participant
node 4 participant
node 5 participant
edge 3 4 0.15
edge 4 5 0.15
level 2
node 6 participant
node 7 participant
node 8 participant
edge 6 7 0.2
edge 7 8 0.05
edge 6 8 0.2
edge 0 3 0.05
edge 0 6 0.05
";
        let t = Topology::<f64>::parse(text).unwrap();
        let c = estimate_hierarchical(&t, QuorumRule::POV, 100_000, 10).unwrap();
        let f = estimate_flat_conjunctive(&t, QuorumRule::POV, 100_000, 99).unwrap();
        let combined = (c.half_width * c.half_width + f.half_width * f.half_width).sqrt();
        assert!(
            (c.tolerance_probability - f.tolerance_probability).abs() <= 2.0 * combined,
            "{c} vs {f}"
        );
        assert!((c.avg_min_repair_time - f.avg_min_repair_time).abs() < 0.05);
    }
}
