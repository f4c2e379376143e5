//! Hash Prefix Table FIB.
//!
//! Two indexes over one set of entries:
//!
//! * a hash index keyed by a 64-bit digest of the full key, used for exact
//!   lookups;
//! * a prefix tree per identifier kind (IPv4 and IPv6 get separate bit
//!   tries), used for longest-prefix match. Tree edges live in one flat hash
//!   map keyed by `(parent, label)`, with labels interned once.
//!
//! Each entry either forwards to a face or translates the key into an
//! identifier of any kind.

mod generator;
mod text;

use std::fmt;
use std::hash::{Hash, Hasher};

use rustc_hash::{FxHashMap, FxHasher};
use string_interner::backend::StringBackend;
use string_interner::symbol::SymbolU32;
use string_interner::{StringInterner, Symbol};

use crate::identifier::{IdKind, Identifier, IpPrefix};

pub use generator::{generate_entries, EntryGenerator};
pub use text::{parse_line, FibTextError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FaceId(pub u32);

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FibAction {
    Forward(FaceId),
    Translate(Box<Identifier>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EntryOrigin {
    #[default]
    Static,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HptFibEntry {
    pub key: Identifier,
    pub action: FibAction,
    pub origin: EntryOrigin,
}

impl HptFibEntry {
    pub fn forward(key: Identifier, face: FaceId) -> Self {
        Self {
            key,
            action: FibAction::Forward(face),
            origin: EntryOrigin::Static,
        }
    }

    pub fn translate(key: Identifier, target: Identifier) -> Self {
        Self {
            key,
            action: FibAction::Translate(Box::new(target)),
            origin: EntryOrigin::Static,
        }
    }

    pub fn learned(mut self) -> Self {
        self.origin = EntryOrigin::Learned;
        self
    }
}

const NIL: u32 = u32::MAX;
const BIT0: u32 = u32::MAX - 1;
const BIT1: u32 = u32::MAX - 2;
const ROOTS: usize = 6;

#[derive(Debug, Clone, Copy)]
struct Node {
    parent: u32,
    label: u32,
    children: u32,
    slot: u32,
}

#[derive(Debug, Clone)]
struct Slot {
    action: FibAction,
    origin: EntryOrigin,
    node: u32,
}

/// One step of a key's path through the tree.
#[derive(Clone, Copy)]
enum Step<'a> {
    Label(&'a str),
    Bit(bool),
}

fn root_of(key: &Identifier) -> usize {
    match key.kind() {
        IdKind::Content => 0,
        IdKind::Identity => 1,
        IdKind::Geo => 2,
        IdKind::LegacyDomain => 3,
        IdKind::Ip => {
            if key.ip_prefix().is_some_and(|p| p.addr().is_ipv6()) {
                5
            } else {
                4
            }
        }
    }
}

fn steps(key: &Identifier) -> impl Iterator<Item = Step<'_>> {
    let ip = key.ip_prefix().copied();
    let labels = key.components().iter().map(|c| Step::Label(c.as_str()));
    let bits = ip
        .into_iter()
        .flat_map(|p| (0..p.len()).map(move |i| Step::Bit(p.bit(i))));
    labels.chain(bits)
}

fn key_digest(key: &Identifier) -> u64 {
    let mut h = FxHasher::default();
    root_of(key).hash(&mut h);
    match key.ip_prefix() {
        Some(p) => {
            p.bits().0.hash(&mut h);
            p.len().hash(&mut h);
        }
        None => {
            for c in key.components() {
                c.hash(&mut h);
            }
        }
    }
    h.finish()
}

/// Prefix-keyed translation and forwarding table.
#[derive(Clone)]
pub struct HptFib {
    labels: StringInterner<StringBackend<SymbolU32>>,
    nodes: Vec<Node>,
    free_nodes: Vec<u32>,
    edges: FxHashMap<(u32, u32), u32>,
    slots: Vec<Option<Slot>>,
    free_slots: Vec<u32>,
    by_digest: FxHashMap<u64, u32>,
    // keys whose digest collided with a different key already indexed
    overflow: FxHashMap<Identifier, u32>,
    len: usize,
}

impl Default for HptFib {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for HptFib {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HptFib")
            .field("len", &self.len)
            .field("nodes", &(self.nodes.len() - self.free_nodes.len()))
            .finish()
    }
}

impl HptFib {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(entries: usize) -> Self {
        let root = Node {
            parent: NIL,
            label: NIL,
            children: 0,
            slot: NIL,
        };
        let mut nodes = Vec::with_capacity(entries + ROOTS);
        nodes.extend(std::iter::repeat_n(root, ROOTS));
        Self {
            labels: StringInterner::new(),
            nodes,
            free_nodes: Vec::new(),
            edges: FxHashMap::with_capacity_and_hasher(entries, Default::default()),
            slots: Vec::with_capacity(entries),
            free_slots: Vec::new(),
            by_digest: FxHashMap::with_capacity_and_hasher(entries, Default::default()),
            overflow: FxHashMap::default(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn label_id(&mut self, step: Step<'_>) -> u32 {
        match step {
            Step::Label(s) => self.labels.get_or_intern(s).to_usize() as u32,
            Step::Bit(false) => BIT0,
            Step::Bit(true) => BIT1,
        }
    }

    fn find_label(&self, step: Step<'_>) -> Option<u32> {
        match step {
            Step::Label(s) => self.labels.get(s).map(|s| s.to_usize() as u32),
            Step::Bit(false) => Some(BIT0),
            Step::Bit(true) => Some(BIT1),
        }
    }

    fn alloc_node(&mut self, parent: u32, label: u32) -> u32 {
        let node = Node {
            parent,
            label,
            children: 0,
            slot: NIL,
        };
        match self.free_nodes.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    /// Inserts or replaces the entry for `entry.key`. Returns the new count.
    pub fn insert(&mut self, entry: HptFibEntry) -> usize {
        let mut node = root_of(&entry.key) as u32;
        for step in steps(&entry.key) {
            let label = self.label_id(step);
            node = match self.edges.get(&(node, label)) {
                Some(&child) => child,
                None => {
                    let child = self.alloc_node(node, label);
                    self.edges.insert((node, label), child);
                    self.nodes[node as usize].children += 1;
                    child
                }
            };
        }
        let slot = Slot {
            action: entry.action,
            origin: entry.origin,
            node,
        };
        let existing = self.nodes[node as usize].slot;
        if existing != NIL {
            self.slots[existing as usize] = Some(slot);
            return self.len;
        }
        let idx = match self.free_slots.pop() {
            Some(i) => {
                self.slots[i as usize] = Some(slot);
                i
            }
            None => {
                self.slots.push(Some(slot));
                (self.slots.len() - 1) as u32
            }
        };
        self.nodes[node as usize].slot = idx;
        let digest = key_digest(&entry.key);
        match self.by_digest.get(&digest) {
            None => {
                self.by_digest.insert(digest, node);
            }
            Some(_) => {
                self.overflow.insert(entry.key, node);
            }
        }
        self.len += 1;
        self.len
    }

    /// Walks the tree as far as `key` allows; returns the deepest node on
    /// the path that carries an entry, with its depth.
    fn walk(&self, key: &Identifier, exact: bool) -> Option<(u32, usize)> {
        let mut node = root_of(key) as u32;
        let mut best = None;
        let mut depth = 0;
        if self.nodes[node as usize].slot != NIL {
            best = Some((node, 0));
        }
        for step in steps(key) {
            let Some(label) = self.find_label(step) else {
                break;
            };
            match self.edges.get(&(node, label)) {
                Some(&child) => node = child,
                None => break,
            }
            depth += 1;
            if self.nodes[node as usize].slot != NIL {
                best = Some((node, depth));
            }
        }
        if exact {
            best.filter(|&(_, d)| d == key.depth())
        } else {
            best
        }
    }

    fn node_matches(&self, mut node: u32, key: &Identifier) -> bool {
        let path: Vec<Step<'_>> = steps(key).collect();
        for step in path.iter().rev() {
            let n = self.nodes[node as usize];
            let ok = match step {
                Step::Label(s) => {
                    n.label < BIT1
                        && self
                            .labels
                            .resolve(SymbolU32::try_from_usize(n.label as usize).unwrap())
                            == Some(*s)
                }
                Step::Bit(b) => n.label == if *b { BIT1 } else { BIT0 },
            };
            if !ok {
                return false;
            }
            node = n.parent;
        }
        node as usize == root_of(key)
    }

    /// Exact lookup through the hash index.
    pub fn lookup_exact(&self, key: &Identifier) -> Option<HptFibEntry> {
        let node = self
            .by_digest
            .get(&key_digest(key))
            .copied()
            .filter(|&n| self.node_matches(n, key))
            .or_else(|| self.overflow.get(key).copied())?;
        self.entry_at(node, key.clone())
    }

    fn entry_at(&self, node: u32, key: Identifier) -> Option<HptFibEntry> {
        let slot = self.nodes[node as usize].slot;
        let s = self.slots.get(slot as usize)?.as_ref()?;
        Some(HptFibEntry {
            key,
            action: s.action.clone(),
            origin: s.origin,
        })
    }

    /// Longest stored prefix of `name`, by labels or by address bits.
    pub fn longest_prefix_match(&self, name: &Identifier) -> Option<HptFibEntry> {
        let (node, depth) = self.walk(name, false)?;
        self.entry_at(node, name.truncated(depth))
    }

    /// Applies the longest-matching `Translate` entry.
    ///
    /// Unmatched trailing labels of `name` are appended to a hierarchical
    /// target. An `Ip` name matched by a shorter prefix contributes its full
    /// address as one trailing label. A `Forward` match or no match gives
    /// `None`.
    pub fn translate(&self, name: &Identifier) -> Option<Identifier> {
        let entry = self.longest_prefix_match(name)?;
        let FibAction::Translate(target) = entry.action else {
            return None;
        };
        if !target.is_hierarchical() {
            return Some(*target);
        }
        match name.ip_prefix() {
            Some(p) if entry.key.depth() < p.len() as usize => {
                let label = match p.is_host() {
                    true => p.addr().to_string(),
                    false => format!("{}_{}", p.addr(), p.len()),
                };
                target.child(label).ok()
            }
            Some(_) => Some(*target),
            None => target.join(&name.components()[entry.key.depth()..]).ok(),
        }
    }

    pub fn remove(&mut self, key: &Identifier) -> Option<HptFibEntry> {
        let (node, _) = self.walk(key, true)?;
        let slot_idx = self.nodes[node as usize].slot;
        let slot = self.slots[slot_idx as usize].take()?;
        self.free_slots.push(slot_idx);
        self.nodes[node as usize].slot = NIL;
        let digest = key_digest(key);
        if self.overflow.remove(key).is_none() {
            self.by_digest.remove(&digest);
            // promote an overflowed key with the same digest, if any
            if let Some(k) = self
                .overflow
                .keys()
                .find(|k| key_digest(k) == digest)
                .cloned()
            {
                let n = self.overflow.remove(&k).unwrap();
                self.by_digest.insert(digest, n);
            }
        }
        self.len -= 1;
        self.prune(node);
        Some(HptFibEntry {
            key: key.clone(),
            action: slot.action,
            origin: slot.origin,
        })
    }

    fn prune(&mut self, mut node: u32) {
        while node as usize >= ROOTS {
            let n = self.nodes[node as usize];
            if n.slot != NIL || n.children > 0 {
                break;
            }
            self.edges.remove(&(n.parent, n.label));
            self.nodes[n.parent as usize].children -= 1;
            self.free_nodes.push(node);
            node = n.parent;
        }
    }

    fn key_of(&self, mut node: u32) -> Identifier {
        let mut labels = Vec::new();
        while self.nodes[node as usize].parent != NIL {
            labels.push(self.nodes[node as usize].label);
            node = self.nodes[node as usize].parent;
        }
        labels.reverse();
        let kind = match node {
            0 => IdKind::Content,
            1 => IdKind::Identity,
            2 => IdKind::Geo,
            3 => IdKind::LegacyDomain,
            _ => IdKind::Ip,
        };
        if kind == IdKind::Ip {
            let v6 = node == 5;
            let mut bits = 0u128;
            for (i, l) in labels.iter().enumerate() {
                if *l == BIT1 {
                    bits |= 1 << (127 - i);
                }
            }
            return Identifier::ip(IpPrefix::from_bits(v6, bits, labels.len() as u8));
        }
        let words = labels.iter().map(|l| {
            self.labels
                .resolve(SymbolU32::try_from_usize(*l as usize).unwrap())
                .unwrap()
                .to_string()
        });
        Identifier::new(kind, words).expect("tree holds validated labels")
    }

    /// All entries, in no particular order.
    pub fn entries(&self) -> impl Iterator<Item = HptFibEntry> + '_ {
        self.slots.iter().flatten().map(|s| HptFibEntry {
            key: self.key_of(s.node),
            action: s.action.clone(),
            origin: s.origin,
        })
    }

    /// Verifies that the hash index and the tree describe the same entries.
    pub fn check_coherence(&self) -> Result<(), String> {
        let tree_entries = self.slots.iter().flatten().count();
        let hashed = self.by_digest.len() + self.overflow.len();
        if tree_entries != self.len || hashed != self.len {
            return Err(format!(
                "count mismatch: len {} tree {} hash {}",
                self.len, tree_entries, hashed
            ));
        }
        for (digest, &node) in self.by_digest.iter() {
            let key = self.key_of(node);
            if key_digest(&key) != *digest || self.nodes[node as usize].slot == NIL {
                return Err(format!("hash index entry for {key} is stale"));
            }
        }
        for (key, &node) in self.overflow.iter() {
            if self.key_of(node) != *key {
                return Err(format!("overflow entry for {key} is stale"));
            }
        }
        for s in self.slots.iter().flatten() {
            let key = self.key_of(s.node);
            if self.lookup_exact(&key).is_none() {
                return Err(format!("{key} reachable in tree but not by hash"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn id(s: &str) -> Identifier {
        s.parse().unwrap()
    }

    fn fwd(s: &str, face: u32) -> HptFibEntry {
        HptFibEntry::forward(id(s), FaceId(face))
    }

    #[test]
    fn insert_and_replace() {
        let mut fib = HptFib::new();
        assert_eq!(fib.insert(fwd("/a/b", 1)), 1);
        assert_eq!(fib.insert(fwd("/a/b", 2)), 1);
        assert_eq!(
            fib.lookup_exact(&id("/a/b")).unwrap().action,
            FibAction::Forward(FaceId(2))
        );
        assert!(fib.lookup_exact(&id("/a")).is_none());
        fib.check_coherence().unwrap();
    }

    #[test]
    fn lpm_basics() {
        let mut fib = HptFib::new();
        assert!(fib.longest_prefix_match(&id("/a/b/c")).is_none());
        fib.insert(fwd("/a", 1));
        fib.insert(fwd("/a/b", 2));
        let m = fib.longest_prefix_match(&id("/a/b/c")).unwrap();
        assert_eq!(m.key, id("/a/b"));
        assert_eq!(fib.longest_prefix_match(&id("/a/x")).unwrap().key, id("/a"));
        assert!(fib.longest_prefix_match(&id("/b")).is_none());
        // kinds never match each other
        assert!(fib.longest_prefix_match(&id("id:/a/b")).is_none());
    }

    #[test]
    fn ip_cidr_matching() {
        let mut fib = HptFib::new();
        fib.insert(fwd("ip:10.0.0.0/8", 1));
        fib.insert(fwd("ip:10.1.0.0/16", 2));
        fib.insert(fwd("ip:2001:db8::/32", 3));
        assert_eq!(
            fib.longest_prefix_match(&id("ip:10.1.2.3")).unwrap().key,
            id("ip:10.1.0.0/16")
        );
        assert_eq!(
            fib.longest_prefix_match(&id("ip:10.2.2.3")).unwrap().key,
            id("ip:10.0.0.0/8")
        );
        assert!(fib.longest_prefix_match(&id("ip:11.0.0.1")).is_none());
        assert_eq!(
            fib.longest_prefix_match(&id("ip:2001:db8::1")).unwrap().key,
            id("ip:2001:db8::/32")
        );
        fib.insert(fwd("ip:0.0.0.0/0", 9));
        assert_eq!(
            fib.longest_prefix_match(&id("ip:11.0.0.1")).unwrap().key,
            id("ip:0.0.0.0/0")
        );
        // a v4 default route does not catch v6
        assert!(fib.longest_prefix_match(&id("ip:::1")).is_none());
        fib.check_coherence().unwrap();
    }

    #[test]
    fn translation() {
        let mut fib = HptFib::new();
        assert!(fib.translate(&id("id:/alice")).is_none());
        fib.insert(HptFibEntry::translate(id("id:/alice"), id("ip:10.0.0.7")));
        assert_eq!(fib.translate(&id("id:/alice")), Some(id("ip:10.0.0.7")));
        fib.insert(HptFibEntry::translate(id("/cn/pku"), id("/ndr/edu/pkusz")));
        assert_eq!(
            fib.translate(&id("/cn/pku/node3")),
            Some(id("/ndr/edu/pkusz/node3"))
        );
        fib.insert(fwd("/fwd", 1));
        assert_eq!(fib.translate(&id("/fwd/x")), None);
        fib.insert(HptFibEntry::translate(
            id("ip:10.1.0.0/16"),
            id("/gw/site1"),
        ));
        assert_eq!(
            fib.translate(&id("ip:10.1.0.5")),
            Some(id("/gw/site1/10.1.0.5"))
        );
        assert_eq!(fib.translate(&id("ip:10.1.0.0/16")), Some(id("/gw/site1")));
    }

    #[test]
    fn remove_prunes_and_keeps_coherent() {
        let mut fib = HptFib::new();
        fib.insert(fwd("/a/b/c", 1));
        fib.insert(fwd("/a", 2));
        assert!(fib.remove(&id("/a/b")).is_none());
        assert_eq!(
            fib.remove(&id("/a/b/c")).unwrap().action,
            FibAction::Forward(FaceId(1))
        );
        assert_eq!(fib.len(), 1);
        assert_eq!(fib.edges.len(), 1);
        assert_eq!(
            fib.longest_prefix_match(&id("/a/b/c")).unwrap().key,
            id("/a")
        );
        fib.check_coherence().unwrap();
    }

    #[test]
    fn entries_reconstruct_keys() {
        let mut fib = HptFib::new();
        let keys = [
            "/a/b",
            "id:/x",
            "geo:/cn/gd",
            "dns:example.com",
            "ip:10.0.0.0/8",
            "ip:2001:db8::1",
        ];
        for (i, k) in keys.iter().enumerate() {
            fib.insert(fwd(k, i as u32));
        }
        let mut got: Vec<String> = fib.entries().map(|e| e.key.to_string()).collect();
        got.sort();
        let mut want: Vec<String> = keys.iter().map(|k| id(k).to_string()).collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn is_send_and_sync() {
        fn check<T: Send + Sync>() {}
        check::<HptFib>();
    }

    fn random_content(rng: &mut ChaCha8Rng, max_depth: usize) -> Identifier {
        let depth = rng.random_range(1..=max_depth);
        Identifier::content((0..depth).map(|_| ["a", "b", "c"][rng.random_range(0..3)])).unwrap()
    }

    #[test]
    fn coherence_under_random_interleaving() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut fib = HptFib::new();
        let mut model = std::collections::HashMap::new();
        for i in 0..10_000u32 {
            let key = random_content(&mut rng, 6);
            if rng.random_bool(0.4) {
                assert_eq!(fib.remove(&key).is_some(), model.remove(&key).is_some());
            } else {
                fib.insert(HptFibEntry::forward(key.clone(), FaceId(i)));
                model.insert(key, i);
            }
            assert_eq!(fib.len(), model.len());
            if i % 1000 == 0 {
                fib.check_coherence().unwrap();
            }
        }
        fib.check_coherence().unwrap();
        for (k, v) in &model {
            assert_eq!(
                fib.lookup_exact(k).unwrap().action,
                FibAction::Forward(FaceId(*v))
            );
        }
    }

    #[test]
    fn lpm_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut fib = HptFib::new();
        let mut prefixes = Vec::new();
        for i in 0..1000u32 {
            let p = random_content(&mut rng, 5);
            fib.insert(HptFibEntry::forward(p.clone(), FaceId(i)));
            prefixes.retain(|(q, _)| q != &p);
            prefixes.push((p, i));
        }
        for _ in 0..10_000 {
            let q = random_content(&mut rng, 8);
            let oracle = prefixes
                .iter()
                .filter(|(p, _)| {
                    p.components().len() <= q.components().len()
                        && p.components()
                            .iter()
                            .zip(q.components())
                            .all(|(a, b)| a == b)
                })
                .max_by_key(|(p, _)| p.components().len());
            let got = fib.longest_prefix_match(&q);
            match (oracle, got) {
                (None, None) => {}
                (Some((p, f)), Some(e)) => {
                    assert_eq!(&e.key, p);
                    assert_eq!(e.action, FibAction::Forward(FaceId(*f)));
                }
                (o, g) => panic!("query {q}: oracle {o:?} got {g:?}"),
            }
        }
    }
}
