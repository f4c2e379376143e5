//! Content Store, Pending Interest Table and the per-face nonce window.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};

use min_core::{FaceId, Identifier};
use rustc_hash::FxHashMap;

use crate::packet::Data;
use crate::sim::Tick;

pub const CS_CAPACITY: usize = 1024;
/// Four simulated seconds at one millisecond per tick.
pub const PIT_LIFETIME: Tick = 4000;
pub const NONCE_WINDOW: usize = 1 << 16;

struct CsEntry {
    data: Data,
    inserted: Tick,
    stamp: u64,
}

/// LRU cache of Data packets.
pub struct ContentStore {
    capacity: usize,
    entries: BTreeMap<Identifier, CsEntry>,
    lru: BTreeMap<u64, Identifier>,
    clock: u64,
}

impl ContentStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: BTreeMap::new(),
            lru: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &Identifier) -> bool {
        self.entries.contains_key(name)
    }

    fn touch(&mut self, name: &Identifier) {
        self.clock += 1;
        let e = self.entries.get_mut(name).unwrap();
        self.lru.remove(&e.stamp);
        e.stamp = self.clock;
        self.lru.insert(self.clock, name.clone());
    }

    /// First cached Data whose name has `name` as a prefix; refreshes it.
    pub fn lookup(&mut self, name: &Identifier) -> Option<Data> {
        let (key, _) = self
            .entries
            .range(name.clone()..)
            .next()
            .filter(|(k, _)| name.is_prefix_of_same_kind(k))?;
        let key = key.clone();
        self.touch(&key);
        Some(self.entries[&key].data.clone())
    }

    pub fn insert(&mut self, data: Data, now: Tick) {
        let name = data.name.clone();
        if self.entries.contains_key(&name) {
            self.entries.get_mut(&name).unwrap().data = data;
            self.touch(&name);
            return;
        }
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            let (_, victim) = self.lru.pop_first().unwrap();
            self.entries.remove(&victim);
        }
        self.clock += 1;
        self.lru.insert(self.clock, name.clone());
        self.entries.insert(
            name,
            CsEntry {
                data,
                inserted: now,
                stamp: self.clock,
            },
        );
    }

    pub fn inserted_at(&self, name: &Identifier) -> Option<Tick> {
        self.entries.get(name).map(|e| e.inserted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InRecord {
    pub face: FaceId,
    pub nonce: u64,
    pub expiry: Tick,
}

#[derive(Debug, Clone, Default)]
pub struct PitEntry {
    pub in_records: Vec<InRecord>,
    /// Every nonce seen for this name, for loop detection.
    pub nonces: HashSet<u64>,
}

impl PitEntry {
    pub fn expiry(&self) -> Tick {
        self.in_records.iter().map(|r| r.expiry).max().unwrap_or(0)
    }

    pub fn faces(&self) -> Vec<FaceId> {
        let mut f: Vec<FaceId> = self.in_records.iter().map(|r| r.face).collect();
        f.sort();
        f.dedup();
        f
    }
}

/// Outcome of recording an Interest in the PIT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PitInsert {
    /// No entry existed; the Interest must be forwarded.
    New,
    /// Another face already asked; the Interest is absorbed.
    Aggregated,
    /// The same face asked again with a fresh nonce; forward again.
    Retransmit,
    /// The nonce was already seen on this name.
    Loop,
}

#[derive(Default)]
pub struct Pit {
    entries: FxHashMap<Identifier, PitEntry>,
    expiries: BinaryHeap<Reverse<(Tick, Identifier)>>,
}

impl Pit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &Identifier) -> Option<&PitEntry> {
        self.entries.get(name)
    }

    pub fn insert(&mut self, name: &Identifier, face: FaceId, nonce: u64, now: Tick) -> PitInsert {
        let expiry = now + PIT_LIFETIME;
        self.expiries.push(Reverse((expiry, name.clone())));
        let e = match self.entries.get_mut(name) {
            Some(e) => e,
            None => {
                let mut e = PitEntry::default();
                e.nonces.insert(nonce);
                e.in_records.push(InRecord {
                    face,
                    nonce,
                    expiry,
                });
                self.entries.insert(name.clone(), e);
                return PitInsert::New;
            }
        };
        if !e.nonces.insert(nonce) {
            return PitInsert::Loop;
        }
        match e.in_records.iter_mut().find(|r| r.face == face) {
            Some(r) => {
                r.nonce = nonce;
                r.expiry = expiry;
                PitInsert::Retransmit
            }
            None => {
                e.in_records.push(InRecord {
                    face,
                    nonce,
                    expiry,
                });
                PitInsert::Aggregated
            }
        }
    }

    pub fn remove(&mut self, name: &Identifier) -> Option<PitEntry> {
        self.entries.remove(name)
    }

    /// Removes and returns every entry whose name is a prefix of `name`.
    pub fn take_matching(&mut self, name: &Identifier) -> Vec<(Identifier, PitEntry)> {
        let mut out = Vec::new();
        for k in 1..=name.components().len() {
            let p = name.truncated(k);
            if let Some(e) = self.entries.remove(&p) {
                out.push((p, e));
            }
        }
        out
    }

    /// Drops expired in-records and empty entries; returns the names removed.
    pub fn expire(&mut self, now: Tick) -> Vec<Identifier> {
        let mut gone = Vec::new();
        while let Some(Reverse((t, _))) = self.expiries.peek() {
            if *t > now {
                break;
            }
            let Reverse((_, name)) = self.expiries.pop().unwrap();
            if let Some(e) = self.entries.get_mut(&name) {
                e.in_records.retain(|r| r.expiry > now);
                if e.in_records.is_empty() {
                    self.entries.remove(&name);
                    gone.push(name);
                }
            }
        }
        gone
    }

    pub fn max_expiry(&self) -> Option<Tick> {
        self.entries.values().map(PitEntry::expiry).max()
    }

    pub fn min_expiry(&self) -> Option<Tick> {
        self.entries.values().map(PitEntry::expiry).min()
    }
}

/// Ring buffer of the most recent nonces seen on one face.
pub struct NonceWindow {
    cap: usize,
    ring: VecDeque<u64>,
    set: HashSet<u64>,
}

impl NonceWindow {
    pub fn new(cap: usize) -> Self {
        Self {
            cap,
            ring: VecDeque::new(),
            set: HashSet::new(),
        }
    }

    /// Records `nonce`; false if it is already in the window.
    pub fn admit(&mut self, nonce: u64) -> bool {
        if !self.set.insert(nonce) {
            return false;
        }
        if self.ring.len() == self.cap {
            let old = self.ring.pop_front().unwrap();
            self.set.remove(&old);
        }
        self.ring.push_back(nonce);
        true
    }
}
