//! Windowed segment fetching shared by CCN consumers and IP clients.

use std::collections::BTreeMap;

use min_core::Digest;

use crate::sim::Tick;

pub const DEFAULT_WINDOW: usize = 16;
pub const DEFAULT_RTO: Tick = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchState {
    Waiting,
    Running,
    Complete,
    Failed(String),
}

/// Tracks which segments of one resource are outstanding.
///
/// Only segment 0 is requested until its reply names the last segment;
/// after that up to `window` requests are kept in flight. A request not
/// answered within `rto` ticks is sent again.
#[derive(Debug, Clone)]
pub struct FetchSession {
    pub window: usize,
    pub rto: Tick,
    pub start: Tick,
    pub end: Option<Tick>,
    pub retransmissions: u64,
    state: FetchState,
    last: Option<u64>,
    next: u64,
    outstanding: BTreeMap<u64, Tick>,
    received: BTreeMap<u64, Vec<u8>>,
}

impl FetchSession {
    pub fn new(start: Tick, window: usize, rto: Tick) -> Self {
        Self {
            window: window.max(1),
            rto,
            start,
            end: None,
            retransmissions: 0,
            state: FetchState::Waiting,
            last: None,
            next: 0,
            outstanding: BTreeMap::new(),
            received: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &FetchState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        matches!(self.state, FetchState::Complete | FetchState::Failed(_))
    }

    pub fn is_complete(&self) -> bool {
        self.state == FetchState::Complete
    }

    /// Segments to request at `now`: timed-out ones first, then new ones.
    pub fn poll(&mut self, now: Tick) -> Vec<u64> {
        let mut out = Vec::new();
        match self.state {
            FetchState::Waiting if now >= self.start => self.state = FetchState::Running,
            FetchState::Running => {}
            _ => return out,
        }
        for (seg, sent) in self.outstanding.iter_mut() {
            if now >= *sent + self.rto {
                *sent = now;
                self.retransmissions += 1;
                out.push(*seg);
            }
        }
        let window = if self.last.is_some() { self.window } else { 1 };
        while self.outstanding.len() < window && self.last.is_none_or(|l| self.next <= l) {
            if self.next > 0 && self.last.is_none() {
                break;
            }
            self.outstanding.insert(self.next, now);
            out.push(self.next);
            self.next += 1;
        }
        out
    }

    pub fn on_segment(&mut self, now: Tick, seg: u64, last: Option<u64>, bytes: &[u8]) {
        if self.state != FetchState::Running || self.outstanding.remove(&seg).is_none() {
            return;
        }
        if self.last.is_none() {
            self.last = Some(last.unwrap_or(seg));
        }
        self.received.insert(seg, bytes.to_vec());
        if self.received.len() as u64 == self.last.unwrap() + 1 {
            self.state = FetchState::Complete;
            self.end = Some(now);
        }
    }

    pub fn fail(&mut self, now: Tick, reason: impl Into<String>) {
        if !self.is_done() {
            self.state = FetchState::Failed(reason.into());
            self.end = Some(now);
        }
    }

    pub fn bytes_received(&self) -> u64 {
        self.received.values().map(|b| b.len() as u64).sum()
    }

    pub fn assemble(&self) -> Vec<u8> {
        self.received.values().flatten().copied().collect()
    }

    pub fn digest(&self) -> Digest {
        Digest::of_parts(self.received.values().map(Vec::as_slice))
    }

    /// Ticks from start to completion.
    pub fn duration(&self) -> Option<Tick> {
        self.end.map(|e| e.saturating_sub(self.start).max(1))
    }
}
