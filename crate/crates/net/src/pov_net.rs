//! Proof-of-Vote consensus over simulated links.
//!
//! The scheduled butler proposes the next block to every node and
//! re-sends the same proposal if it has not committed after a timeout.
//! Commissioners vote at most once per height and send their vote to the
//! producer, which commits once it holds a majority and broadcasts the
//! voted block. Every node folds committed blocks into its own
//! [`ChainState`], buffering blocks and proposals that arrive early.

use std::collections::{BTreeMap, BTreeSet};

use min_core::chain::{
    is_majority, Block, ChainState, Commissioner, Genesis, GenesisError, NodeId, NodeRole,
    Transaction, Vote, VoteDecision,
};
use min_core::{sign_record, Digest, FaceId, Identifier, KeyPair, Signer, Verifier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim::{LinkSpec, Node, Outbox, Tick, Wire, World};

pub const GENESIS_LABEL: &str = "pov";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PovMsg {
    Proposal(Block),
    Vote {
        height: u64,
        hash: Digest,
        vote: Vote,
    },
    Commit(Block),
}

impl Wire for PovMsg {
    fn wire_len(&self) -> usize {
        match self {
            PovMsg::Proposal(b) | PovMsg::Commit(b) => b.encode().len(),
            PovMsg::Vote { vote, .. } => 8 + 32 + 4 + vote.signature.len(),
        }
    }
}

struct Proposal {
    block: Block,
    sent: Tick,
    votes: BTreeMap<NodeId, Vote>,
}

pub struct PovNode {
    pub id: NodeId,
    /// Never sends anything; still receives and commits.
    pub silent: bool,
    pub chain: ChainState,
    commissioner: Option<Commissioner>,
    faces: BTreeMap<NodeId, FaceId>,
    mempool: Vec<Transaction>,
    proposal: Option<Proposal>,
    early_commits: BTreeMap<u64, Block>,
    early_proposals: BTreeMap<u64, Block>,
    timeout: Tick,
    counters: BTreeMap<&'static str, u64>,
}

impl PovNode {
    pub fn new(id: NodeId, genesis: &Genesis, silent: bool, timeout: Tick) -> Self {
        let commissioner = (genesis.role_of(id) == NodeRole::Commissioner)
            .then(|| Commissioner::new(id, Genesis::derived_key(GENESIS_LABEL, id)));
        Self {
            id,
            silent,
            chain: ChainState::new(genesis.clone()),
            commissioner,
            faces: BTreeMap::new(),
            mempool: Vec::new(),
            proposal: None,
            early_commits: BTreeMap::new(),
            early_proposals: BTreeMap::new(),
            timeout,
            counters: BTreeMap::new(),
        }
    }

    fn bump(&mut self, name: &'static str) {
        *self.counters.entry(name).or_insert(0) += 1;
    }

    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn connect(&mut self, peer: NodeId, face: FaceId) {
        self.faces.insert(peer, face);
    }

    pub fn submit(&mut self, tx: Transaction) {
        self.mempool.push(tx);
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    fn broadcast(&mut self, msg: &PovMsg, out: &mut Outbox<PovMsg>) {
        if self.silent {
            return;
        }
        for f in self.faces.values() {
            out.send(*f, msg.clone());
        }
    }

    fn on_proposal(&mut self, block: Block, out: &mut Outbox<PovMsg>) {
        if self.commissioner.is_none() || self.silent {
            return;
        }
        let next = self.chain.height() + 1;
        if block.height > next {
            self.early_proposals.insert(block.height, block);
            return;
        }
        if block.height < next {
            return;
        }
        let decision = self
            .commissioner
            .as_mut()
            .unwrap()
            .vote_on_block(&self.chain, &block);
        match decision {
            VoteDecision::Vote(vote) => {
                self.bump("votes_sent");
                if let Some(f) = self.faces.get(&block.producer) {
                    out.send(
                        *f,
                        PovMsg::Vote {
                            height: block.height,
                            hash: block.hash(),
                            vote,
                        },
                    );
                }
            }
            VoteDecision::Reject(_) => self.bump("votes_refused"),
        }
    }

    fn on_vote(&mut self, height: u64, hash: Digest, vote: Vote, out: &mut Outbox<PovMsg>) {
        let committee = self.chain.genesis().committee_size();
        let Some(p) = self.proposal.as_mut() else {
            return;
        };
        if p.block.height != height || p.block.hash() != hash {
            self.counters
                .entry("stale_votes")
                .and_modify(|c| *c += 1)
                .or_insert(1);
            return;
        }
        let Some(key) = self.chain.genesis().commissioner_key(vote.voter) else {
            return;
        };
        if !key.verify(&Vote::signed_bytes(&hash), &vote.signature) {
            self.bump("bad_votes");
            return;
        }
        p.votes.insert(vote.voter, vote);
        if !is_majority(p.votes.len(), committee) {
            return;
        }
        let p = self.proposal.take().unwrap();
        let mut block = p.block;
        block.votes = p.votes.into_values().collect();
        let msg = PovMsg::Commit(block.clone());
        if self.commit(block, out) {
            self.broadcast(&msg, out);
        }
    }

    fn on_commit(&mut self, block: Block, out: &mut Outbox<PovMsg>) {
        let next = self.chain.height() + 1;
        if block.height > next {
            self.early_commits.insert(block.height, block);
        } else if block.height == next {
            self.commit(block, out);
        }
    }

    /// Applies `block` and anything buffered behind it.
    fn commit(&mut self, block: Block, out: &mut Outbox<PovMsg>) -> bool {
        let mut next = Some(block);
        let mut any = false;
        while let Some(b) = next.take() {
            let done: BTreeSet<Digest> = b
                .txs
                .iter()
                .map(Transaction::digest)
                .chain(b.rejected.iter().map(|r| r.tx))
                .collect();
            match self.chain.commit_block(b) {
                Ok(()) => {
                    any = true;
                    self.bump("blocks_committed");
                    self.mempool.retain(|tx| !done.contains(&tx.digest()));
                }
                Err(_) => {
                    self.bump("commits_refused");
                    break;
                }
            }
            next = self.early_commits.remove(&(self.chain.height() + 1));
        }
        let h = self.chain.height();
        self.early_commits = self.early_commits.split_off(&(h + 1));
        self.early_proposals = self.early_proposals.split_off(&(h + 1));
        if self.proposal.as_ref().is_some_and(|p| p.block.height <= h) {
            self.proposal = None;
        }
        if let Some(b) = self.early_proposals.remove(&(h + 1)) {
            self.on_proposal(b, out);
        }
        any
    }

    fn propose(&mut self, now: Tick, out: &mut Outbox<PovMsg>) {
        if self.silent {
            return;
        }
        let next = self.chain.height() + 1;
        if self.chain.scheduled_producer(next) != self.id {
            return;
        }
        match &mut self.proposal {
            Some(p) if now.saturating_sub(p.sent) >= self.timeout => {
                p.sent = now;
                let msg = PovMsg::Proposal(p.block.clone());
                self.bump("proposal_resends");
                self.broadcast(&msg, out);
            }
            Some(_) => {}
            None => {
                let Ok(block) = self.chain.produce_block(self.id, &self.mempool) else {
                    return;
                };
                let msg = PovMsg::Proposal(block.clone());
                self.proposal = Some(Proposal {
                    block,
                    sent: now,
                    votes: BTreeMap::new(),
                });
                self.bump("proposals");
                self.broadcast(&msg, out);
            }
        }
    }
}

impl Node for PovNode {
    type Msg = PovMsg;

    fn on_message(&mut self, _now: Tick, _face: FaceId, msg: PovMsg, out: &mut Outbox<PovMsg>) {
        match msg {
            PovMsg::Proposal(b) => self.on_proposal(b, out),
            PovMsg::Vote { height, hash, vote } => self.on_vote(height, hash, vote, out),
            PovMsg::Commit(b) => self.on_commit(b, out),
        }
    }

    fn on_tick(&mut self, now: Tick, out: &mut Outbox<PovMsg>) {
        self.propose(now, out);
    }

    fn metrics(&self) -> Vec<(String, u64)> {
        let mut m: Vec<(String, u64)> = self
            .counters
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        m.push(("height".into(), self.chain.height()));
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PovConfig {
    pub committee: usize,
    pub butlers: usize,
    pub candidates: usize,
    /// Number of commissioners, counted from the highest id, that never send.
    pub silent: usize,
    pub blocks: u64,
    pub seed: u64,
    pub latency: Tick,
    pub jitter: Tick,
    pub capacity: u64,
    pub timeout: Tick,
    /// A client transaction is submitted every this many ticks.
    pub tx_every: Tick,
}

impl Default for PovConfig {
    fn default() -> Self {
        Self {
            committee: 5,
            butlers: 3,
            candidates: 0,
            silent: 0,
            blocks: 100,
            seed: 1,
            latency: 2,
            jitter: 6,
            capacity: 100_000,
            timeout: 50,
            tx_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PovReport {
    pub heights: Vec<u64>,
    /// Every pair of chains is prefix-related.
    pub forkless: bool,
    /// Fewest valid votes carried by any committed block on any node.
    pub min_votes: usize,
    pub committee: usize,
    pub ticks: Tick,
    pub finished: bool,
    pub txs_submitted: u64,
    pub txs_committed: u64,
    pub txs_rejected: u64,
    pub proposal_resends: u64,
}

pub struct PovNetwork {
    pub config: PovConfig,
    pub genesis: Genesis,
    pub world: World<PovNode>,
    rng: ChaCha8Rng,
    clients: Vec<(KeyPair, Identifier)>,
    txs_submitted: u64,
}

impl PovNetwork {
    pub fn new(config: PovConfig) -> Result<Self, GenesisError> {
        let ids: Vec<NodeId> =
            (0..(config.committee + config.butlers + config.candidates) as NodeId).collect();
        let (committee, rest) = ids.split_at(config.committee);
        let (butlers, candidates) = rest.split_at(config.butlers);
        let genesis = Genesis::derived(GENESIS_LABEL, committee, butlers, candidates)?;
        let silent_from = config.committee.saturating_sub(config.silent) as NodeId;
        let mut world = World::new(config.seed);
        for &id in &ids {
            let silent = (id as usize) < config.committee && id >= silent_from;
            world.add_node(PovNode::new(id, &genesis, silent, config.timeout));
        }
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                let mut spec = LinkSpec::new(a, b, config.capacity, config.latency);
                spec.jitter = config.jitter;
                let (fa, fb) = world.add_link(spec);
                world.node_mut(a).connect(b as NodeId, fa);
                world.node_mut(b).connect(a as NodeId, fb);
            }
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x706f_76),
            config,
            genesis,
            world,
            clients: Vec::new(),
            txs_submitted: 0,
        })
    }

    pub fn node_names(&self) -> Vec<String> {
        self.world
            .nodes()
            .iter()
            .map(|n| {
                let role = match self.genesis.role_of(n.id) {
                    NodeRole::Commissioner => "c",
                    NodeRole::Butler => "b",
                    NodeRole::ButlerCandidate => "k",
                    NodeRole::Ordinary => "o",
                };
                format!("{role}{}", n.id)
            })
            .collect()
    }

    /// A fresh registration, a publication under an earlier registration,
    /// or a replay of an earlier registration.
    fn client_tx(&mut self) -> Transaction {
        let roll: f64 = self.rng.random();
        if !self.clients.is_empty() && roll < 0.35 {
            let i = self.rng.random_range(0..self.clients.len());
            let (key, prefix) = &self.clients[i];
            let name = prefix
                .join(&[format!("r{}", self.txs_submitted)])
                .expect("valid label");
            let locator =
                Identifier::content(vec!["loc".into(), format!("n{i}")]).expect("valid locator");
            let rec = sign_record(
                name,
                Digest::of(&self.txs_submitted.to_be_bytes()),
                locator,
                key,
            )
            .expect("content name");
            return Transaction::publish(rec, key);
        }
        if !self.clients.is_empty() && roll < 0.45 {
            let i = self.rng.random_range(0..self.clients.len());
            let (key, prefix) = &self.clients[i];
            return Transaction::register(prefix.clone(), &key.public_key().to_hex(), key);
        }
        let k = self.clients.len();
        let key = KeyPair::derive(&format!("pov-client/{}/{k}", self.config.seed));
        let prefix =
            Identifier::content(vec!["org".into(), format!("p{k}")]).expect("valid prefix");
        let tx = Transaction::register(prefix.clone(), &format!("real{k}"), &key);
        self.clients.push((key, prefix));
        tx
    }

    fn submit_to_butlers(&mut self, tx: Transaction) {
        self.txs_submitted += 1;
        for i in 0..self.world.node_count() {
            if self.genesis.role_of(self.world.node(i).id) != NodeRole::Commissioner {
                self.world.node_mut(i).submit(tx.clone());
            }
        }
    }

    fn honest_done(&self) -> bool {
        self.world
            .nodes()
            .iter()
            .all(|n| n.chain.height() >= self.config.blocks)
    }

    pub fn run(&mut self) -> PovReport {
        let max_ticks = self.config.blocks.max(1)
            * 20
            * (self.config.timeout + self.config.latency + self.config.jitter);
        let tx_every = self.config.tx_every.max(1);
        let mut finished = false;
        while self.world.now() < max_ticks {
            if self.honest_done() {
                finished = true;
                break;
            }
            if self.world.now() % tx_every == 0 {
                let tx = self.client_tx();
                self.submit_to_butlers(tx);
            }
            self.world.step();
        }
        self.report(finished || self.honest_done())
    }

    pub fn report(&self, finished: bool) -> PovReport {
        let chains: Vec<Vec<Digest>> = self
            .world
            .nodes()
            .iter()
            .map(|n| n.chain.blocks().iter().map(Block::hash).collect())
            .collect();
        let forkless = chains_forkless(&chains);
        let reference = &self.world.node(0).chain;
        let min_votes = self
            .world
            .nodes()
            .iter()
            .flat_map(|n| n.chain.blocks())
            .map(|b| reference.valid_votes(b))
            .min()
            .unwrap_or(0);
        let longest = self
            .world
            .nodes()
            .iter()
            .max_by_key(|n| n.chain.height())
            .expect("at least one node");
        PovReport {
            heights: self
                .world
                .nodes()
                .iter()
                .map(|n| n.chain.height())
                .collect(),
            forkless,
            min_votes,
            committee: self.genesis.committee_size(),
            ticks: self.world.now(),
            finished,
            txs_submitted: self.txs_submitted,
            txs_committed: longest
                .chain
                .blocks()
                .iter()
                .map(|b| b.txs.len() as u64)
                .sum(),
            txs_rejected: longest
                .chain
                .blocks()
                .iter()
                .map(|b| b.rejected.len() as u64)
                .sum(),
            proposal_resends: self
                .world
                .nodes()
                .iter()
                .map(|n| n.counter("proposal_resends"))
                .sum(),
        }
    }

    pub fn metrics_csv(&self) -> String {
        self.world.metrics_csv(&self.node_names())
    }
}

/// True when, for every pair, one hash sequence is a prefix of the other.
pub fn chains_forkless(chains: &[Vec<Digest>]) -> bool {
    chains.iter().enumerate().all(|(i, a)| {
        chains[i + 1..].iter().all(|b| {
            let n = a.len().min(b.len());
            a[..n] == b[..n]
        })
    })
}

pub fn run_pov(config: PovConfig) -> Result<(PovReport, PovNetwork), GenesisError> {
    let mut net = PovNetwork::new(config)?;
    let report = net.run();
    Ok((report, net))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n: u8) -> Digest {
        Digest::of(&[n])
    }

    #[test]
    fn prefix_check() {
        assert!(chains_forkless(&[vec![d(1), d(2)], vec![d(1)], vec![]]));
        assert!(!chains_forkless(&[vec![d(1), d(2)], vec![d(1), d(3)]]));
        assert!(!chains_forkless(&[vec![d(1)], vec![d(2), d(3)]]));
    }

    #[test]
    fn short_run_commits_and_agrees() {
        let cfg = PovConfig {
            blocks: 30,
            ..PovConfig::default()
        };
        let (r, _) = run_pov(cfg).unwrap();
        assert!(r.finished, "{r:?}");
        assert!(r.forkless);
        assert!(r.heights.iter().all(|h| *h >= 30));
        assert!(r.min_votes * 2 > r.committee);
        assert!(r.txs_committed > 0);
    }

    #[test]
    fn too_many_silent_commissioners_halts() {
        let cfg = PovConfig {
            blocks: 5,
            silent: 3,
            ..PovConfig::default()
        };
        let (r, _) = run_pov(cfg).unwrap();
        assert!(!r.finished);
        assert!(r.heights.iter().all(|h| *h == 0));
    }

    #[test]
    fn same_seed_same_metrics() {
        let cfg = PovConfig {
            blocks: 20,
            silent: 1,
            seed: 9,
            ..PovConfig::default()
        };
        let (_, a) = run_pov(cfg.clone()).unwrap();
        let (_, b) = run_pov(cfg).unwrap();
        assert_eq!(a.metrics_csv(), b.metrics_csv());
    }
}
