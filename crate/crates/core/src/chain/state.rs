use std::collections::{BTreeMap, BTreeSet};

use super::block::supersede_payload;
use super::{Approval, Block, Genesis, NodeId, PovError, Rejection, Transaction, Vote};
use crate::crypto::{Digest, KeyPair, Signer, Verifier};
use crate::data::OnChainIndex;
use crate::identifier::Identifier;
use crate::record::ResourceRecord;

/// Strictly more than half of the committee.
pub fn is_majority(votes: usize, committee: usize) -> bool {
    2 * votes > committee
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermState {
    pub term_no: u64,
    pub butlers: Vec<NodeId>,
    pub candidates: Vec<NodeId>,
    pub tallies: BTreeMap<NodeId, u64>,
    pub blocks_this_term: u64,
}

impl TermState {
    fn initial(genesis: &Genesis) -> Self {
        let butlers: Vec<NodeId> = genesis.butlers.iter().map(|m| m.id).collect();
        let candidates: Vec<NodeId> = genesis.candidates.iter().map(|m| m.id).collect();
        let tallies = butlers
            .iter()
            .chain(&candidates)
            .map(|&id| (id, 0))
            .collect();
        Self {
            term_no: 0,
            butlers,
            candidates,
            tallies,
            blocks_this_term: 0,
        }
    }

    /// Top `count` of the pool by tally, ties to the lowest id.
    pub fn elect(&self, count: usize) -> TermState {
        let mut pool: Vec<(NodeId, u64)> = self.tallies.iter().map(|(&id, &t)| (id, t)).collect();
        pool.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let split = count.min(pool.len());
        let mut butlers: Vec<NodeId> = pool[..split].iter().map(|p| p.0).collect();
        let mut candidates: Vec<NodeId> = pool[split..].iter().map(|p| p.0).collect();
        butlers.sort_unstable();
        candidates.sort_unstable();
        TermState {
            term_no: self.term_no + 1,
            tallies: pool.iter().map(|p| (p.0, 0)).collect(),
            butlers,
            candidates,
            blocks_this_term: 0,
        }
    }
}

/// A node's view of the committed chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    genesis: Genesis,
    genesis_hash: Digest,
    blocks: Vec<Block>,
    term: TermState,
    index: OnChainIndex,
}

impl ChainState {
    pub fn new(genesis: Genesis) -> Self {
        Self {
            genesis_hash: genesis.hash(),
            term: TermState::initial(&genesis),
            genesis,
            blocks: Vec::new(),
            index: OnChainIndex::default(),
        }
    }

    /// Replays committed blocks from genesis.
    pub fn from_blocks(genesis: Genesis, blocks: Vec<Block>) -> Result<Self, PovError> {
        let mut s = Self::new(genesis);
        for b in blocks {
            s.commit_block(b)?;
        }
        Ok(s)
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().map_or(self.genesis_hash, Block::hash)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn term(&self) -> &TermState {
        &self.term
    }

    pub fn index(&self) -> &OnChainIndex {
        &self.index
    }

    /// Round-robin over the current butler list by height.
    pub fn scheduled_producer(&self, height: u64) -> NodeId {
        let b = &self.term.butlers;
        b[(height % b.len() as u64) as usize]
    }

    /// Assembles the next block from `pending`. Invalid transactions are
    /// left out and listed as rejections.
    pub fn produce_block(
        &self,
        butler: NodeId,
        pending: &[Transaction],
    ) -> Result<Block, PovError> {
        let height = self.height() + 1;
        if self.scheduled_producer(height) != butler {
            return Err(PovError::NotScheduled(butler));
        }
        let mut scratch = if pending.is_empty() {
            None
        } else {
            Some(self.index.clone())
        };
        let mut txs = Vec::new();
        let mut rejected = Vec::new();
        for tx in pending {
            let scratch = scratch.as_mut().expect("non-empty pending");
            match scratch.check_tx(tx, &self.genesis) {
                Ok(()) => {
                    scratch.apply_tx(tx, height);
                    txs.push(tx.clone());
                }
                Err(reason) => rejected.push(Rejection {
                    tx: tx.digest(),
                    reason,
                }),
            }
        }
        Ok(Block {
            height,
            prev_hash: self.tip_hash(),
            producer: butler,
            term_no: self.term.term_no,
            txs,
            rejected,
            votes: Vec::new(),
        })
    }

    /// Everything a commissioner checks before voting, votes excluded.
    pub fn check_block(&self, block: &Block) -> Result<(), PovError> {
        if block.height != self.height() + 1 || block.prev_hash != self.tip_hash() {
            return Err(PovError::BadChainLink);
        }
        if block.term_no != self.term.term_no {
            return Err(PovError::WrongTerm);
        }
        if self.scheduled_producer(block.height) != block.producer {
            return Err(PovError::NotScheduled(block.producer));
        }
        let mut scratch = self.index.clone();
        for tx in &block.txs {
            scratch
                .check_tx(tx, &self.genesis)
                .map_err(PovError::InvalidTransaction)?;
            scratch.apply_tx(tx, block.height);
        }
        Ok(())
    }

    /// Distinct committee members whose vote signature over the block hash
    /// verifies.
    pub fn valid_votes(&self, block: &Block) -> usize {
        let msg = Vote::signed_bytes(&block.hash());
        let mut voters = BTreeSet::new();
        for v in &block.votes {
            if voters.contains(&v.voter) {
                continue;
            }
            if let Some(key) = self.genesis.commissioner_key(v.voter) {
                if key.verify(&msg, &v.signature) {
                    voters.insert(v.voter);
                }
            }
        }
        voters.len()
    }

    /// Appends `block` if it links to the tip and carries a majority of
    /// valid votes, then folds it into the index and credits the producer.
    pub fn commit_block(&mut self, block: Block) -> Result<(), PovError> {
        if block.height != self.height() + 1 || block.prev_hash != self.tip_hash() {
            return Err(PovError::BadChainLink);
        }
        let valid = self.valid_votes(&block);
        let committee = self.genesis.committee_size();
        if !is_majority(valid, committee) {
            return Err(PovError::InsufficientVotes { valid, committee });
        }
        if block.term_no != self.term.term_no {
            return Err(PovError::WrongTerm);
        }
        self.index.fold_block(&block, &self.genesis);
        *self.term.tallies.entry(block.producer).or_insert(0) += valid as u64;
        self.term.blocks_this_term += 1;
        self.blocks.push(block);
        if self.term.blocks_this_term >= self.genesis.term_length {
            self.end_term_election()?;
        }
        Ok(())
    }

    pub fn term_over(&self) -> bool {
        self.term.blocks_this_term >= self.genesis.term_length
    }

    /// Replaces the butler set with the top tallies of the finished term.
    pub fn end_term_election(&mut self) -> Result<TermState, PovError> {
        if !self.term_over() {
            return Err(PovError::TermNotOver {
                done: self.term.blocks_this_term,
                length: self.genesis.term_length,
            });
        }
        self.term = self.term.elect(self.genesis.butler_count);
        Ok(self.term.clone())
    }

    /// Folds every committed block into a fresh index.
    pub fn rebuild_index(&self) -> OnChainIndex {
        let mut idx = OnChainIndex::default();
        for b in &self.blocks {
            idx.fold_block(b, &self.genesis);
        }
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VoteDecision {
    Vote(Vote),
    Reject(PovError),
}

/// A committee member's signing state. Votes for at most one block hash
/// per height.
#[derive(Debug, Clone)]
pub struct Commissioner {
    pub id: NodeId,
    key: KeyPair,
    voted: BTreeMap<u64, Digest>,
}

impl Commissioner {
    pub fn new(id: NodeId, key: KeyPair) -> Self {
        Self {
            id,
            key,
            voted: BTreeMap::new(),
        }
    }

    pub fn vote_on_block(&mut self, state: &ChainState, block: &Block) -> VoteDecision {
        if state.genesis().commissioner_key(self.id) != Some(&self.key.public_key()) {
            return VoteDecision::Reject(PovError::NotScheduled(self.id));
        }
        if let Err(e) = state.check_block(block) {
            return VoteDecision::Reject(e);
        }
        let hash = block.hash();
        match self.voted.get(&block.height) {
            Some(h) if *h != hash => return VoteDecision::Reject(PovError::BadChainLink),
            _ => {}
        }
        self.voted.insert(block.height, hash);
        // old heights can no longer be proposed against this node's tip
        let floor = block.height.saturating_sub(16);
        self.voted = self.voted.split_off(&floor);
        VoteDecision::Vote(Vote {
            voter: self.id,
            signature: self.key.sign(&Vote::signed_bytes(&hash)),
        })
    }

    pub fn approve_supersede(
        &self,
        name: &Identifier,
        replacement: Option<&ResourceRecord>,
    ) -> Approval {
        Approval {
            commissioner: self.id,
            signature: self.key.sign(&supersede_payload(name, replacement)),
        }
    }
}
