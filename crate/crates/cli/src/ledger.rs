//! A single-process ledger kept in a state directory.
//!
//! Every submission runs one full Proof-of-Vote round against an
//! in-process committee: the scheduled butler assembles a block, every
//! commissioner votes on it, and the block is committed and appended to
//! `chain.tlv`. Resource bytes and full records live in the off-chain
//! store under `store/`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use min_core::chain::{
    Block, ChainState, Commissioner, Genesis, NodeId, Transaction, VoteDecision,
};
use min_core::data::{BlobStore, DataError, DirStore};
use min_core::{sign_record, Digest, Identifier, KeyPair, ResourceRecord, Verifier};

use crate::error::CliError;

pub const LEDGER_LABEL: &str = "ledger";
pub const COMMITTEE: [NodeId; 5] = [0, 1, 2, 3, 4];
pub const BUTLERS: [NodeId; 3] = [5, 6, 7];

pub struct Ledger {
    dir: PathBuf,
    state: ChainState,
    store: DirStore,
    committee: Vec<Commissioner>,
}

/// A verified answer to a query.
#[derive(Debug, Clone)]
pub struct QueryResult {
    pub record: ResourceRecord,
    pub bytes: Vec<u8>,
    pub height: u64,
}

impl Ledger {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CliError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let gpath = dir.join("genesis.txt");
        let genesis = match fs::read_to_string(&gpath) {
            Ok(text) => {
                Genesis::parse(&text).map_err(|e| CliError::Corrupt(format!("genesis: {e}")))?
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let g = Genesis::derived(LEDGER_LABEL, &COMMITTEE, &BUTLERS, &[])
                    .map_err(|e| CliError::Corrupt(format!("genesis: {e}")))?;
                fs::write(&gpath, g.to_text())?;
                g
            }
            Err(e) => return Err(e.into()),
        };
        let blocks = match fs::read(dir.join("chain.tlv")) {
            Ok(buf) => {
                Block::decode_all(&buf).map_err(|e| CliError::Corrupt(format!("chain: {e}")))?
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let committee = genesis
            .committee
            .iter()
            .map(|m| Commissioner::new(m.id, Genesis::derived_key(LEDGER_LABEL, m.id)))
            .collect();
        let state = ChainState::from_blocks(genesis, blocks)
            .map_err(|e| CliError::Corrupt(format!("chain: {e}")))?;
        let store = DirStore::open(dir.join("store"))?;
        Ok(Self {
            dir,
            state,
            store,
            committee,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Runs one round for `tx` and returns the committed block.
    pub fn submit(&mut self, tx: Transaction) -> Result<Block, CliError> {
        let height = self.state.height() + 1;
        let producer = self.state.scheduled_producer(height);
        let mut block = self.state.produce_block(producer, &[tx])?;
        for c in &mut self.committee {
            if let VoteDecision::Vote(v) = c.vote_on_block(&self.state, &block) {
                block.votes.push(v);
            }
        }
        self.state.commit_block(block.clone())?;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("chain.tlv"))?;
        f.write_all(&block.encode())?;
        Ok(block)
    }

    fn submit_checked(&mut self, tx: Transaction) -> Result<Block, CliError> {
        let block = self.submit(tx)?;
        match block.rejected.first() {
            Some(r) => Err(CliError::Rejected(r.reason)),
            None => Ok(block),
        }
    }

    /// Claims `prefix` for `key`; returns the commit height.
    pub fn register(
        &mut self,
        prefix: &Identifier,
        real_id: &str,
        key: &KeyPair,
    ) -> Result<u64, CliError> {
        let tx = Transaction::register(prefix.clone(), real_id, key);
        Ok(self.submit_checked(tx)?.height)
    }

    /// Stores `bytes` off-chain and publishes a signed record for them.
    pub fn publish(
        &mut self,
        name: &Identifier,
        bytes: &[u8],
        locator: &Identifier,
        key: &KeyPair,
    ) -> Result<(ResourceRecord, u64), CliError> {
        let hash = Digest::of(bytes);
        let record =
            sign_record(name.clone(), hash, locator.clone(), key).map_err(CliError::Identifier)?;
        let height = self
            .submit_checked(Transaction::publish(record.clone(), key))?
            .height;
        self.store.put_blob(&hash, bytes)?;
        self.store.put_record(&record)?;
        Ok((record, height))
    }

    /// Resolves `name` on-chain, fetches its bytes and checks the record
    /// signature and content hash.
    pub fn query(&self, name: &Identifier) -> Result<QueryResult, CliError> {
        let index = self.state.index();
        let publication = index
            .publication(name)
            .ok_or_else(|| CliError::NotFound(name.to_string()))?;
        let (_, reg) = index
            .owner_of(name)
            .ok_or_else(|| CliError::NotFound(name.to_string()))?;
        let record = self
            .store
            .record(name)
            .cloned()
            .ok_or_else(|| CliError::NotFound(name.to_string()))?;
        let bytes = match self.store.get_blob(&publication.content_hash) {
            Ok(b) => b,
            Err(DataError::Missing(_)) => return Err(CliError::NotFound(name.to_string())),
            Err(DataError::HashMismatch { .. }) => {
                return Err(CliError::Integrity(name.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let bound = record.content_hash == publication.content_hash
            && record.publisher == publication.publisher
            && record.publisher == reg.key.publisher_id();
        if !bound || !record.verify_with_content(&reg.key, &bytes) {
            return Err(CliError::Integrity(name.to_string()));
        }
        Ok(QueryResult {
            record,
            bytes,
            height: publication.height,
        })
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        for b in self.state.blocks() {
            s.push_str(&b.dump_line());
            s.push('\n');
        }
        s
    }
}

/// Reads a hex key seed from `path`, creating one derived from `label`
/// when the file does not exist yet.
pub fn load_or_create_key(path: &Path, label: &str) -> Result<KeyPair, CliError> {
    match fs::read_to_string(path) {
        Ok(text) => {
            let raw = hex_seed(text.trim())
                .ok_or_else(|| CliError::Usage(format!("{}: not a key file", path.display())))?;
            Ok(KeyPair::from_seed(raw))
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let key = KeyPair::derive(label);
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, format!("{}\n", Digest(key.seed()).to_hex()))?;
            Ok(key)
        }
        Err(e) => Err(e.into()),
    }
}

fn hex_seed(s: &str) -> Option<[u8; 32]> {
    s.parse::<Digest>().ok().map(|d| d.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use min_core::chain::TxReject;
    use min_core::Signer;

    fn id(s: &str) -> Identifier {
        s.parse().unwrap()
    }

    #[test]
    fn register_publish_query_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let alice = KeyPair::derive("alice");
        let mut l = Ledger::open(dir.path()).unwrap();
        l.register(&id("/pkusz"), "alice", &alice).unwrap();
        l.publish(&id("/pkusz/v1"), b"video bytes", &id("/loc/n1"), &alice)
            .unwrap();
        drop(l);
        let l = Ledger::open(dir.path()).unwrap();
        let q = l.query(&id("/pkusz/v1")).unwrap();
        assert_eq!(q.bytes, b"video bytes");
        assert_eq!(l.state().height(), 2);
    }

    #[test]
    fn second_registration_is_prefix_taken() {
        let dir = tempfile::tempdir().unwrap();
        let mut l = Ledger::open(dir.path()).unwrap();
        l.register(&id("/a"), "x", &KeyPair::derive("x")).unwrap();
        let e = l
            .register(&id("/a"), "y", &KeyPair::derive("y"))
            .unwrap_err();
        assert_eq!(e.kind(), "PrefixTaken");
    }

    #[test]
    fn foreign_prefix_is_audited() {
        let dir = tempfile::tempdir().unwrap();
        let mut l = Ledger::open(dir.path()).unwrap();
        l.register(&id("/a"), "x", &KeyPair::derive("x")).unwrap();
        let e = l
            .publish(
                &id("/a/doc"),
                b"z",
                &id("/loc/n"),
                &KeyPair::derive("mallory"),
            )
            .unwrap_err();
        assert_eq!(e.kind(), "NotRegistered");
        let audit = l.state().index().audit();
        assert_eq!(audit.len(), 1);
        assert_eq!(audit[0].reason, TxReject::NotRegistered);
    }

    #[test]
    fn tampered_blob_fails_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let k = KeyPair::derive("k");
        let mut l = Ledger::open(dir.path()).unwrap();
        l.register(&id("/a"), "k", &k).unwrap();
        l.publish(&id("/a/f"), b"original", &id("/loc/n"), &k)
            .unwrap();
        let blob = dir
            .path()
            .join("store/blobs")
            .join(Digest::of(b"original").to_hex());
        fs::write(blob, b"forged").unwrap();
        assert_eq!(l.query(&id("/a/f")).unwrap_err().kind(), "IntegrityFailure");
        assert_eq!(l.query(&id("/a/missing")).unwrap_err().kind(), "NotFound");
    }

    #[test]
    fn key_file_is_created_then_reused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("keys/alice.key");
        let a = load_or_create_key(&p, "seed-a").unwrap();
        let b = load_or_create_key(&p, "other").unwrap();
        assert_eq!(a.public_key(), b.public_key());
    }
}
