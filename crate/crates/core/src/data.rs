//! On-chain index and off-chain blob storage.
//!
//! The index is the minimal routing state folded from committed blocks.
//! Full records and content bytes live off-chain, keyed by content hash.
//!
//! [`DirStore`] layout:
//!
//! ```text
//! <root>/blobs/<sha256-hex>   content bytes
//! <root>/records.tlv          append-only journal of record TLVs
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::chain::{supersede_payload, Block, Genesis, Transaction, TxKind, TxReject};
use crate::crypto::{Digest, PublicKey, PublisherId, Verifier};
use crate::identifier::{IdKind, Identifier};
use crate::record::ResourceRecord;
use crate::tlv::{TlvError, TlvReader, TlvWriter};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    pub publisher: PublisherId,
    pub key: PublicKey,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publication {
    pub content_hash: Digest,
    pub locator: Identifier,
    pub publisher: PublisherId,
    pub height: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AuditStage {
    /// Left out of the block by its producer.
    Producer,
    /// Included in a committed block but skipped while folding.
    Fold,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub height: u64,
    pub tx: Digest,
    pub reason: TxReject,
    pub stage: AuditStage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OnChainIndex {
    registry: BTreeMap<Identifier, Registration>,
    publications: BTreeMap<Identifier, Publication>,
    audit: Vec<AuditEntry>,
    applied: u64,
}

impl OnChainIndex {
    pub fn registration(&self, prefix: &Identifier) -> Option<&Registration> {
        self.registry.get(prefix)
    }

    pub fn registrations(&self) -> impl Iterator<Item = (&Identifier, &Registration)> {
        self.registry.iter()
    }

    pub fn publication(&self, name: &Identifier) -> Option<&Publication> {
        self.publications.get(name)
    }

    pub fn publications(&self) -> impl Iterator<Item = (&Identifier, &Publication)> {
        self.publications.iter()
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// Transactions applied so far.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    /// The registration covering `name`, longest prefix first.
    pub fn owner_of(&self, name: &Identifier) -> Option<(&Identifier, &Registration)> {
        (0..=name.depth())
            .rev()
            .find_map(|n| self.registry.get_key_value(&name.truncated(n)))
    }

    fn prefix_conflicts(&self, prefix: &Identifier) -> bool {
        if self.owner_of(prefix).is_some() {
            return true;
        }
        if prefix.kind() == IdKind::Ip {
            return self
                .registry
                .keys()
                .any(|k| prefix.is_prefix_of_same_kind(k));
        }
        self.registry
            .range(prefix..)
            .next()
            .is_some_and(|(k, _)| prefix.is_prefix_of_same_kind(k))
    }

    pub fn check_tx(&self, tx: &Transaction, genesis: &Genesis) -> Result<(), TxReject> {
        if !tx.signature_valid() {
            return Err(TxReject::BadSignature);
        }
        match &tx.kind {
            TxKind::RegisterUser { prefix, key, .. } => {
                if *key != tx.submitter {
                    return Err(TxReject::BadSignature);
                }
                if self.prefix_conflicts(prefix) {
                    return Err(TxReject::PrefixTaken);
                }
                Ok(())
            }
            TxKind::PublishResource(rec) => {
                match self.owner_of(&rec.name) {
                    Some((_, reg)) if reg.key == tx.submitter => {}
                    _ => return Err(TxReject::NotRegistered),
                }
                if !rec.verify(&tx.submitter) {
                    return Err(TxReject::BadRecord);
                }
                if self.publications.contains_key(&rec.name) {
                    return Err(TxReject::AlreadyPublished);
                }
                Ok(())
            }
            TxKind::Supersede {
                name,
                replacement,
                approvals,
            } => {
                if !self.publications.contains_key(name) {
                    return Err(TxReject::UnknownName);
                }
                if let Some(rec) = replacement {
                    let owner = self.owner_of(name).map(|(_, r)| r);
                    let ok = rec.name == *name
                        && owner
                            .is_some_and(|o| o.publisher == rec.publisher && rec.verify(&o.key));
                    if !ok {
                        return Err(TxReject::BadRecord);
                    }
                }
                let payload = supersede_payload(name, replacement.as_ref());
                let approvers: BTreeSet<_> = approvals
                    .iter()
                    .filter(|a| {
                        genesis
                            .commissioner_key(a.commissioner)
                            .is_some_and(|k| k.verify(&payload, &a.signature))
                    })
                    .map(|a| a.commissioner)
                    .collect();
                if !crate::chain::is_majority(approvers.len(), genesis.committee_size()) {
                    return Err(TxReject::InsufficientApprovals);
                }
                Ok(())
            }
        }
    }

    /// Applies a transaction that passed [`check_tx`](Self::check_tx).
    pub fn apply_tx(&mut self, tx: &Transaction, height: u64) {
        match &tx.kind {
            TxKind::RegisterUser { prefix, key, .. } => {
                self.registry.insert(
                    prefix.clone(),
                    Registration {
                        publisher: key.publisher_id(),
                        key: *key,
                        height,
                    },
                );
            }
            TxKind::PublishResource(rec) => {
                self.publications
                    .insert(rec.name.clone(), Self::publication_of(rec, height));
            }
            TxKind::Supersede {
                name, replacement, ..
            } => match replacement {
                Some(rec) => {
                    self.publications
                        .insert(name.clone(), Self::publication_of(rec, height));
                }
                None => {
                    self.publications.remove(name);
                }
            },
        }
        self.applied += 1;
    }

    fn publication_of(rec: &ResourceRecord, height: u64) -> Publication {
        Publication {
            content_hash: rec.content_hash,
            locator: rec.locator.clone(),
            publisher: rec.publisher,
            height,
        }
    }

    /// Applies a committed block in transaction order. Invalid transactions
    /// are skipped and audited, as are the producer's on-chain rejections.
    pub fn fold_block(&mut self, block: &Block, genesis: &Genesis) {
        for rj in &block.rejected {
            self.audit.push(AuditEntry {
                height: block.height,
                tx: rj.tx,
                reason: rj.reason,
                stage: AuditStage::Producer,
            });
        }
        for tx in &block.txs {
            match self.check_tx(tx, genesis) {
                Ok(()) => self.apply_tx(tx, block.height),
                Err(reason) => self.audit.push(AuditEntry {
                    height: block.height,
                    tx: tx.digest(),
                    reason,
                    stage: AuditStage::Fold,
                }),
            }
        }
    }

    /// Sorted text dump, one entry per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (p, r) in &self.registry {
            writeln!(s, "reg {p} {} {}", r.publisher, r.height).unwrap();
        }
        for (n, p) in &self.publications {
            writeln!(s, "pub {n} {} {} {}", p.content_hash, p.locator, p.height).unwrap();
        }
        let mut audit: Vec<_> = self.audit.iter().collect();
        audit.sort_by_key(|a| (a.height, a.stage, a.tx));
        for a in audit {
            let stage = match a.stage {
                AuditStage::Producer => "producer",
                AuditStage::Fold => "fold",
            };
            writeln!(
                s,
                "audit {} {stage} {} {}",
                a.height,
                a.tx,
                a.reason.as_str()
            )
            .unwrap();
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("content hash mismatch: expected {expected}, got {actual}")]
    HashMismatch { expected: Digest, actual: Digest },
    #[error("missing blob {0}")]
    Missing(Digest),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("corrupt journal: {0}")]
    Corrupt(#[from] TlvError),
}

fn check_hash(hash: &Digest, bytes: &[u8]) -> Result<(), DataError> {
    let actual = Digest::of(bytes);
    if actual != *hash {
        return Err(DataError::HashMismatch {
            expected: *hash,
            actual,
        });
    }
    Ok(())
}

/// Off-chain storage for content bytes and full records.
pub trait BlobStore {
    fn put_blob(&mut self, hash: &Digest, bytes: &[u8]) -> Result<(), DataError>;
    fn get_blob(&self, hash: &Digest) -> Result<Vec<u8>, DataError>;
    fn has_blob(&self, hash: &Digest) -> bool;
    fn put_record(&mut self, record: &ResourceRecord) -> Result<(), DataError>;
    fn record(&self, name: &Identifier) -> Option<&ResourceRecord>;

    /// Published names whose content is not held here.
    fn missing(&self, index: &OnChainIndex) -> Vec<Identifier> {
        index
            .publications()
            .filter(|(_, p)| !self.has_blob(&p.content_hash))
            .map(|(n, _)| n.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    blobs: BTreeMap<Digest, Vec<u8>>,
    records: BTreeMap<Identifier, ResourceRecord>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BlobStore for MemoryStore {
    fn put_blob(&mut self, hash: &Digest, bytes: &[u8]) -> Result<(), DataError> {
        check_hash(hash, bytes)?;
        self.blobs.insert(*hash, bytes.to_vec());
        Ok(())
    }

    fn get_blob(&self, hash: &Digest) -> Result<Vec<u8>, DataError> {
        self.blobs
            .get(hash)
            .cloned()
            .ok_or(DataError::Missing(*hash))
    }

    fn has_blob(&self, hash: &Digest) -> bool {
        self.blobs.contains_key(hash)
    }

    fn put_record(&mut self, record: &ResourceRecord) -> Result<(), DataError> {
        self.records.insert(record.name.clone(), record.clone());
        Ok(())
    }

    fn record(&self, name: &Identifier) -> Option<&ResourceRecord> {
        self.records.get(name)
    }
}

/// Directory-backed store.
#[derive(Debug)]
pub struct DirStore {
    root: PathBuf,
    records: BTreeMap<Identifier, ResourceRecord>,
}

impl DirStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, DataError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("blobs"))?;
        let mut records = BTreeMap::new();
        match fs::read(root.join("records.tlv")) {
            Ok(buf) => {
                let mut r = TlvReader::new(&buf);
                while !r.is_empty() {
                    let rec = ResourceRecord::read_from(&mut r)?;
                    records.insert(rec.name.clone(), rec);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(Self { root, records })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_path(&self, hash: &Digest) -> PathBuf {
        self.root.join("blobs").join(hash.to_hex())
    }
}

impl BlobStore for DirStore {
    fn put_blob(&mut self, hash: &Digest, bytes: &[u8]) -> Result<(), DataError> {
        check_hash(hash, bytes)?;
        let path = self.blob_path(hash);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn get_blob(&self, hash: &Digest) -> Result<Vec<u8>, DataError> {
        match fs::read(self.blob_path(hash)) {
            Ok(b) => {
                check_hash(hash, &b)?;
                Ok(b)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(DataError::Missing(*hash)),
            Err(e) => Err(e.into()),
        }
    }

    fn has_blob(&self, hash: &Digest) -> bool {
        self.blob_path(hash).is_file()
    }

    fn put_record(&mut self, record: &ResourceRecord) -> Result<(), DataError> {
        let mut w = TlvWriter::new();
        record.write_to(&mut w);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("records.tlv"))?;
        f.write_all(w.as_slice())?;
        self.records.insert(record.name.clone(), record.clone());
        Ok(())
    }

    fn record(&self, name: &Identifier) -> Option<&ResourceRecord> {
        self.records.get(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Approval;
    use crate::crypto::{KeyPair, Signer};
    use crate::record::sign_record;

    fn id(s: &str) -> Identifier {
        s.parse().unwrap()
    }

    fn genesis() -> Genesis {
        Genesis::derived("data", &[0, 1, 2], &[9], &[]).unwrap()
    }

    fn block(height: u64, txs: Vec<Transaction>) -> Block {
        Block {
            height,
            prev_hash: Digest::of(b""),
            producer: 9,
            term_no: 0,
            txs,
            rejected: vec![],
            votes: vec![],
        }
    }

    fn record(name: &str, body: &[u8], key: &KeyPair) -> ResourceRecord {
        sign_record(id(name), Digest::of(body), id("/ndr/node1"), key).unwrap()
    }

    #[test]
    fn empty_block_leaves_index_unchanged() {
        let mut idx = OnChainIndex::default();
        idx.fold_block(&block(1, vec![]), &genesis());
        assert_eq!(idx, OnChainIndex::default());
    }

    #[test]
    fn register_then_publish() {
        let alice = KeyPair::derive("alice");
        let rec = record("/pkusz/v1", b"v1", &alice);
        let mut idx = OnChainIndex::default();
        idx.fold_block(
            &block(
                1,
                vec![
                    Transaction::register(id("/pkusz"), "", &alice),
                    Transaction::publish(rec.clone(), &alice),
                ],
            ),
            &genesis(),
        );
        assert_eq!(
            idx.registration(&id("/pkusz")).unwrap().publisher,
            alice.publisher_id()
        );
        let p = idx.publication(&id("/pkusz/v1")).unwrap();
        assert_eq!((p.content_hash, p.height), (rec.content_hash, 1));
        assert!(idx.audit().is_empty());
        assert_eq!(idx.applied(), 2);
    }

    #[test]
    fn unregistered_publish_audited() {
        let alice = KeyPair::derive("alice");
        let bob = KeyPair::derive("bob");
        let mut idx = OnChainIndex::default();
        let txs = vec![
            Transaction::register(id("/pkusz"), "", &alice),
            Transaction::publish(record("/gdut/x", b"x", &alice), &alice),
            Transaction::publish(record("/pkusz/y", b"y", &bob), &bob),
            Transaction::register(id("/pkusz/sub"), "", &bob),
        ];
        idx.fold_block(&block(4, txs.clone()), &genesis());
        let reasons: Vec<_> = idx.audit().iter().map(|a| a.reason).collect();
        assert_eq!(
            reasons,
            vec![
                TxReject::NotRegistered,
                TxReject::NotRegistered,
                TxReject::PrefixTaken
            ]
        );
        // audit completeness
        assert_eq!(idx.applied() as usize + idx.audit().len(), txs.len());
        assert!(idx.publications().next().is_none());
    }

    #[test]
    fn ancestor_registration_conflicts() {
        let alice = KeyPair::derive("alice");
        let bob = KeyPair::derive("bob");
        let mut idx = OnChainIndex::default();
        idx.fold_block(
            &block(1, vec![Transaction::register(id("/a/b"), "", &alice)]),
            &genesis(),
        );
        assert_eq!(
            idx.check_tx(&Transaction::register(id("/a"), "", &bob), &genesis()),
            Err(TxReject::PrefixTaken)
        );
        assert_eq!(
            idx.check_tx(&Transaction::register(id("/a/c"), "", &bob), &genesis()),
            Ok(())
        );
        assert_eq!(
            idx.check_tx(&Transaction::register(id("/ab"), "", &bob), &genesis()),
            Ok(())
        );
        idx.fold_block(
            &block(
                2,
                vec![Transaction::register(id("ip:10.0.0.0/8"), "", &alice)],
            ),
            &genesis(),
        );
        assert_eq!(
            idx.check_tx(
                &Transaction::register(id("ip:10.1.0.0/16"), "", &bob),
                &genesis()
            ),
            Err(TxReject::PrefixTaken)
        );
        assert_eq!(
            idx.check_tx(
                &Transaction::register(id("ip:0.0.0.0/0"), "", &bob),
                &genesis()
            ),
            Err(TxReject::PrefixTaken)
        );
    }

    #[test]
    fn forged_tx_rejected() {
        let alice = KeyPair::derive("alice");
        let mut tx = Transaction::register(id("/x"), "", &alice);
        tx.signature[0] ^= 1;
        assert_eq!(
            OnChainIndex::default().check_tx(&tx, &genesis()),
            Err(TxReject::BadSignature)
        );
    }

    #[test]
    fn supersede_replaces_record() {
        let g = genesis();
        let alice = KeyPair::derive("alice");
        let v1 = record("/pkusz/v", b"1", &alice);
        let v2 = record("/pkusz/v", b"2", &alice);
        let mut idx = OnChainIndex::default();
        idx.fold_block(
            &block(
                1,
                vec![
                    Transaction::register(id("/pkusz"), "", &alice),
                    Transaction::publish(v1, &alice),
                ],
            ),
            &g,
        );
        let approvals: Vec<Approval> = (0..2)
            .map(|c| Approval {
                commissioner: c,
                signature: Genesis::derived_key("data", c)
                    .sign(&supersede_payload(&v2.name, Some(&v2))),
            })
            .collect();
        let tx = Transaction::new(
            TxKind::Supersede {
                name: v2.name.clone(),
                replacement: Some(v2.clone()),
                approvals,
            },
            &alice,
        );
        idx.fold_block(&block(2, vec![tx]), &g);
        assert_eq!(
            idx.publication(&v2.name).unwrap().content_hash,
            v2.content_hash
        );
    }

    #[test]
    fn rebuild_is_deterministic() {
        let g = genesis();
        let alice = KeyPair::derive("alice");
        let blocks: Vec<Block> = (1..20)
            .map(|h| {
                let p = format!("/p{}", h % 5);
                block(
                    h,
                    vec![
                        Transaction::register(id(&p), "", &alice),
                        Transaction::publish(
                            record(&format!("{p}/r{h}"), &h.to_be_bytes(), &alice),
                            &alice,
                        ),
                    ],
                )
            })
            .collect();
        let fold = || {
            let mut i = OnChainIndex::default();
            blocks.iter().for_each(|b| i.fold_block(b, &g));
            i
        };
        let (a, b) = (fold(), fold());
        assert_eq!(a, b);
        assert_eq!(a.dump(), b.dump());
        assert_eq!(a.applied() as usize + a.audit().len(), 38);
    }

    fn store_contract(store: &mut dyn BlobStore) {
        let body = b"hello world".to_vec();
        let h = Digest::of(&body);
        store.put_blob(&h, &body).unwrap();
        assert_eq!(store.get_blob(&h).unwrap(), body);
        let unknown = Digest::of(b"nope");
        assert!(matches!(store.get_blob(&unknown), Err(DataError::Missing(d)) if d == unknown));
        assert!(matches!(
            store.put_blob(&unknown, &body),
            Err(DataError::HashMismatch { .. })
        ));
        assert!(!store.has_blob(&unknown));
        let empty = Digest::of(b"");
        store.put_blob(&empty, b"").unwrap();
        assert_eq!(store.get_blob(&empty).unwrap(), b"");
    }

    #[test]
    fn memory_store() {
        store_contract(&mut MemoryStore::new());
    }

    #[test]
    fn dir_store_persists() {
        let dir = tempfile::tempdir().unwrap();
        let alice = KeyPair::derive("alice");
        let rec = record("/pkusz/v1", b"abc", &alice);
        {
            let mut s = DirStore::open(dir.path()).unwrap();
            store_contract(&mut s);
            s.put_blob(&rec.content_hash, b"abc").unwrap();
            s.put_record(&rec).unwrap();
        }
        let s = DirStore::open(dir.path()).unwrap();
        assert_eq!(s.record(&rec.name), Some(&rec));
        assert_eq!(s.get_blob(&rec.content_hash).unwrap(), b"abc");
        // on-disk corruption is caught on read
        fs::write(
            dir.path().join("blobs").join(rec.content_hash.to_hex()),
            b"abd",
        )
        .unwrap();
        assert!(matches!(
            s.get_blob(&rec.content_hash),
            Err(DataError::HashMismatch { .. })
        ));
    }

    #[test]
    fn missing_content_flagged() {
        let alice = KeyPair::derive("alice");
        let mut idx = OnChainIndex::default();
        let a = record("/p/a", b"a", &alice);
        let b = record("/p/b", b"b", &alice);
        idx.fold_block(
            &block(
                1,
                vec![
                    Transaction::register(id("/p"), "", &alice),
                    Transaction::publish(a.clone(), &alice),
                    Transaction::publish(b.clone(), &alice),
                ],
            ),
            &genesis(),
        );
        let mut s = MemoryStore::new();
        s.put_blob(&a.content_hash, b"a").unwrap();
        assert_eq!(s.missing(&idx), vec![b.name]);
    }
}
