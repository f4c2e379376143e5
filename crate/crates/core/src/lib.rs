//! Core building blocks of a multi-identifier network: multi-modal
//! identifiers, signed resource records, the HPT-FIB translation and
//! forwarding table, the Proof-of-Vote ledger with its on-chain index and
//! off-chain blob store, and partition-tolerance analysis.
//!
//! The partition analysis is generic over the floating-point type through
//! [`Scalar`]; the aliases at the crate root pick `f64` or `f32`.

pub mod cap;
pub mod chain;
pub mod crypto;
pub mod data;
pub mod fib;
pub mod identifier;
pub mod record;
pub mod scalar;
pub mod tlv;

pub use crypto::{Digest, KeyPair, PublicKey, PublisherId, Signer, Verifier};
pub use fib::{FaceId, FibAction, HptFib, HptFibEntry};
pub use identifier::{parse_identifier, IdError, IdKind, Identifier, IpPrefix};
pub use record::{sign_record, ResourceRecord};
pub use scalar::Scalar;

pub type Topology = cap::Topology<f64>;
pub type Topology32 = cap::Topology<f32>;
pub type PartitionReport = cap::PartitionReport<f64>;
pub type PartitionReport32 = cap::PartitionReport<f32>;
pub type LevelReport = cap::LevelReport<f64>;
pub type InterLevelEdge = cap::InterLevelEdge<f64>;
