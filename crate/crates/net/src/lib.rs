//! Deterministic network simulation for multi-identifier routers.
//!
//! [`sim`] is the tick-driven link simulator. [`router::MirNode`] is the
//! CCN-style router with the HPT-FIB, recursive domain resolution and
//! optional IP gateway duties; [`ipnode::IpNode`] covers plain IP hosts and
//! routers. [`network::Network`] wires them up from a [`config::Config`],
//! and [`scenario`] runs the interworking transfers on the bundled fixture.

pub mod config;
pub mod fetch;
pub mod gateway;
pub mod ipnode;
pub mod network;
pub mod packet;
pub mod pov_net;
pub mod resolve;
pub mod router;
pub mod scenario;
pub mod sim;
pub mod tables;

pub use config::{Config, ConfigError};
pub use network::{FlowReport, Network, SimNode};
pub use packet::{Data, Frame, Interest, Nack, NackReason, Packet, SimIpDatagram};
pub use router::{MirNode, Role};
pub use scenario::{run_bottleneck, run_scenario, ScenarioError, ScenarioKind, TransferReport};
