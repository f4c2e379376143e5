//! The five interworking transfer scenarios and the shared-bottleneck
//! experiment, run on the bundled ten-site fixture or any config that
//! uses the same node names.

use std::fmt;
use std::str::FromStr;

use min_core::{Digest, IdKind, Identifier};
use thiserror::Error;

use crate::config::{Config, ConfigError, GatewayDecl, NodeKind};
use crate::network::{pseudorandom, FlowReport, LinkUse, Network};
use crate::sim::Tick;

pub const TEN_SITE: &str = include_str!("../fixtures/ten_site.net");

/// Simulated milliseconds per tick.
pub const TICKS_PER_SECOND: f64 = 1000.0;
pub const MAX_TICKS: Tick = 2_000_000;
pub const SCENARIO_WINDOW: usize = 16;

pub fn ten_site_fixture() -> Config {
    Config::parse(TEN_SITE).expect("bundled fixture parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    IpCcnIp,
    IpCcn,
    CcnIp,
    CcnIpCcn,
    CcnCcn,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::IpCcnIp,
        ScenarioKind::IpCcn,
        ScenarioKind::CcnIp,
        ScenarioKind::CcnIpCcn,
        ScenarioKind::CcnCcn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::IpCcnIp => "IP-CCN-IP",
            ScenarioKind::IpCcn => "IP-CCN",
            ScenarioKind::CcnIp => "CCN-IP",
            ScenarioKind::CcnIpCcn => "CCN-IP-CCN",
            ScenarioKind::CcnCcn => "CCN-CCN",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario unsatisfiable: {0}")]
    Unsatisfiable(String),
    #[error("transfer incomplete: {0}")]
    Incomplete(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub scenario: String,
    pub bytes: u64,
    pub seconds: f64,
    /// Bytes per simulated second.
    pub mean_rate: f64,
    /// Gateways that translated between regimes.
    pub translations: usize,
    pub retransmissions: u64,
    pub source_hash: Digest,
    pub delivered_hash: Digest,
    pub violations: u64,
    pub links: Vec<LinkUse>,
}

impl TransferReport {
    pub const CSV_HEADER: &'static str =
        "scenario,bytes,seconds,mean_rate,translations,retransmissions";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{:.1},{},{}",
            self.scenario,
            self.bytes,
            self.seconds,
            self.mean_rate,
            self.translations,
            self.retransmissions
        )
    }

    pub fn hash_ok(&self) -> bool {
        self.source_hash == self.delivered_hash
    }

    pub fn links_csv(&self) -> String {
        let mut s = String::from("a,b,capacity,bytes_ab,bytes_ba,utilization,peak_tick_bytes\n");
        for l in &self.links {
            s.push_str(&format!(
                "{},{},{},{},{},{:.4},{}\n",
                l.a, l.b, l.capacity, l.bytes[0], l.bytes[1], l.utilization, l.peak_tick_bytes
            ));
        }
        s
    }
}

/// Who serves and who fetches in one scenario.
struct Plan {
    source_node: &'static str,
    source_name: String,
    consumer: &'static str,
    target: String,
    resource: Option<String>,
}

fn need(cfg: &Config, name: &str, ccn: bool) -> Result<(), ScenarioError> {
    match cfg.node(name) {
        Some(n) if n.kind.is_ccn() == ccn => Ok(()),
        Some(_) => Err(ScenarioError::Unsatisfiable(format!(
            "{name} has the wrong node kind"
        ))),
        None => Err(ScenarioError::Unsatisfiable(format!("missing node {name}"))),
    }
}

fn domain_of(cfg: &Config, node: &str) -> Result<Identifier, ScenarioError> {
    cfg.domains
        .iter()
        .find(|d| d.node == node)
        .map(|d| d.path.clone())
        .ok_or_else(|| ScenarioError::Unsatisfiable(format!("{node} has no domain")))
}

fn ip_of(cfg: &Config, node: &str) -> Result<std::net::IpAddr, ScenarioError> {
    cfg.node(node)
        .and_then(|n| n.ip)
        .ok_or_else(|| ScenarioError::Unsatisfiable(format!("{node} has no address")))
}

fn maps(cfg: &Config) -> impl Iterator<Item = (&str, &Identifier, &Identifier)> {
    cfg.gateways.iter().filter_map(|g| match g {
        GatewayDecl::Map {
            gateway,
            key,
            target,
            ..
        } => Some((gateway.as_str(), key, target)),
        _ => None,
    })
}

fn content_under(
    cfg: &Config,
    node: &'static str,
    resource: &str,
) -> Result<Identifier, ScenarioError> {
    domain_of(cfg, node)?
        .child(resource)
        .map_err(|e| ScenarioError::Unsatisfiable(e.to_string()))
}

fn plan(kind: ScenarioKind, cfg: &Config) -> Result<Plan, ScenarioError> {
    const RES: &str = "video";
    Ok(match kind {
        ScenarioKind::CcnCcn => {
            need(cfg, "node10", true)?;
            need(cfg, "gdut", true)?;
            let name = content_under(cfg, "gdut", RES)?;
            Plan {
                source_node: "gdut",
                source_name: name.to_string(),
                consumer: "node10",
                target: name.to_string(),
                resource: None,
            }
        }
        ScenarioKind::CcnIpCcn => {
            need(cfg, "pkusz1", true)?;
            need(cfg, "cuhk", true)?;
            if !cfg
                .gateways
                .iter()
                .any(|g| matches!(g, GatewayDecl::Tunnel { .. }))
            {
                return Err(ScenarioError::Unsatisfiable("no gateway tunnel".into()));
            }
            let name = content_under(cfg, "cuhk", RES)?;
            Plan {
                source_node: "cuhk",
                source_name: name.to_string(),
                consumer: "pkusz1",
                target: name.to_string(),
                resource: None,
            }
        }
        ScenarioKind::IpCcnIp => {
            need(cfg, "host1", false)?;
            need(cfg, "server2", false)?;
            let server = ip_of(cfg, "server2")?;
            let tunnelled = maps(cfg).any(|(_, key, target)| {
                key.ip_prefix()
                    .is_some_and(|p| p.contains(&min_core::IpPrefix::host(server)))
                    && target.components().first().is_some_and(|c| c == "mintun")
            });
            if !tunnelled {
                return Err(ScenarioError::Unsatisfiable(
                    "no tunnel mapping for server2".into(),
                ));
            }
            Plan {
                source_node: "server2",
                source_name: RES.into(),
                consumer: "host1",
                target: server.to_string(),
                resource: Some(RES.into()),
            }
        }
        ScenarioKind::IpCcn => {
            need(cfg, "host1", false)?;
            need(cfg, "gdut", true)?;
            let dom = domain_of(cfg, "gdut")?;
            let vaddr = maps(cfg)
                .find(|(_, key, target)| {
                    key.kind() == IdKind::Ip && target.is_prefix_of_same_kind(&dom)
                })
                .and_then(|(_, key, _)| key.ip_prefix().map(|p| p.addr()))
                .ok_or_else(|| {
                    ScenarioError::Unsatisfiable("no gateway proxies gdut content".into())
                })?;
            Plan {
                source_node: "gdut",
                source_name: dom.child(RES).unwrap().to_string(),
                consumer: "host1",
                target: vaddr.to_string(),
                resource: Some(RES.into()),
            }
        }
        ScenarioKind::CcnIp => {
            need(cfg, "gdut", true)?;
            need(cfg, "server2", false)?;
            let server = ip_of(cfg, "server2")?;
            let prefix = maps(cfg)
                .find(|(_, _, target)| target.ip_prefix().is_some_and(|p| p.addr() == server))
                .map(|(_, key, _)| key.clone())
                .ok_or_else(|| {
                    ScenarioError::Unsatisfiable("no gateway maps a prefix to server2".into())
                })?;
            Plan {
                source_node: "server2",
                source_name: RES.into(),
                consumer: "gdut",
                target: prefix.child(RES).unwrap().to_string(),
                resource: None,
            }
        }
    })
}

/// Runs one scenario with a `size`-byte pseudorandom resource.
pub fn run_scenario(
    kind: ScenarioKind,
    cfg: &Config,
    size: usize,
    seed: u64,
) -> Result<(TransferReport, Network), ScenarioError> {
    let p = plan(kind, cfg)?;
    if cfg.nodes.iter().all(|n| n.kind != NodeKind::Gateway) && kind != ScenarioKind::CcnCcn {
        return Err(ScenarioError::Unsatisfiable("no gateways".into()));
    }
    let mut net = Network::build(cfg, seed)?;
    net.serve(p.source_node, &p.source_name, pseudorandom(size, seed))
        .map_err(ScenarioError::Unsatisfiable)?;
    let flow = net
        .fetch(
            p.consumer,
            &p.target,
            p.resource.as_deref(),
            0,
            SCENARIO_WINDOW,
        )
        .map_err(ScenarioError::Unsatisfiable)?;
    net.run(MAX_TICKS);
    let f = net.flow(flow);
    let source_hash = net.source_digest(p.source_node, &p.source_name).unwrap();
    if !f.complete {
        let why = f
            .failure
            .clone()
            .unwrap_or_else(|| format!("{} of {size} bytes", f.bytes));
        return Err(ScenarioError::Incomplete(why));
    }
    let report = transfer_report(kind.as_str(), &f, source_hash, &net);
    Ok((report, net))
}

fn transfer_report(
    label: &str,
    f: &FlowReport,
    source_hash: Digest,
    net: &Network,
) -> TransferReport {
    let ticks = f.end.unwrap_or(f.start).saturating_sub(f.start).max(1);
    let seconds = ticks as f64 / TICKS_PER_SECOND;
    TransferReport {
        scenario: label.to_string(),
        bytes: f.bytes,
        seconds,
        mean_rate: f.bytes as f64 / seconds,
        translations: net.translating_gateways().len(),
        retransmissions: f.retransmissions,
        source_hash,
        delivered_hash: f.digest,
        violations: net.violations(),
        links: net.link_usage(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckReport {
    /// Bottleneck capacity in bytes per simulated second.
    pub capacity: f64,
    pub solo: [f64; 2],
    pub concurrent: [f64; 2],
    pub link: (String, String),
}

impl BottleneckReport {
    pub fn combined(&self) -> f64 {
        self.concurrent.iter().sum()
    }

    /// Combined goodput over capacity.
    pub fn share(&self) -> f64 {
        self.combined() / self.capacity
    }

    pub fn csv(&self) -> String {
        format!(
            "flow,solo_rate,concurrent_rate\nnode10,{:.1},{:.1}\npkusz1,{:.1},{:.1}\ncombined,,{:.1}\ncapacity,,{:.1}\n",
            self.solo[0], self.concurrent[0], self.solo[1], self.concurrent[1], self.combined(), self.capacity
        )
    }
}

/// node10 and pkusz1 each pull a resource from gdut across the node9
/// uplink, first alone and then together.
pub fn run_bottleneck(
    cfg: &Config,
    size: usize,
    seed: u64,
) -> Result<BottleneckReport, ScenarioError> {
    for n in ["node10", "pkusz1", "gdut", "node9", "gdcni1"] {
        need(cfg, n, true)?;
    }
    let link = cfg
        .links
        .iter()
        .find(|l| (l.a == "node9" && l.b == "gdcni1") || (l.a == "gdcni1" && l.b == "node9"))
        .ok_or_else(|| ScenarioError::Unsatisfiable("no node9 uplink".into()))?;
    let dom = domain_of(cfg, "gdut")?;
    let names = [
        dom.child("a").unwrap().to_string(),
        dom.child("b").unwrap().to_string(),
    ];
    let consumers = ["node10", "pkusz1"];
    let run = |which: &[usize]| -> Result<Vec<f64>, ScenarioError> {
        let mut net = Network::build(cfg, seed)?;
        for (k, name) in names.iter().enumerate() {
            net.serve("gdut", name, pseudorandom(size, seed + k as u64))
                .map_err(ScenarioError::Unsatisfiable)?;
        }
        let flows: Vec<usize> = which
            .iter()
            .map(|&k| {
                net.fetch(consumers[k], &names[k], None, 0, SCENARIO_WINDOW)
                    .unwrap()
            })
            .collect();
        net.run(MAX_TICKS);
        flows
            .iter()
            .map(|&f| {
                let r = net.flow(f);
                match r.complete {
                    true => Ok(r.rate() * TICKS_PER_SECOND),
                    false => Err(ScenarioError::Incomplete(format!("{} stalled", r.node))),
                }
            })
            .collect()
    };
    let a = run(&[0])?[0];
    let b = run(&[1])?[0];
    let both = run(&[0, 1])?;
    Ok(BottleneckReport {
        capacity: link.capacity as f64 * TICKS_PER_SECOND,
        solo: [a, b],
        concurrent: [both[0], both[1]],
        link: (link.a.clone(), link.b.clone()),
    })
}
