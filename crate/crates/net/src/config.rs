//! Scenario configuration text.
//!
//! Line oriented, `#` starts a comment, sections are `[nodes]`, `[links]`,
//! `[domains]`, `[gateways]`, `[dns]` and `[workloads]`:
//!
//! ```text
//! [nodes]
//! r1 router site=a
//! gw gateway ip=10.0.0.1
//! h1 host ip=10.0.0.2
//! [links]
//! r1 gw link capacity=2650 latency=2
//! gw h1 ip capacity=2650 latency=2 loss=0 jitter=0
//! [domains]
//! r1 /net top
//! gw /net/gw edge parent=r1
//! [gateways]
//! map gw ip:10.9.0.1 /net/r1
//! [workloads]
//! serve r1 /net/r1/video size=100000 seed=1
//! fetch h1 10.9.0.1 resource=video window=8
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use min_core::{IdKind, Identifier};
use thiserror::Error;

use crate::router::Role;
use crate::sim::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {field}: {msg}")]
pub struct ConfigError {
    pub line: usize,
    pub field: String,
    pub msg: String,
}

fn err(line: usize, field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError {
        line,
        field: field.to_string(),
        msg: msg.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Router,
    Gateway,
    Host,
    IpRouter,
}

impl NodeKind {
    /// Runs the CCN pipeline.
    pub fn is_ccn(self) -> bool {
        matches!(self, NodeKind::Router | NodeKind::Gateway)
    }

    /// Has an IP side.
    pub fn is_ip(self) -> bool {
        !matches!(self, NodeKind::Router)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecl {
    pub name: String,
    pub kind: NodeKind,
    pub ip: Option<IpAddr>,
    pub site: Option<String>,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    LinkLayer,
    Ip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    pub kind: LinkKind,
    pub capacity: u64,
    pub latency: Tick,
    pub loss: f64,
    pub jitter: Tick,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDecl {
    pub node: String,
    pub path: Identifier,
    pub role: Role,
    pub parent: Option<String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GatewayDecl {
    Tunnel {
        a: String,
        b: String,
        line: usize,
    },
    Map {
        gateway: String,
        key: Identifier,
        target: Identifier,
        line: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnsDecl {
    pub node: String,
    pub name: Identifier,
    pub addr: IpAddr,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    /// A CCN node publishes `name`; an IP node serves a file called `name`.
    Serve {
        node: String,
        name: String,
        size: usize,
        seed: u64,
    },
    /// A CCN node fetches the content name `target`; an IP node fetches
    /// `resource` from the address `target`.
    Fetch {
        node: String,
        target: String,
        resource: Option<String>,
        start: Tick,
        window: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<LinkDecl>,
    pub domains: Vec<DomainDecl>,
    pub gateways: Vec<GatewayDecl>,
    pub dns: Vec<DnsDecl>,
    pub workloads: Vec<Workload>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Nodes,
    Links,
    Domains,
    Gateways,
    Dns,
    Workloads,
}

/// Splits `k=v` tokens, rejecting unknown or repeated keys.
fn attrs<'a>(
    line: usize,
    toks: &[&'a str],
    allowed: &[&str],
) -> Result<BTreeMap<&'a str, &'a str>, ConfigError> {
    let mut m = BTreeMap::new();
    for t in toks {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| err(line, t, "expected key=value"))?;
        if !allowed.contains(&k) {
            return Err(err(line, k, "unknown attribute"));
        }
        if m.insert(k, v).is_some() {
            return Err(err(line, k, "repeated attribute"));
        }
    }
    Ok(m)
}

fn num<T: FromStr>(line: usize, field: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(line, field, format!("bad number {v:?}")))
}

fn ident(line: usize, field: &str, v: &str) -> Result<Identifier, ConfigError> {
    v.parse().map_err(|e| err(line, field, e))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut section = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(match name {
                    "nodes" => Section::Nodes,
                    "links" => Section::Links,
                    "domains" => Section::Domains,
                    "gateways" => Section::Gateways,
                    "dns" => Section::Dns,
                    "workloads" => Section::Workloads,
                    _ => return Err(err(line, "section", format!("unknown section {name:?}"))),
                });
                continue;
            }
            let toks: Vec<&str> = body.split_whitespace().collect();
            match section {
                None => return Err(err(line, "section", "entry before any section")),
                Some(Section::Nodes) => cfg.parse_node(line, &toks)?,
                Some(Section::Links) => cfg.parse_link(line, &toks)?,
                Some(Section::Domains) => cfg.parse_domain(line, &toks)?,
                Some(Section::Gateways) => cfg.parse_gateway(line, &toks)?,
                Some(Section::Dns) => cfg.parse_dns(line, &toks)?,
                Some(Section::Workloads) => cfg.parse_workload(line, &toks)?,
            }
        }
        cfg.check_domains()?;
        Ok(cfg)
    }

    pub fn node(&self, name: &str) -> Option<&NodeDecl> {
        self.nodes.iter().find(|n| n.name == name)
    }

    fn known(&self, line: usize, field: &str, name: &str) -> Result<&NodeDecl, ConfigError> {
        self.node(name)
            .ok_or_else(|| err(line, field, format!("unknown node {name:?}")))
    }

    fn parse_node(&mut self, line: usize, t: &[&str]) -> Result<(), ConfigError> {
        let [name, kind, rest @ ..] = t else {
            return Err(err(line, "node", "expected `name kind [ip=..] [site=..]`"));
        };
        if self.node(name).is_some() {
            return Err(err(line, "name", format!("duplicate node {name:?}")));
        }
        min_core::identifier::validate_label(IdKind::Content, name)
            .map_err(|e| err(line, "name", e))?;
        let kind = match *kind {
            "router" => NodeKind::Router,
            "gateway" => NodeKind::Gateway,
            "host" => NodeKind::Host,
            "iprouter" => NodeKind::IpRouter,
            k => return Err(err(line, "kind", format!("unknown node kind {k:?}"))),
        };
        let a = attrs(line, rest, &["ip", "site"])?;
        let ip = match a.get("ip") {
            Some(v) => Some(
                v.parse()
                    .map_err(|_| err(line, "ip", format!("bad address {v:?}")))?,
            ),
            None => None,
        };
        if kind.is_ip() && ip.is_none() {
            return Err(err(line, "ip", "required for this node kind"));
        }
        if let Some(addr) = ip {
            if self.nodes.iter().any(|n| n.ip == Some(addr)) {
                return Err(err(line, "ip", format!("duplicate address {addr}")));
            }
        }
        self.nodes.push(NodeDecl {
            name: name.to_string(),
            kind,
            ip,
            site: a.get("site").map(|s| s.to_string()),
            line,
        });
        Ok(())
    }

    fn parse_link(&mut self, line: usize, t: &[&str]) -> Result<(), ConfigError> {
        let [a, b, kind, rest @ ..] = t else {
            return Err(err(line, "link", "expected `a b link|ip capacity=..`"));
        };
        let na = self.known(line, "endpoint", a)?.kind;
        let nb = self.known(line, "endpoint", b)?.kind;
        if a == b {
            return Err(err(line, "endpoint", "self loop"));
        }
        let kind = match *kind {
            "link" => LinkKind::LinkLayer,
            "ip" => LinkKind::Ip,
            k => return Err(err(line, "kind", format!("unknown link kind {k:?}"))),
        };
        let ok = match kind {
            LinkKind::LinkLayer => na.is_ccn() && nb.is_ccn(),
            LinkKind::Ip => na.is_ip() && nb.is_ip(),
        };
        if !ok {
            return Err(err(
                line,
                "kind",
                "endpoint cannot attach to this link kind",
            ));
        }
        let m = attrs(line, rest, &["capacity", "latency", "loss", "jitter"])?;
        let capacity: u64 = num(
            line,
            "capacity",
            m.get("capacity")
                .ok_or_else(|| err(line, "capacity", "required"))?,
        )?;
        if capacity == 0 {
            return Err(err(line, "capacity", "must be positive"));
        }
        let loss: f64 = m.get("loss").map_or(Ok(0.0), |v| num(line, "loss", v))?;
        if !(0.0..=1.0).contains(&loss) {
            return Err(err(line, "loss", "must be within [0, 1]"));
        }
        self.links.push(LinkDecl {
            a: a.to_string(),
            b: b.to_string(),
            kind,
            capacity,
            latency: m
                .get("latency")
                .map_or(Ok(1), |v| num(line, "latency", v))?,
            loss,
            jitter: m.get("jitter").map_or(Ok(0), |v| num(line, "jitter", v))?,
            line,
        });
        Ok(())
    }

    fn parse_domain(&mut self, line: usize, t: &[&str]) -> Result<(), ConfigError> {
        let [node, path, role, rest @ ..] = t else {
            return Err(err(
                line,
                "domain",
                "expected `node path top|supervisory|edge [parent=..]`",
            ));
        };
        if !self.known(line, "node", node)?.kind.is_ccn() {
            return Err(err(line, "node", "only CCN nodes own domains"));
        }
        if self.domains.iter().any(|d| d.node == *node) {
            return Err(err(line, "node", "domain declared twice"));
        }
        let path = ident(line, "path", path)?;
        if path.kind() != IdKind::Content {
            return Err(err(line, "path", "domain paths are content names"));
        }
        let role = match *role {
            "top" => Role::Top,
            "supervisory" => Role::Supervisory,
            "edge" => Role::Edge,
            r => return Err(err(line, "role", format!("unknown role {r:?}"))),
        };
        let a = attrs(line, rest, &["parent"])?;
        let parent = a.get("parent").map(|s| s.to_string());
        if (role == Role::Top) != parent.is_none() {
            return Err(err(line, "parent", "required exactly for non-top domains"));
        }
        self.domains.push(DomainDecl {
            node: node.to_string(),
            path,
            role,
            parent,
            line,
        });
        Ok(())
    }

    fn check_domains(&self) -> Result<(), ConfigError> {
        for d in &self.domains {
            let mut seen = BTreeSet::new();
            let mut cur = d;
            while let Some(p) = &cur.parent {
                if !seen.insert(cur.node.clone()) {
                    return Err(err(d.line, "parent", "domain cycle"));
                }
                let up = self
                    .domains
                    .iter()
                    .find(|x| x.node == *p)
                    .ok_or_else(|| err(cur.line, "parent", format!("{p:?} has no domain")))?;
                if !up.path.is_prefix_of_same_kind(&cur.path) || up.path == cur.path {
                    return Err(err(cur.line, "path", "must extend the parent's path"));
                }
                cur = up;
            }
        }
        Ok(())
    }

    fn gateway(&self, line: usize, name: &str) -> Result<(), ConfigError> {
        match self.known(line, "gateway", name)?.kind {
            NodeKind::Gateway => Ok(()),
            _ => Err(err(line, "gateway", format!("{name:?} is not a gateway"))),
        }
    }

    fn parse_gateway(&mut self, line: usize, t: &[&str]) -> Result<(), ConfigError> {
        match t {
            ["tunnel", a, b] => {
                self.gateway(line, a)?;
                self.gateway(line, b)?;
                if a == b {
                    return Err(err(line, "tunnel", "needs two distinct gateways"));
                }
                self.gateways.push(GatewayDecl::Tunnel {
                    a: a.to_string(),
                    b: b.to_string(),
                    line,
                });
            }
            ["map", gw, key, target] => {
                self.gateway(line, gw)?;
                let key = ident(line, "key", key)?;
                let target = ident(line, "target", target)?;
                let ok = match (key.kind(), target.kind()) {
                    (IdKind::Ip, IdKind::Content) => true,
                    (IdKind::Content, IdKind::Ip) => target.ip_prefix().unwrap().is_host(),
                    _ => false,
                };
                if !ok {
                    return Err(err(
                        line,
                        "target",
                        "maps go from an IP prefix to a content prefix or back to an IP host",
                    ));
                }
                self.gateways.push(GatewayDecl::Map {
                    gateway: gw.to_string(),
                    key,
                    target,
                    line,
                });
            }
            _ => {
                return Err(err(
                    line,
                    "gateway",
                    "expected `tunnel a b` or `map gw key target`",
                ))
            }
        }
        Ok(())
    }

    fn parse_dns(&mut self, line: usize, t: &[&str]) -> Result<(), ConfigError> {
        let [node, name, addr] = t else {
            return Err(err(line, "dns", "expected `node dns:name address`"));
        };
        if !self.known(line, "node", node)?.kind.is_ccn() {
            return Err(err(line, "node", "DNS stubs live on CCN nodes"));
        }
        let name = ident(line, "name", name)?;
        if name.kind() != IdKind::LegacyDomain {
            return Err(err(line, "name", "expected a dns: name"));
        }
        self.dns.push(DnsDecl {
            node: node.to_string(),
            name,
            addr: addr
                .parse()
                .map_err(|_| err(line, "address", format!("bad address {addr:?}")))?,
            line,
        });
        Ok(())
    }

    fn parse_workload(&mut self, line: usize, t: &[&str]) -> Result<(), ConfigError> {
        match t {
            ["serve", node, name, rest @ ..] => {
                let kind = self.known(line, "node", node)?.kind;
                let a = attrs(line, rest, &["size", "seed"])?;
                if kind.is_ccn() {
                    ident(line, "name", name)?;
                } else if kind != NodeKind::Host {
                    return Err(err(line, "node", "only routers, gateways and hosts serve"));
                }
                self.workloads.push(Workload::Serve {
                    node: node.to_string(),
                    name: name.to_string(),
                    size: num(
                        line,
                        "size",
                        a.get("size").ok_or_else(|| err(line, "size", "required"))?,
                    )?,
                    seed: a.get("seed").map_or(Ok(0), |v| num(line, "seed", v))?,
                });
            }
            ["fetch", node, target, rest @ ..] => {
                let kind = self.known(line, "node", node)?.kind;
                let a = attrs(line, rest, &["resource", "start", "window"])?;
                let resource = a.get("resource").map(|s| s.to_string());
                if kind.is_ccn() {
                    ident(line, "target", target)?;
                } else {
                    target
                        .parse::<IpAddr>()
                        .map_err(|_| err(line, "target", "IP clients fetch from an address"))?;
                    if resource.is_none() {
                        return Err(err(line, "resource", "required for IP clients"));
                    }
                }
                self.workloads.push(Workload::Fetch {
                    node: node.to_string(),
                    target: target.to_string(),
                    resource,
                    start: a.get("start").map_or(Ok(0), |v| num(line, "start", v))?,
                    window: a
                        .get("window")
                        .map_or(Ok(crate::fetch::DEFAULT_WINDOW), |v| num(line, "window", v))?,
                });
            }
            _ => return Err(err(line, "workload", "expected `serve ..` or `fetch ..`")),
        }
        Ok(())
    }

    /// Distinct `site=` values.
    pub fn sites(&self) -> BTreeSet<&str> {
        self.nodes
            .iter()
            .filter_map(|n| n.site.as_deref())
            .collect()
    }

    /// Depth of the deepest domain chain, counting the top level as one.
    pub fn domain_levels(&self) -> usize {
        self.domains
            .iter()
            .map(|d| {
                let mut n = 1;
                let mut cur = d;
                while let Some(p) = &cur.parent {
                    cur = self.domains.iter().find(|x| x.node == *p).unwrap();
                    n += 1;
                }
                n
            })
            .max()
            .unwrap_or(0)
    }
}

impl FromStr for Config {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Config::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_two_node() {
        let c =
            Config::parse("[nodes]\na router\nb router\n[links]\na b link capacity=10 latency=1\n")
                .unwrap();
        assert_eq!(c.nodes.len(), 2);
        assert_eq!(c.links.len(), 1);
    }

    #[test]
    fn dangling_endpoint_reports_line() {
        let e = Config::parse("[nodes]\na router\n[links]\na zz link capacity=10\n").unwrap_err();
        assert_eq!(e.line, 4);
        assert_eq!(e.field, "endpoint");
    }

    #[test]
    fn errors_carry_fields() {
        let cases = [
            ("[nodes]\na blimp\n", 2, "kind"),
            ("[nodes]\na router\na router\n", 3, "name"),
            ("[nodes]\nh host\n", 2, "ip"),
            (
                "[nodes]\na router\nb router\n[links]\na b link capacity=x\n",
                5,
                "capacity",
            ),
            (
                "[nodes]\na router\nb router\n[links]\na b link capacity=1 loss=2\n",
                5,
                "loss",
            ),
            (
                "[nodes]\na router\nh host ip=1.2.3.4\n[links]\na h link capacity=1\n",
                5,
                "kind",
            ),
            ("[bogus]\n", 1, "section"),
            ("a router\n", 1, "section"),
            ("[nodes]\na router\n[domains]\na /x edge\n", 4, "parent"),
            (
                "[nodes]\na router\nb router\n[domains]\na /x top\nb /y edge parent=a\n",
                6,
                "path",
            ),
            ("[nodes]\na router\n[gateways]\ntunnel a a\n", 4, "gateway"),
        ];
        for (text, line, field) in cases {
            let e = Config::parse(text).unwrap_err();
            assert_eq!((e.line, e.field.as_str()), (line, field), "{text}");
        }
    }

    #[test]
    fn comments_and_workloads() {
        let c = Config::parse(
            "# hi\n[nodes]\na router # r\nh host ip=10.0.0.1\n[workloads]\nserve a /a/v size=10 seed=3\nfetch h 10.0.0.2 resource=v window=4\n",
        )
        .unwrap();
        assert_eq!(c.workloads.len(), 2);
        assert!(matches!(&c.workloads[1], Workload::Fetch { window: 4, .. }));
    }
}
