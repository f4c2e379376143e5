use std::collections::BTreeMap;

use min_core::Identifier;
use min_net::config::Config;
use min_net::resolve::Outcome;
use min_net::router::{locator_of, Role};
use min_net::Network;

const TREE: &str = "\
[nodes]
t  router
a  router
b  router
c  router
a1 router
a2 router
b1 router
b2 router
c1 router
c2 router

[links]
t a   link capacity=1000 latency=2
t b   link capacity=1000 latency=2
t c   link capacity=1000 latency=2
a a1  link capacity=1000 latency=1
a a2  link capacity=1000 latency=1
b b1  link capacity=1000 latency=1
b b2  link capacity=1000 latency=1
c c1  link capacity=1000 latency=1
c c2  link capacity=1000 latency=1

[domains]
t  /t       top
a  /t/a     supervisory parent=t
b  /t/b     supervisory parent=t
c  /t/c     supervisory parent=t
a1 /t/a/a1  edge parent=a
a2 /t/a/a2  edge parent=a
b1 /t/b/b1  edge parent=b
b2 /t/b/b2  edge parent=b
c1 /t/c/c1  edge parent=c
c2 /t/c/c2  edge parent=c
";

#[derive(Debug, PartialEq)]
enum Expect {
    Found(String),
    NotFound,
    Loop,
}

/// Walks the domain tree from the configuration alone: climb to the top,
/// then descend along the longest matching child path.
fn oracle(
    cfg: &Config,
    pubs: &BTreeMap<&str, Identifier>,
    start: &str,
    q: &Identifier,
) -> (Vec<String>, Expect, usize) {
    let dom = |n: &str| cfg.domains.iter().find(|d| d.node == n);
    let mut visited: Vec<String> = Vec::new();
    let mut node = start.to_string();
    let mut up = true;
    let mut hops = 0;
    loop {
        let seen = visited.contains(&node);
        if seen && up {
            return (visited, Expect::Loop, hops);
        }
        if !seen {
            visited.push(node.clone());
            if pubs
                .get(node.as_str())
                .is_some_and(|p| p.is_prefix_of_same_kind(q))
            {
                return (visited, Expect::Found(node), hops);
            }
        }
        let Some(d) = dom(&node) else {
            return (visited, Expect::NotFound, hops);
        };
        let next = if up && d.role != Role::Top && d.parent.is_some() {
            d.parent.clone()
        } else {
            up = false;
            cfg.domains
                .iter()
                .filter(|c| c.parent.as_deref() == Some(&node) && c.path.is_prefix_of_same_kind(q))
                .max_by_key(|c| c.path.depth())
                .map(|c| c.node.clone())
                .filter(|_| d.path.is_prefix_of_same_kind(q))
        };
        match next {
            Some(n) => {
                node = n;
                hops += 1;
            }
            None => return (visited, Expect::NotFound, hops),
        }
    }
}

fn id(s: &str) -> Identifier {
    s.parse().unwrap()
}

fn setup() -> (Config, Network, BTreeMap<&'static str, Identifier>) {
    let cfg: Config = TREE.parse().unwrap();
    let mut net = Network::build(&cfg, 5).unwrap();
    let pubs = BTreeMap::from([("a1", id("/t/a/a1/doc")), ("b2", id("/t/b/b2/x"))]);
    for (node, name) in &pubs {
        net.serve(node, &name.to_string(), vec![7; 100]).unwrap();
    }
    (cfg, net, pubs)
}

fn total_resolve_msgs(net: &Network) -> u64 {
    net.names()
        .iter()
        .map(|n| net.mir(n).unwrap().counter("resolve_msgs"))
        .sum()
}

fn check(start: &str, query: &str) -> (Vec<String>, Expect, u64) {
    let (cfg, mut net, pubs) = setup();
    let q = id(query);
    let (want_visited, want, want_hops) = oracle(&cfg, &pubs, start, &q);
    let r = net.resolve(start, &q, 10_000).expect("resolution finishes");
    assert_eq!(r.visited, want_visited, "{start} {query}");
    let got = match &r.outcome {
        Outcome::Found { locator, .. } => {
            let owner = net
                .names()
                .iter()
                .find(|n| locator_of(n) == *locator)
                .unwrap();
            Expect::Found(owner.clone())
        }
        Outcome::NotFound => Expect::NotFound,
        Outcome::LoopDetected => Expect::Loop,
    };
    assert_eq!(got, want, "{start} {query}");
    let msgs = total_resolve_msgs(&net);
    assert_eq!(msgs, want_hops as u64, "{start} {query}");
    (r.visited, got, msgs)
}

#[test]
fn tree_shape() {
    let cfg: Config = TREE.parse().unwrap();
    assert_eq!(cfg.nodes.len(), 10);
    assert_eq!(cfg.domain_levels(), 3);
}

#[test]
fn local_name_needs_no_messages() {
    let (visited, outcome, msgs) = check("a1", "/t/a/a1/doc");
    assert_eq!(visited, ["a1"]);
    assert_eq!(outcome, Expect::Found("a1".into()));
    assert_eq!(msgs, 0);
}

#[test]
fn sibling_name_climbs_to_top_and_descends() {
    let (visited, outcome, msgs) = check("a2", "/t/a/a1/doc/s0");
    assert_eq!(visited, ["a2", "a", "t", "a1"]);
    assert_eq!(outcome, Expect::Found("a1".into()));
    assert_eq!(msgs, 4);
}

#[test]
fn cross_branch_name() {
    let (visited, outcome, _) = check("c1", "/t/b/b2/x");
    assert_eq!(visited, ["c1", "c", "t", "b", "b2"]);
    assert_eq!(outcome, Expect::Found("b2".into()));
}

#[test]
fn absent_name_is_not_found() {
    let (visited, outcome, _) = check("a2", "/t/b/b9/none");
    assert_eq!(visited, ["a2", "a", "t", "b"]);
    assert_eq!(outcome, Expect::NotFound);
    let (visited, outcome, _) = check("b1", "/elsewhere/x");
    assert_eq!(visited, ["b1", "b", "t"]);
    assert_eq!(outcome, Expect::NotFound);
}

#[test]
fn every_start_and_query_matches_oracle() {
    let starts = ["t", "a", "b", "c", "a1", "a2", "b1", "b2", "c1", "c2"];
    let queries = [
        "/t/a/a1/doc",
        "/t/b/b2/x/s3",
        "/t/c/c2/none",
        "/t/a/zz",
        "/q",
    ];
    for s in starts {
        for q in queries {
            check(s, q);
        }
    }
}

#[test]
fn fetch_after_resolution_learns_route() {
    let (_, mut net, _) = setup();
    let f = net.fetch("c2", "/t/a/a1/doc", None, 0, 4).unwrap();
    assert!(net.run(20_000));
    let r = net.flow(f);
    assert!(r.complete, "{r:?}");
    assert_eq!(
        Some(r.digest),
        net.source_digest("a1", &id("/t/a/a1/doc").to_string())
    );
    assert_eq!(net.mir("c2").unwrap().counter("resolutions_found"), 1);
}
