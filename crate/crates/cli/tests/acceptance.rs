//! End-to-end acceptance checks. Each check prints one PASS or FAIL line;
//! the test fails if any check fails.

use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr};
use std::time::Instant;

use min_cli::bench::{bench_fib, scaling_ratio};
use min_core::cap::{estimate_tolerance, exact_tolerance, QuorumRule, Role as CapRole};
use min_core::chain::{is_majority, ChainState, Genesis, NodeId, Vote};
use min_core::{
    sign_record, Digest, FaceId, FibAction, HptFib, HptFibEntry, IdKind, Identifier, IpPrefix,
    KeyPair, Signer, Topology,
};
use min_net::config::Config;
use min_net::pov_net::{run_pov, PovConfig};
use min_net::resolve::Outcome;
use min_net::router::{locator_of, Role};
use min_net::scenario::{run_bottleneck, run_scenario, ten_site_fixture, ScenarioKind};
use min_net::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn pov_forkless() -> Check {
    let started = Instant::now();
    let cfg = PovConfig {
        committee: 5,
        butlers: 3,
        silent: 2,
        blocks: 1000,
        jitter: 8,
        seed: 7,
        ..PovConfig::default()
    };
    let (r, _) = run_pov(cfg).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    ensure(r.finished, format!("stalled at heights {:?}", r.heights))?;
    ensure(r.forkless, "chains diverge")?;
    ensure(
        r.min_votes * 2 > r.committee,
        format!("a block carries only {} votes", r.min_votes),
    )?;
    ensure(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} nodes, {} blocks, 2 silent commissioners, min votes {}/{}, {secs:.1}s",
        r.heights.len(),
        r.heights.iter().min().unwrap(),
        r.min_votes,
        r.committee
    ))
}

fn majority_exact() -> Check {
    let mut subsets = 0;
    for n in [1u32, 3, 4, 5, 7] {
        let committee: Vec<NodeId> = (0..n).collect();
        let genesis =
            Genesis::derived("majority", &committee, &[n], &[]).map_err(|e| e.to_string())?;
        let state = ChainState::new(genesis);
        let block = state.produce_block(n, &[]).map_err(|e| e.to_string())?;
        let msg = Vote::signed_bytes(&block.hash());
        let votes: Vec<Vote> = committee
            .iter()
            .map(|&id| Vote {
                voter: id,
                signature: Genesis::derived_key("majority", id).sign(&msg),
            })
            .collect();
        for mask in 0u32..1 << n {
            let mut b = block.clone();
            b.votes = votes
                .iter()
                .filter(|v| mask >> v.voter & 1 == 1)
                .cloned()
                .collect();
            let k = mask.count_ones() as usize;
            let oracle = 2 * k > n as usize;
            let committed = state.clone().commit_block(b).is_ok();
            ensure(
                committed == oracle,
                format!("N={n} mask={mask:b}: commit={committed}"),
            )?;
            ensure(is_majority(k, n as usize) == oracle, format!("N={n} k={k}"))?;
            subsets += 1;
        }
    }
    Ok(format!("{subsets} vote subsets agree with 2k > N"))
}

fn fib_scaling() -> Check {
    let started = Instant::now();
    let rows = bench_fib(&[1_000_000, 10_000_000], 1);
    let ratio = scaling_ratio(&rows).unwrap();
    let secs = started.elapsed().as_secs_f64();
    ensure(ratio <= 2.0, format!("per-entry ratio {ratio:.3}"))?;
    ensure(secs < 300.0, format!("took {secs:.0}s"))?;
    Ok(format!(
        "{:.0} ns/entry at 1e6, {:.0} ns/entry at 1e7, ratio {ratio:.3}",
        rows[0].ns_per_entry, rows[1].ns_per_entry
    ))
}

fn random_name(rng: &mut ChaCha8Rng, max_depth: usize) -> Identifier {
    const LABELS: [&str; 4] = ["a", "b", "c", "d"];
    let kind = if rng.random_bool(0.5) {
        IdKind::Content
    } else {
        IdKind::Identity
    };
    let depth = rng.random_range(1..=max_depth);
    Identifier::new(
        kind,
        (0..depth).map(|_| LABELS[rng.random_range(0..LABELS.len())]),
    )
    .unwrap()
}

fn random_ip(rng: &mut ChaCha8Rng, len: u8) -> Identifier {
    let addr = Ipv4Addr::new(
        10,
        rng.random_range(0..4),
        rng.random_range(0..4),
        rng.random(),
    );
    Identifier::ip(IpPrefix::new(IpAddr::V4(addr), len).unwrap())
}

fn lookup_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut table: BTreeMap<Identifier, FaceId> = BTreeMap::new();
    while table.len() < 1000 {
        let key = if rng.random_bool(0.7) {
            random_name(&mut rng, 5)
        } else {
            let len = rng.random_range(8..=32);
            random_ip(&mut rng, len)
        };
        let face = FaceId(table.len() as u32 + 1);
        table.entry(key).or_insert(face);
    }
    let mut fib = HptFib::new();
    for (k, f) in &table {
        fib.insert(HptFibEntry::forward(k.clone(), *f));
    }
    let mut hits = 0;
    for q in 0..10_000 {
        let query = if rng.random_bool(0.7) {
            random_name(&mut rng, 7)
        } else {
            random_ip(&mut rng, 32)
        };
        let want = table
            .iter()
            .filter(|(k, _)| k.is_prefix_of_same_kind(&query))
            .max_by_key(|(k, _)| k.depth())
            .map(|(k, f)| (k.clone(), *f));
        let got = fib.longest_prefix_match(&query).map(|e| match e.action {
            FibAction::Forward(f) => (e.key, f),
            FibAction::Translate(_) => (e.key, FaceId(u32::MAX)),
        });
        ensure(
            got == want,
            format!("query {q} {query}: got {got:?}, want {want:?}"),
        )?;
        hits += want.is_some() as usize;
    }
    Ok(format!(
        "10000 queries over 1000 prefixes agree ({hits} matched)"
    ))
}

fn five_scenarios() -> Check {
    let cfg = ten_site_fixture();
    let mut parts = Vec::new();
    for kind in ScenarioKind::ALL {
        let (r, _) =
            run_scenario(kind, &cfg, 10 * 1024 * 1024, 1).map_err(|e| format!("{kind}: {e}"))?;
        ensure(r.hash_ok(), format!("{kind}: hash mismatch"))?;
        ensure(
            r.violations == 0,
            format!("{kind}: {} violations", r.violations),
        )?;
        parts.push(format!("{kind} {:.2}MB/s", r.mean_rate / 1e6));
    }
    Ok(format!(
        "10 MB verified, zero violations: {}",
        parts.join(", ")
    ))
}

fn bottleneck() -> Check {
    let b = run_bottleneck(&ten_site_fixture(), 4 * 1024 * 1024, 1).map_err(|e| e.to_string())?;
    for k in 0..2 {
        ensure(
            b.concurrent[k] < b.solo[k],
            format!(
                "flow {k}: concurrent {:.0} >= solo {:.0}",
                b.concurrent[k], b.solo[k]
            ),
        )?;
    }
    let share = b.share();
    ensure(
        (0.8..=1.0).contains(&share),
        format!("combined share {share:.3}"),
    )?;
    Ok(format!(
        "solo {:.0}/{:.0} B/s, concurrent {:.0}/{:.0} B/s, combined {share:.3} of capacity",
        b.solo[0], b.solo[1], b.concurrent[0], b.concurrent[1]
    ))
}

const TREE: &str = "\
[nodes]
t router
a router
b router
c router
a1 router
a2 router
b1 router
b2 router
c1 router
c2 router
[links]
t a link capacity=1000 latency=2
t b link capacity=1000 latency=2
t c link capacity=1000 latency=2
a a1 link capacity=1000 latency=1
a a2 link capacity=1000 latency=1
b b1 link capacity=1000 latency=1
b b2 link capacity=1000 latency=1
c c1 link capacity=1000 latency=1
c c2 link capacity=1000 latency=1
[domains]
t /t top
a /t/a supervisory parent=t
b /t/b supervisory parent=t
c /t/c supervisory parent=t
a1 /t/a/a1 edge parent=a
a2 /t/a/a2 edge parent=a
b1 /t/b/b1 edge parent=b
b2 /t/b/b2 edge parent=b
c1 /t/c/c1 edge parent=c
c2 /t/c/c2 edge parent=c
";

/// Climb to the top domain, then descend along the longest matching child,
/// stopping at the first node that holds a covering publication.
fn walk(
    cfg: &Config,
    holder: (&str, &Identifier),
    start: &str,
    q: &Identifier,
) -> (Vec<String>, Option<String>) {
    let mut visited: Vec<String> = Vec::new();
    let mut node = start.to_string();
    let mut up = true;
    loop {
        if !visited.contains(&node) {
            visited.push(node.clone());
            if node == holder.0 && holder.1.is_prefix_of_same_kind(q) {
                return (visited, Some(node));
            }
        }
        let d = cfg.domains.iter().find(|d| d.node == node).unwrap();
        let next = if up && d.role != Role::Top {
            d.parent.clone()
        } else {
            up = false;
            cfg.domains
                .iter()
                .filter(|c| {
                    c.parent.as_deref() == Some(node.as_str()) && c.path.is_prefix_of_same_kind(q)
                })
                .max_by_key(|c| c.path.depth())
                .map(|c| c.node.clone())
                .filter(|_| d.path.is_prefix_of_same_kind(q))
        };
        match next {
            Some(n) => node = n,
            None => return (visited, None),
        }
    }
}

fn resolution_sequences() -> Check {
    let cfg: Config = TREE.parse().map_err(|e| format!("{e}"))?;
    ensure(
        cfg.nodes.len() == 10 && cfg.domain_levels() == 3,
        "tree shape",
    )?;
    let published: Identifier = "/t/a/a1/doc".parse().unwrap();
    let cases = [
        ("local", "a1", "/t/a/a1/doc", vec!["a1"]),
        ("sibling", "a2", "/t/a/a1/doc", vec!["a2", "a", "t", "a1"]),
        ("absent", "b1", "/t/c/c9/none", vec!["b1", "b", "t", "c"]),
    ];
    for (label, start, query, expected) in cases {
        let mut net = Network::build(&cfg, 1).map_err(|e| e.to_string())?;
        net.serve("a1", &published.to_string(), vec![1; 64])?;
        let q: Identifier = query.parse().unwrap();
        let (oracle_visits, oracle_owner) = walk(&cfg, ("a1", &published), start, &q);
        ensure(
            oracle_visits == expected,
            format!("{label}: oracle walked {oracle_visits:?}"),
        )?;
        let r = net
            .resolve(start, &q, 10_000)
            .ok_or(format!("{label}: no answer"))?;
        ensure(
            r.visited == oracle_visits,
            format!("{label}: visited {:?}", r.visited),
        )?;
        let owner = match r.outcome {
            Outcome::Found { locator, .. } => net
                .names()
                .iter()
                .find(|n| locator_of(n) == locator)
                .cloned(),
            _ => None,
        };
        ensure(
            owner == oracle_owner,
            format!("{label}: resolved to {owner:?}"),
        )?;
    }
    Ok("local, sibling and absent names follow the oracle's visit sequences".into())
}

fn random_topology(rng: &mut ChaCha8Rng, reliable: bool) -> Topology {
    let participants = rng.random_range(3..=5u32);
    let relays = rng.random_range(0..=2u32);
    let n = participants + relays;
    let mut t = Topology::new();
    for i in 0..n {
        let role = if i < participants {
            CapRole::Participant
        } else {
            CapRole::Relay
        };
        t.add_node(i, role).unwrap();
    }
    let p = |rng: &mut ChaCha8Rng| {
        if reliable {
            0.0
        } else {
            rng.random_range(0.02..0.35)
        }
    };
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.insert((j, i));
    }
    let target = rng.random_range(edges.len()..=12);
    while edges.len() < target && edges.len() < (n * (n - 1) / 2) as usize {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for (a, b) in edges {
        let pf = p(rng);
        t.add_edge(a, b, pf).unwrap();
    }
    t
}

fn cap_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut certain = 0;
    for k in 0..20 {
        let topo = random_topology(&mut rng, k % 5 == 0);
        ensure(topo.edges().len() <= 12, "too many edges")?;
        let exact = exact_tolerance(&topo, QuorumRule::POV).map_err(|e| e.to_string())?;
        let est =
            estimate_tolerance(&topo, QuorumRule::POV, 100_000, k).map_err(|e| e.to_string())?;
        let gap = (exact.tolerance_probability - est.tolerance_probability).abs();
        worst = worst.max(gap);
        ensure(
            gap <= 0.02,
            format!(
                "topology {k}: exact {} vs sampled {}",
                exact.tolerance_probability, est.tolerance_probability
            ),
        )?;
        if exact.tolerance_probability == 1.0 {
            certain += 1;
            ensure(
                exact.avg_min_repair_time == 0.0 && est.avg_min_repair_time == 0.0,
                format!(
                    "topology {k}: tolerance 1 with repair time {}",
                    exact.avg_min_repair_time
                ),
            )?;
        }
    }
    ensure(certain > 0, "no tolerance-1 case exercised")?;
    Ok(format!(
        "20 topologies, worst gap {worst:.4}, {certain} with tolerance 1 and zero repair time"
    ))
}

fn non_repudiation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut kinds = [0; 4];
    for trial in 0..100 {
        let key = KeyPair::derive(&format!("publisher/{trial}"));
        let mut content = vec![0u8; rng.random_range(1..512)];
        rng.fill(&mut content[..]);
        let name: Identifier = format!("/org/p{trial}/file").parse().unwrap();
        let locator: Identifier = format!("/loc/n{}", trial % 7).parse().unwrap();
        let rec =
            sign_record(name, Digest::of(&content), locator, &key).map_err(|e| e.to_string())?;
        ensure(
            rec.verify_with_content(&key.public_key(), &content),
            format!("trial {trial}: genuine record rejected"),
        )?;
        let mut forged = rec.clone();
        let mut body = content.clone();
        let which = rng.random_range(0..4);
        kinds[which] += 1;
        match which {
            0 => {
                let i = rng.random_range(0..body.len());
                body[i] ^= 1 << rng.random_range(0..8);
            }
            1 => {
                let i = rng.random_range(0..32);
                forged.content_hash.0[i] ^= 1 << rng.random_range(0..8);
            }
            2 => forged.locator = format!("/loc/evil{trial}").parse().unwrap(),
            _ => {
                let i = rng.random_range(0..forged.signature.len());
                forged.signature[i] ^= 1 << rng.random_range(0..8);
            }
        }
        ensure(
            !forged.verify_with_content(&key.public_key(), &body),
            format!("trial {trial}: tamper kind {which} verified"),
        )?;
    }
    Ok(format!(
        "100 tampered records rejected (content {}, hash {}, locator {}, signature {}), genuine ones verify",
        kinds[0], kinds[1], kinds[2], kinds[3]
    ))
}

fn determinism() -> Check {
    let cfg = ten_site_fixture();
    for kind in ScenarioKind::ALL {
        let (a, na) = run_scenario(kind, &cfg, 1 << 20, 21).map_err(|e| e.to_string())?;
        let (b, nb) = run_scenario(kind, &cfg, 1 << 20, 21).map_err(|e| e.to_string())?;
        ensure(
            na.metrics_csv() == nb.metrics_csv(),
            format!("{kind}: node metrics differ"),
        )?;
        ensure(
            a.links_csv() == b.links_csv(),
            format!("{kind}: link metrics differ"),
        )?;
        ensure(
            a.csv_row() == b.csv_row(),
            format!("{kind}: report differs"),
        )?;
    }
    let pov = || {
        let cfg = PovConfig {
            blocks: 50,
            silent: 2,
            seed: 21,
            ..PovConfig::default()
        };
        run_pov(cfg).map(|(_, n)| n.metrics_csv())
    };
    ensure(pov().ok() == pov().ok(), "PoV metrics differ")?;
    Ok("five scenarios and a PoV run produce byte-identical metrics on re-run".into())
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("pov-forkless", pov_forkless),
        ("majority-exact", majority_exact),
        ("fib-scaling", fib_scaling),
        ("lookup-oracle", lookup_oracle),
        ("five-scenarios", five_scenarios),
        ("bottleneck", bottleneck),
        ("resolution-hops", resolution_sequences),
        ("cap-exactness", cap_exactness),
        ("non-repudiation", non_repudiation),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL {} {name}: {why}", i + 1);
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
