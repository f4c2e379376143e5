use std::time::Instant;

use min_net::pov_net::{chains_forkless, run_pov, PovConfig};

#[test]
fn thousand_blocks_two_silent_forkless() {
    let started = Instant::now();
    let cfg = PovConfig {
        blocks: 1000,
        silent: 2,
        seed: 7,
        ..PovConfig::default()
    };
    let (r, net) = run_pov(cfg).unwrap();
    let elapsed = started.elapsed();
    assert!(r.finished, "{r:?}");
    assert!(r.forkless);
    assert!(r.min_votes * 2 > r.committee, "{r:?}");
    assert!(elapsed.as_secs_f64() < 60.0, "{elapsed:?}");
    let chains: Vec<_> = net
        .world
        .nodes()
        .iter()
        .map(|n| {
            n.chain
                .blocks()
                .iter()
                .map(|b| b.hash())
                .collect::<Vec<_>>()
        })
        .collect();
    assert!(chains_forkless(&chains));
    println!("{r:?} in {elapsed:?}");
}

#[test]
fn jitter_reorders_but_chains_agree_across_seeds() {
    for seed in 0..5 {
        let cfg = PovConfig {
            blocks: 60,
            silent: 2,
            jitter: 20,
            seed,
            ..PovConfig::default()
        };
        let (r, _) = run_pov(cfg).unwrap();
        assert!(r.finished && r.forkless, "seed {seed}: {r:?}");
        assert!(r.min_votes >= 3);
    }
}

#[test]
fn duplicate_registrations_are_rejected_on_chain() {
    let cfg = PovConfig {
        blocks: 200,
        seed: 3,
        ..PovConfig::default()
    };
    let (r, net) = run_pov(cfg).unwrap();
    assert!(r.txs_rejected > 0, "{r:?}");
    let chain = &net.world.node(0).chain;
    assert_eq!(chain.rebuild_index(), *chain.index());
}
