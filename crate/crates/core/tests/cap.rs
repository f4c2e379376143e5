use min_core::cap::{
    estimate_tolerance, exact_tolerance, exact_tolerance_rational, QuorumRule, Role,
};
use min_core::Topology;

#[test]
fn sampled_tolerance_tracks_exact_on_a_ring() {
    let topo = Topology::ring(6, 0.15);
    let exact = exact_tolerance(&topo, QuorumRule::POV).unwrap();
    let est = estimate_tolerance(&topo, QuorumRule::POV, 100_000, 11).unwrap();
    assert!((exact.tolerance_probability - est.tolerance_probability).abs() < 0.02);
    assert!(exact.tolerance_probability > 0.0 && exact.tolerance_probability < 1.0);
}

#[test]
fn perfect_links_tolerate_everything_with_no_repair() {
    let topo = Topology::ring(5, 0.0);
    let exact = exact_tolerance(&topo, QuorumRule::POV).unwrap();
    assert_eq!(exact.tolerance_probability, 1.0);
    assert_eq!(exact.avg_min_repair_time, 0.0);
    let est = estimate_tolerance(&topo, QuorumRule::POV, 1000, 1).unwrap();
    assert_eq!(est.tolerance_probability, 1.0);
    assert_eq!(est.avg_min_repair_time, 0.0);
}

#[test]
fn single_bridge_matches_hand_computation() {
    let mut t = Topology::new();
    for i in 0..3 {
        t.add_node(i, Role::Participant).unwrap();
    }
    t.add_edge(0, 1, 0.25).unwrap();
    t.add_edge(1, 2, 0.5).unwrap();
    let exact = exact_tolerance(&t, QuorumRule::POV).unwrap();
    // Quorum of 2 out of 3 survives unless both links fail.
    assert!((exact.tolerance_probability - (1.0 - 0.25 * 0.5)).abs() < 1e-12);
    let (r, _) = exact_tolerance_rational(&t, QuorumRule::POV).unwrap();
    assert_eq!(r.to_string(), "7/8");
}
