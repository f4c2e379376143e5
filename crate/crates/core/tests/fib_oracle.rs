use min_core::{FaceId, FibAction, HptFib, HptFibEntry, IdKind, Identifier};
use proptest::prelude::*;

fn name(labels: &[u8]) -> Identifier {
    Identifier::new(IdKind::Content, labels.iter().map(|l| format!("l{l}"))).unwrap()
}

fn scan(table: &[(Identifier, FaceId)], q: &Identifier) -> Option<(Identifier, FaceId)> {
    table
        .iter()
        .filter(|(k, _)| k.is_prefix_of_same_kind(q))
        .max_by_key(|(k, _)| k.depth())
        .cloned()
}

proptest! {
    #[test]
    fn longest_prefix_match_agrees_with_scan(
        keys in prop::collection::btree_set(prop::collection::vec(0u8..3, 1..5), 1..40),
        queries in prop::collection::vec(prop::collection::vec(0u8..3, 1..7), 1..40),
    ) {
        let table: Vec<(Identifier, FaceId)> =
            keys.iter().enumerate().map(|(i, k)| (name(k), FaceId(i as u32))).collect();
        let mut fib = HptFib::new();
        for (k, f) in &table {
            fib.insert(HptFibEntry::forward(k.clone(), *f));
        }
        prop_assert_eq!(fib.len(), table.len());
        for q in &queries {
            let q = name(q);
            let got = fib.longest_prefix_match(&q).map(|e| match e.action {
                FibAction::Forward(f) => (e.key, f),
                FibAction::Translate(_) => unreachable!(),
            });
            prop_assert_eq!(got, scan(&table, &q));
        }
    }
}

#[test]
fn kinds_do_not_match_each_other() {
    let mut fib = HptFib::new();
    fib.insert(HptFibEntry::forward(
        Identifier::new(IdKind::Identity, ["a"]).unwrap(),
        FaceId(1),
    ));
    let q = Identifier::new(IdKind::Content, ["a", "b"]).unwrap();
    assert!(fib.longest_prefix_match(&q).is_none());
}

#[test]
fn ip_prefixes_match_by_containment() {
    let mut fib = HptFib::new();
    for (p, f) in [
        ("ip:10.0.0.0/8", 1),
        ("ip:10.1.0.0/16", 2),
        ("ip:10.1.2.0/24", 3),
    ] {
        fib.insert(HptFibEntry::forward(p.parse().unwrap(), FaceId(f)));
    }
    let hit = |q: &str| match fib
        .longest_prefix_match(&q.parse().unwrap())
        .map(|e| e.action)
    {
        Some(FibAction::Forward(f)) => Some(f.0),
        _ => None,
    };
    assert_eq!(hit("ip:10.1.2.9/32"), Some(3));
    assert_eq!(hit("ip:10.1.9.9/32"), Some(2));
    assert_eq!(hit("ip:10.9.9.9/32"), Some(1));
    assert_eq!(hit("ip:11.0.0.1/32"), None);
}
