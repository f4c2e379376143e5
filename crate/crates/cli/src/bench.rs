//! HPT-FIB bulk-insert timing and partition-analysis reports.

use std::time::Instant;

use min_core::cap::{estimate_tolerance, exact_tolerance, QuorumRule};
use min_core::fib::generate_entries;
use min_core::{HptFib, HptFibEntry, Topology};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub entries: u64,
    pub seconds: f64,
    pub ns_per_entry: f64,
}

/// Inserts `n` generated entries into an empty table and times the inserts
/// alone; entry generation happens before the clock starts.
pub fn bench_insert(n: u64, seed: u64) -> BenchRow {
    let entries: Vec<HptFibEntry> = generate_entries(n, seed).collect();
    let mut fib = HptFib::new();
    let start = Instant::now();
    for e in entries {
        fib.insert(e);
    }
    let seconds = start.elapsed().as_secs_f64();
    assert_eq!(fib.len() as u64, n, "generated entries are distinct");
    BenchRow {
        entries: n,
        seconds,
        ns_per_entry: seconds * 1e9 / n.max(1) as f64,
    }
}

pub fn bench_fib(sizes: &[u64], seed: u64) -> Vec<BenchRow> {
    sizes.iter().map(|&n| bench_insert(n, seed)).collect()
}

/// Per-entry time of the last row over the first.
pub fn scaling_ratio(rows: &[BenchRow]) -> Option<f64> {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() > 1 && a.ns_per_entry > 0.0 => {
            Some(b.ns_per_entry / a.ns_per_entry)
        }
        _ => None,
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("entries,seconds,ns_per_entry,ratio_to_first\n");
    let base = rows.first().map(|r| r.ns_per_entry).unwrap_or(0.0);
    for r in rows {
        let ratio = if base > 0.0 {
            r.ns_per_entry / base
        } else {
            0.0
        };
        s.push_str(&format!(
            "{},{:.3},{:.1},{:.3}\n",
            r.entries, r.seconds, r.ns_per_entry, ratio
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapRow {
    pub edges: usize,
    pub sampled_tolerance: f64,
    pub half_width: f64,
    pub sampled_repair: f64,
    pub samples: u64,
    pub exact: Option<(f64, f64)>,
}

pub fn cap_report(
    topo: &Topology,
    samples: u64,
    seed: u64,
    exact: bool,
) -> Result<CapRow, CliError> {
    let rule = QuorumRule::POV;
    let est = estimate_tolerance(topo, rule, samples.max(1), seed)
        .map_err(|e| CliError::Module(e.to_string()))?;
    let exact = if exact {
        let r = exact_tolerance(topo, rule).map_err(|e| CliError::Module(e.to_string()))?;
        Some((r.tolerance_probability, r.avg_min_repair_time))
    } else {
        None
    };
    Ok(CapRow {
        edges: topo.edges().len(),
        sampled_tolerance: est.tolerance_probability,
        half_width: est.half_width,
        sampled_repair: est.avg_min_repair_time,
        samples: est.sample_count,
        exact,
    })
}

impl CapRow {
    pub fn csv(&self) -> String {
        match self.exact {
            Some((t, r)) => format!(
                "edges,samples,tolerance_exact,tolerance_sampled,half_width,repair_exact,repair_sampled\n{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                self.edges, self.samples, t, self.sampled_tolerance, self.half_width, r, self.sampled_repair
            ),
            None => format!(
                "edges,samples,tolerance_sampled,half_width,repair_sampled\n{},{},{:.6},{:.6},{:.6}\n",
                self.edges, self.samples, self.sampled_tolerance, self.half_width, self.sampled_repair
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_rows_and_ratio() {
        let rows = bench_fib(&[1000, 4000], 1);
        assert_eq!(rows.len(), 2);
        assert!(scaling_ratio(&rows).unwrap() > 0.0);
        let csv = bench_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().ends_with(",1.000"));
    }

    #[test]
    fn cap_exact_and_sampled_side_by_side() {
        let topo = Topology::ring(5, 0.1);
        let row = cap_report(&topo, 20_000, 3, true).unwrap();
        let (t, _) = row.exact.unwrap();
        assert!((t - row.sampled_tolerance).abs() < 0.02);
        assert!(row.csv().starts_with("edges,samples,tolerance_exact"));
    }
}
