//! Synthetic HPT-FIB workload.
//!
//! Keys hang off a fixed pool of site prefixes chosen with Zipf(s = 1)
//! popularity. Key depth is uniform in `[2, 6]` and the last label embeds
//! the running index, so every generated key is distinct.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::{FaceId, HptFibEntry};
use crate::identifier::{IdKind, Identifier, IpPrefix};

const POOL: usize = 4096;
const FACES: u32 = 64;
const SYLLABLES: [&str; 16] = [
    "ndr", "edu", "pku", "sz", "ct", "cu", "gd", "hk", "mo", "ks", "node", "vid", "cdn", "lab",
    "net", "res",
];

struct Site {
    kind: IdKind,
    labels: [String; 5],
}

pub struct EntryGenerator {
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    sites: Vec<Site>,
    next: u64,
    end: u64,
}

/// Deterministic stream of `n` distinct entries.
pub fn generate_entries(n: u64, seed: u64) -> EntryGenerator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = (0..POOL)
        .map(|i| {
            let kind = match rng.random_range(0..20) {
                0..=9 => IdKind::Content,
                10..=13 => IdKind::Identity,
                14..=16 => IdKind::Geo,
                17..=18 => IdKind::LegacyDomain,
                _ => IdKind::Ip,
            };
            let labels = std::array::from_fn(|depth| {
                let a = SYLLABLES[rng.random_range(0..SYLLABLES.len())];
                let b = SYLLABLES[rng.random_range(0..SYLLABLES.len())];
                // top two levels stay shared across sites; deeper ones diverge
                if depth < 2 {
                    format!("{a}{b}")
                } else {
                    format!("{a}{b}{}", i % 97)
                }
            });
            Site { kind, labels }
        })
        .collect();
    EntryGenerator {
        rng,
        zipf: Zipf::new(POOL as f64, 1.0).expect("valid zipf parameters"),
        sites,
        next: 0,
        end: n,
    }
}

impl EntryGenerator {
    fn make(&mut self, index: u64) -> HptFibEntry {
        let site_idx = self.zipf.sample(&mut self.rng) as usize - 1;
        let depth = self.rng.random_range(2..=6usize);
        let site = &self.sites[site_idx];
        let key = match site.kind {
            IdKind::Ip => {
                let bits = (0x2001_0db8u128 << 96)
                    | ((site_idx as u128) << 80)
                    | ((index as u128 & 0xffff_ffff) << 32);
                let len = 96 + 8 * (depth as u8 - 2);
                Identifier::ip(
                    IpPrefix::new(IpAddr::V6(Ipv6Addr::from(bits)), len).expect("len <= 128"),
                )
            }
            kind => {
                let mut labels: Vec<String> = site.labels[..depth - 1].to_vec();
                labels.push(format!("e{index:x}"));
                Identifier::new(kind, labels).expect("generated labels are valid")
            }
        };
        if self.rng.random_ratio(1, 20) {
            let target = match key.kind() {
                IdKind::Ip => {
                    let s = &self.sites[self.rng.random_range(0..POOL)];
                    Identifier::content(s.labels[..2].iter().cloned()).expect("valid labels")
                }
                _ => Identifier::ip_host(IpAddr::V4(Ipv4Addr::from(self.rng.random::<u32>()))),
            };
            HptFibEntry::translate(key, target)
        } else {
            HptFibEntry::forward(key, FaceId(self.rng.random_range(0..FACES)))
        }
    }
}

impl Iterator for EntryGenerator {
    type Item = HptFibEntry;

    fn next(&mut self) -> Option<HptFibEntry> {
        if self.next >= self.end {
            return None;
        }
        let i = self.next;
        self.next += 1;
        Some(self.make(i))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for EntryGenerator {}
