//! Degree-preserving, time-respecting rewiring and randomized disruption.
//!
//! A swap takes two edges `a -> b`, `c -> d` and proposes `a -> d`, `c -> b`.
//! It is accepted only if both new edges still point strictly backward in
//! time and neither already exists, so every node keeps its reference count
//! and its citation count.
//!
//! Rewiring destroys triadic closure, turning `j`-type citers into `i`-type
//! ones. The randomized disruption of a paper is then close to
//! `(N_i + N_j) / (N_i + N_j + N_k) = 1 / (1 + R_k)`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationNetwork, PaperId};
use crate::generator::realization_seed;
use crate::metrics::{compute_cd, compute_cd_all, DisruptionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewireConfig {
    pub swap_attempts: u64,
    pub seed: u64,
}

impl RewireConfig {
    pub fn per_edge(net: &CitationNetwork, swaps_per_edge: f64, seed: u64) -> Self {
        Self {
            swap_attempts: ((net.num_edges() as f64 * swaps_per_edge).ceil() as u64).max(1),
            seed,
        }
    }

    fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone)]
pub struct RewireOutcome {
    pub network: CitationNetwork,
    pub accepted: u64,
    pub rejected: u64,
    /// Fraction of edges not present in the input network.
    pub hamming_fraction: f64,
}

#[inline]
fn key(s: PaperId, t: PaperId) -> u64 {
    ((s as u64) << 32) | t as u64
}

pub fn rewire(net: &CitationNetwork, cfg: &RewireConfig) -> RewireOutcome {
    let mut edges: Vec<(PaperId, PaperId)> = net.edges().collect();
    let mut present: HashSet<u64> = edges.iter().map(|&(s, t)| key(s, t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut accepted, mut rejected) = (0u64, 0u64);
    let m = edges.len();
    if m >= 2 {
        for _ in 0..cfg.swap_attempts {
            let i = rng.random_range(0..m);
            let mut j = rng.random_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = edges[i];
            let (c, d) = edges[j];
            let legal = a != c
                && b != d
                && net.year(d) < net.year(a)
                && net.year(b) < net.year(c)
                && !present.contains(&key(a, d))
                && !present.contains(&key(c, b));
            if !legal {
                rejected += 1;
                continue;
            }
            present.remove(&key(a, b));
            present.remove(&key(c, d));
            present.insert(key(a, d));
            present.insert(key(c, b));
            edges[i] = (a, d);
            edges[j] = (c, b);
            accepted += 1;
        }
    } else {
        rejected = cfg.swap_attempts;
    }

    let n = net.num_papers();
    let mut offsets = vec![0usize; n + 1];
    for p in 0..n {
        offsets[p + 1] = offsets[p] + net.out_degree(p as PaperId);
    }
    let mut cursor = offsets.clone();
    let mut targets = vec![0; m];
    let mut moved = 0usize;
    for &(s, t) in &edges {
        if net.references(s).binary_search(&t).is_err() {
            moved += 1;
        }
        targets[cursor[s as usize]] = t;
        cursor[s as usize] += 1;
    }
    RewireOutcome {
        network: CitationNetwork::from_reference_lists(net.papers().to_vec(), offsets, targets),
        accepted,
        rejected,
        hamming_fraction: if m == 0 { 0.0 } else { moved as f64 / m as f64 },
    }
}

/// True when every paper keeps both its reference and citation counts.
pub fn degrees_preserved(a: &CitationNetwork, b: &CitationNetwork) -> bool {
    a.num_papers() == b.num_papers()
        && (0..a.num_papers() as PaperId)
            .all(|p| a.out_degree(p) == b.out_degree(p) && a.in_degree(p) == b.in_degree(p))
}

/// Analytic randomized disruption `1 / (1 + R_k)`.
pub fn expected_cd_rand(rec: &DisruptionRecord) -> f64 {
    1.0 / (1.0 + rec.r_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedCd {
    pub id: PaperId,
    pub cd: f64,
    pub mean_rand: f64,
    /// Sample standard deviation across replicas.
    pub sd_rand: f64,
    /// `(cd - mean_rand) / sd_rand`; `None` when `sd_rand` is zero.
    pub z: Option<f64>,
    /// Mean over replicas of `1 / (1 + R_k)` measured on the replica.
    pub mean_analytic: f64,
    /// Replicas in which the paper is cited within the window.
    pub replicas: usize,
}

#[derive(Default, Clone, Copy)]
struct Running {
    n: usize,
    mean: f64,
    m2: f64,
    analytic: f64,
}

impl Running {
    fn push(&mut self, cd: f64, analytic: f64) {
        self.n += 1;
        let d = cd - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (cd - self.mean);
        self.analytic += analytic;
    }

    fn finish(self, id: PaperId, cd: f64) -> RandomizedCd {
        let sd = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64).max(0.0).sqrt()
        } else {
            0.0
        };
        RandomizedCd {
            id,
            cd,
            mean_rand: self.mean,
            sd_rand: sd,
            z: (sd > 0.0).then(|| (cd - self.mean) / sd),
            mean_analytic: if self.n > 0 {
                self.analytic / self.n as f64
            } else {
                f64::NAN
            },
            replicas: self.n,
        }
    }
}

/// Z-score of one paper against `n_rewires` independently rewired networks;
/// replica `i` uses seed `cfg.seed + i`. `None` if the paper has no CD.
pub fn z_score(
    net: &CitationNetwork,
    p: PaperId,
    cw: u32,
    n_rewires: usize,
    cfg: &RewireConfig,
) -> Option<RandomizedCd> {
    let observed = compute_cd(net, p, cw)?;
    let draws: Vec<Option<DisruptionRecord>> = (0..n_rewires as u64)
        .into_par_iter()
        .map(|i| {
            let replica = rewire(net, &cfg.with_seed(realization_seed(cfg.seed, i)));
            compute_cd(&replica.network, p, cw)
        })
        .collect();
    let mut acc = Running::default();
    for rec in draws.into_iter().flatten() {
        acc.push(rec.cd, expected_cd_rand(&rec));
    }
    Some(acc.finish(p, observed.cd))
}

/// Acceptance and mixing of one rewired replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub replica: usize,
    pub seed: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub hamming_fraction: f64,
}

/// Z-scores of every paper with a defined CD.
pub fn z_scores_all(net: &CitationNetwork, cw: u32, n_rewires: usize, cfg: &RewireConfig) -> Vec<RandomizedCd> {
    z_scores_with_mixing(net, cw, n_rewires, cfg).0
}

/// [`z_scores_all`] plus the mixing statistics of every replica.
pub fn z_scores_with_mixing(
    net: &CitationNetwork,
    cw: u32,
    n_rewires: usize,
    cfg: &RewireConfig,
) -> (Vec<RandomizedCd>, Vec<Mixing>) {
    let observed = compute_cd_all(net, cw);
    let n = net.num_papers();
    let mut acc = vec![Running::default(); n];
    let mut mixing = Vec::with_capacity(n_rewires);
    // Sequential over replicas keeps one replica in memory at a time and
    // accumulates in a fixed order.
    for i in 0..n_rewires {
        let seed = realization_seed(cfg.seed, i as u64);
        let replica = rewire(net, &cfg.with_seed(seed));
        for rec in compute_cd_all(&replica.network, cw) {
            acc[rec.id as usize].push(rec.cd, expected_cd_rand(&rec));
        }
        mixing.push(Mixing {
            replica: i,
            seed,
            accepted: replica.accepted,
            rejected: replica.rejected,
            hamming_fraction: replica.hamming_fraction,
        });
    }
    let scores = observed
        .iter()
        .map(|rec| acc[rec.id as usize].finish(rec.id, rec.cd))
        .collect();
    (scores, mixing)
}

pub fn write_zscores(path: impl AsRef<std::path::Path>, rows: &[RandomizedCd]) -> crate::Result<()> {
    let mut w = crate::corpus::csv_writer(path.as_ref())?;
    w.write_record(["id", "cd", "mean_rand", "sd_rand", "z"])?;
    for r in rows {
        w.write_record([
            r.id.to_string(),
            r.cd.to_string(),
            r.mean_rand.to_string(),
            r.sd_rand.to_string(),
            r.z.map(|z| z.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PaperNode;

    fn net(years: &[i32], edges: &[(PaperId, PaperId)]) -> CitationNetwork {
        let nodes = years
            .iter()
            .enumerate()
            .map(|(i, &y)| PaperNode::new(i as PaperId, y))
            .collect();
        CitationNetwork::from_edges(nodes, edges).unwrap()
    }

    #[test]
    fn frozen_instance_is_unchanged() {
        // 1 -> 0 and 3 -> 2: swapping would make 1 cite the later paper 2.
        let g = net(&[1, 2, 3, 4], &[(1, 0), (3, 2)]);
        let out = rewire(
            &g,
            &RewireConfig {
                swap_attempts: 100,
                seed: 4,
            },
        );
        assert_eq!(out.network, g);
        assert_eq!(out.accepted, 0);
        assert_eq!(out.rejected, 100);
        assert_eq!(out.hamming_fraction, 0.0);
    }

    #[test]
    fn legal_swap_happens() {
        // 2 -> 0 and 3 -> 1 can exchange targets.
        let g = net(&[1, 1, 2, 2], &[(2, 0), (3, 1)]);
        let out = rewire(
            &g,
            &RewireConfig {
                swap_attempts: 1,
                seed: 0,
            },
        );
        assert_eq!(out.accepted, 1);
        assert_eq!(out.network.references(2), &[1]);
        assert!(degrees_preserved(&g, &out.network));
        assert_eq!(out.hamming_fraction, 1.0);
    }

    #[test]
    fn analytic_values() {
        let rec = |ni, nj, nk| DisruptionRecord::from_counts(0, 1, 5, ni, nj, nk).unwrap();
        assert_eq!(expected_cd_rand(&rec(3, 0, 0)), 1.0);
        assert!((expected_cd_rand(&rec(10, 1, 2)) - 11.0 / 13.0).abs() < 1e-15);
        assert!((expected_cd_rand(&rec(1, 0, 99)) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn frozen_graph_has_no_z() {
        let g = net(&[1, 2, 3, 4], &[(1, 0), (3, 2)]);
        let cfg = RewireConfig {
            swap_attempts: 10,
            seed: 1,
        };
        let z = z_score(&g, 0, 5, 5, &cfg).unwrap();
        assert_eq!(z.sd_rand, 0.0);
        assert_eq!(z.z, None);
        assert_eq!(z.replicas, 5);
    }

    #[test]
    fn negative_cd_gives_negative_z() {
        // Focal 2 cites 0; citers 4 and 5 cite both (j-type), 6 cites 2 only.
        // Papers 1, 3, 7, 8, 9 give the edges room to rewire.
        let g = net(
            &[1, 1, 2, 2, 3, 3, 3, 3, 3, 3],
            &[
                (2, 0),
                (4, 0),
                (4, 2),
                (5, 0),
                (5, 2),
                (6, 2),
                (3, 1),
                (7, 3),
                (8, 1),
                (9, 3),
            ],
        );
        let cfg = RewireConfig {
            swap_attempts: 200,
            seed: 9,
        };
        let z = z_score(&g, 2, 5, 30, &cfg).unwrap();
        assert!(z.cd < 0.0);
        assert!(z.mean_rand > 0.0);
        assert!(z.z.unwrap() < 0.0);
    }
}
