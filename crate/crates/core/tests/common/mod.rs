#![allow(dead_code)]

use std::collections::HashSet;

use cdlab::econometrics::{Design, FixedEffects};
use cdlab::table::{PaperRow, PaperTable};
use cdlab::{CitationNetwork, PaperId, PaperNode};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random layered DAG: edges only point from later to strictly earlier layers.
#[derive(Debug, Clone)]
pub struct Dag {
    pub years: Vec<i32>,
    pub edges: Vec<(usize, usize)>,
}

impl Dag {
    pub fn random<R: Rng>(rng: &mut R, max_nodes: usize, edge_p: f64, max_layers: i32) -> Self {
        let n = rng.random_range(2..=max_nodes);
        let layers = rng.random_range(2..=max_layers);
        let years: Vec<i32> = (0..n).map(|_| rng.random_range(1..=layers)).collect();
        let mut edges = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if years[t] < years[s] && rng.random::<f64>() < edge_p {
                    edges.push((s, t));
                }
            }
        }
        Self { years, edges }
    }

    /// Network with ids renumbered by (year, index); returns the dense id of
    /// every original index.
    pub fn network(&self) -> (CitationNetwork, Vec<PaperId>) {
        let mut order: Vec<usize> = (0..self.years.len()).collect();
        order.sort_by_key(|&i| (self.years[i], i));
        let mut dense = vec![0; self.years.len()];
        for (pos, &i) in order.iter().enumerate() {
            dense[i] = pos as PaperId;
        }
        let nodes = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| PaperNode::new(pos as PaperId, self.years[i]))
            .collect();
        let edges: Vec<(PaperId, PaperId)> = self.edges.iter().map(|&(s, t)| (dense[s], dense[t])).collect();
        (CitationNetwork::from_edges(nodes, &edges).unwrap(), dense)
    }

    /// `(N_i, N_j, N_k)` of original node `p` by enumerating every candidate citer.
    pub fn brute_force(&self, p: usize, cw: u32) -> (u64, u64, u64) {
        let set: HashSet<(usize, usize)> = self.edges.iter().copied().collect();
        let refs: Vec<usize> = self.edges.iter().filter(|e| e.0 == p).map(|e| e.1).collect();
        let tp = self.years[p];
        let (mut ni, mut nj, mut nk) = (0, 0, 0);
        for q in 0..self.years.len() {
            if self.years[q] <= tp || self.years[q] > tp + cw as i32 {
                continue;
            }
            let cites_p = set.contains(&(q, p));
            let cites_r = refs.iter().any(|&r| set.contains(&(q, r)));
            match (cites_p, cites_r) {
                (true, false) => ni += 1,
                (true, true) => nj += 1,
                (false, true) => nk += 1,
                (false, false) => {}
            }
        }
        (ni, nj, nk)
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Inverse through repeated solves.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| solve_dense(a.to_vec(), (0..n).map(|i| f64::from(u8::from(i == j))).collect()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Least squares with one dummy per group (no intercept) via the normal
/// equations. Returns slope estimates and their classical standard errors.
pub fn lsdv(y: &[f64], x: &[Vec<f64>], groups: &[usize], n_groups: usize) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let p = x[0].len();
    let k = p + n_groups;
    let row = |i: usize| {
        let mut r = x[i].clone();
        r.extend((0..n_groups).map(|g| f64::from(u8::from(groups[i] == g))));
        r
    };
    let rows: Vec<Vec<f64>> = (0..n).map(row).collect();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (r, &yi) in rows.iter().zip(y) {
        for a in 0..k {
            xty[a] += r[a] * yi;
            for b in 0..k {
                xtx[a][b] += r[a] * r[b];
            }
        }
    }
    let beta = solve_dense(xtx.clone(), xty);
    let rss: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, &yi)| (yi - r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).powi(2))
        .sum();
    let sigma2 = rss / (n - k) as f64;
    let inv = invert(&xtx);
    let se = (0..p).map(|j| (inv[j][j] * sigma2).sqrt()).collect();
    (beta[..p].to_vec(), se)
}

/// Ingredients of a planted-effects table.
pub struct Planted {
    pub rows: usize,
    pub years: i32,
    pub journals: u32,
    pub b_refs: f64,
    pub b_citations: f64,
    pub b_team: f64,
    pub noise_sd: f64,
}

impl Planted {
    /// Rows with CD = Σ b·ln(x) + year effect + journal effect + noise.
    pub fn table<R: Rng>(
        &self,
        rng: &mut R,
        year_effect: impl Fn(i32) -> f64,
        team_effect: impl Fn(u32) -> f64,
    ) -> PaperTable {
        let rows = (0..self.rows)
            .map(|i| {
                let year = 1 + rng.random_range(0..self.years);
                let journal = rng.random_range(0..self.journals);
                let refs = rng.random_range(10..=200u32);
                let citations = rng.random_range(1..=300u32);
                let team = rng.random_range(1..=12u32);
                let noise = self.noise_sd * standard_normal(rng);
                let cd = self.b_refs * (refs as f64).ln()
                    + self.b_citations * (citations as f64).ln()
                    + self.b_team * (team as f64).ln()
                    + year_effect(year)
                    + team_effect(team)
                    + 0.001 * journal as f64
                    + noise;
                PaperRow {
                    id: i as u32,
                    year,
                    journal_id: Some(journal),
                    team_size: Some(team),
                    refs,
                    citations,
                    cd,
                    normcd: None,
                    group_label: None,
                }
            })
            .collect();
        PaperTable { rows }
    }
}

/// Box-Muller standard normal.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random within-estimator design with 2..=20 groups and 1..=10 regressors;
/// also returns the raw rows and group of every row.
pub fn random_design<R: Rng>(rng: &mut R) -> (Design, Vec<Vec<f64>>, Vec<usize>) {
    let g = rng.random_range(2..=20);
    let p = rng.random_range(1..=10);
    let n = g * 3 + p + rng.random_range(5..80);
    let groups: Vec<usize> = (0..n).map(|i| if i < g { i } else { rng.random_range(0..g) }).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p).map(|_| standard_normal(rng) + groups[i] as f64 * 0.3).collect())
        .collect();
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let alpha: Vec<f64> = (0..g).map(|_| rng.random_range(-5.0..5.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| alpha[groups[i]] + x[i].iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + standard_normal(rng))
        .collect();
    let design = Design {
        y: DVector::from_vec(y),
        x: DMatrix::from_fn(n, p, |i, j| x[i][j]),
        columns: (0..p).map(|j| format!("x{j}")).collect(),
        groups: Some(groups.clone()),
        n_groups: g,
        fixed_effects: FixedEffects::Year,
        year_origin: 0,
        factors: vec![],
        has_intercept: false,
    };
    (design, x, groups)
}
