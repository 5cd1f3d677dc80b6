//! Growth-and-redirection citation network generator.
//!
//! Period `t` adds `n(t)` papers, each with `min(r(t), pool)` distinct
//! references to papers from earlier periods. Every reference slot is filled
//! either by direct citation, sampling a paper `q` with weight
//! `(indeg(q) + c0) * exp(-(t - t_q) / tau)`, or, with probability `beta`, by
//! redirection: copying a reference of a uniformly chosen already-selected
//! target, which closes a triangle.
//!
//! Attachment weights use the in-degrees observed at the start of the period,
//! so papers of the same period do not see each other's references.
//! Sampling is two-level: a cohort (publication period) is chosen by its
//! aggregate weight, then a paper inside it either uniformly (the `c0` part)
//! or through a uniformly chosen in-edge (the in-degree part).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationNetwork, PaperId, PaperNode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    #[default]
    Floor,
    Round,
}

impl Rounding {
    fn apply(self, x: f64) -> u32 {
        let v = match self {
            Rounding::Floor => x.floor(),
            Rounding::Round => x.round(),
        };
        (v as u32).max(1)
    }
}

fn default_beta() -> f64 {
    0.2
}
fn default_tau() -> f64 {
    8.0
}
fn default_c0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub n1: u32,
    pub r1: u32,
    pub g_n: f64,
    pub g_r: f64,
    #[serde(rename = "T")]
    pub periods: u32,
    /// Period from which reference-list growth is switched off.
    #[serde(rename = "T_star", default)]
    pub quench_at: Option<u32>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rounding: Rounding,
}

impl GrowthConfig {
    /// The empirically calibrated setting: 30 initial papers with 5
    /// references, `g_n = 0.033`, `g_r = 0.018`, 150 periods.
    pub fn calibrated() -> Self {
        Self {
            n1: 30,
            r1: 5,
            g_n: 0.033,
            g_r: 0.018,
            periods: 150,
            quench_at: None,
            beta: default_beta(),
            tau: default_tau(),
            c0: default_c0(),
            seed: 0,
            rounding: Rounding::Floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n1 < 1 || self.r1 < 1 {
            return bad("n1 and r1 must be at least 1");
        }
        if self.periods < 1 {
            return bad("T must be at least 1");
        }
        if let Some(q) = self.quench_at {
            if q < 1 || q > self.periods {
                return bad("T_star must lie in 1..=T");
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return bad("tau must be positive");
        }
        if !self.c0.is_finite() || self.c0 <= 0.0 {
            return bad("c0 must be positive and finite");
        }
        if !self.g_n.is_finite() || !self.g_r.is_finite() {
            return bad("growth rates must be finite");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Seed of realization `index` in an ensemble with base seed `base`.
pub fn realization_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrowthSchedule {
    /// `n[t - 1]` papers in period `t`.
    pub n: Vec<u32>,
    /// `r[t - 1]` references per paper in period `t`.
    pub r: Vec<u32>,
}

impl GrowthSchedule {
    pub fn n_at(&self, t: u32) -> u32 {
        self.n[t as usize - 1]
    }

    pub fn r_at(&self, t: u32) -> u32 {
        self.r[t as usize - 1]
    }

    pub fn total_papers(&self) -> u64 {
        self.n.iter().map(|&x| x as u64).sum()
    }

    /// Edge count implied by the schedule when every paper takes
    /// `min(r(t), pool)` references.
    pub fn total_edges(&self) -> u64 {
        let mut pool = 0u64;
        let mut edges = 0u64;
        for (&n, &r) in self.n.iter().zip(&self.r) {
            edges += n as u64 * (r as u64).min(pool);
            pool += n as u64;
        }
        edges
    }
}

pub fn build_schedule(cfg: &GrowthConfig) -> GrowthSchedule {
    let periods = cfg.periods as usize;
    let grow = |base: u32, rate: f64, t: u32| cfg.rounding.apply(base as f64 * (rate * (t as f64 - 1.0)).exp());
    let n = (1..=cfg.periods).map(|t| grow(cfg.n1, cfg.g_n, t)).collect();
    let mut r: Vec<u32> = Vec::with_capacity(periods);
    for t in 1..=cfg.periods {
        let v = match cfg.quench_at {
            Some(q) if t > q => r[q as usize - 1],
            _ => grow(cfg.r1, cfg.g_r, t),
        };
        r.push(v);
    }
    GrowthSchedule { n, r }
}

#[derive(Debug, Clone)]
struct Cohort {
    year: i32,
    first: PaperId,
    size: u32,
    /// One entry per in-edge received by a member of the cohort.
    hits: Vec<PaperId>,
}

/// A citation network under construction.
#[derive(Debug, Clone)]
pub struct GrowthState {
    nodes: Vec<PaperNode>,
    ref_offsets: Vec<usize>,
    refs: Vec<PaperId>,
    cohorts: Vec<Cohort>,
    cohort_of: Vec<u32>,
    c0: f64,
    tau: f64,
}

impl GrowthState {
    pub fn new(c0: f64, tau: f64) -> Self {
        Self {
            nodes: Vec::new(),
            ref_offsets: vec![0],
            refs: Vec::new(),
            cohorts: Vec::new(),
            cohort_of: Vec::new(),
            c0,
            tau,
        }
    }

    pub fn num_papers(&self) -> usize {
        self.nodes.len()
    }

    pub fn references(&self, id: PaperId) -> &[PaperId] {
        let i = id as usize;
        &self.refs[self.ref_offsets[i]..self.ref_offsets[i + 1]]
    }

    /// Appends a paper published in `year` with the given distinct,
    /// strictly earlier references. Years must be non-decreasing.
    pub fn add_paper(&mut self, year: i32, group_label: Option<u8>, refs: &[PaperId]) -> PaperId {
        let id = self.nodes.len() as PaperId;
        match self.cohorts.last_mut() {
            Some(c) if c.year == year => c.size += 1,
            last => {
                assert!(last.is_none_or(|c| c.year < year), "papers must be added in year order");
                self.cohorts.push(Cohort {
                    year,
                    first: id,
                    size: 1,
                    hits: Vec::new(),
                });
            }
        }
        for &t in refs {
            debug_assert!(self.nodes[t as usize].year < year);
            let c = self.cohort_of[t as usize] as usize;
            self.cohorts[c].hits.push(t);
        }
        self.refs.extend_from_slice(refs);
        self.ref_offsets.push(self.refs.len());
        self.cohort_of.push(self.cohorts.len() as u32 - 1);
        self.nodes.push(PaperNode {
            group_label,
            ..PaperNode::new(id, year)
        });
        id
    }

    /// Attachment weights for citing papers of period `year`, frozen at the
    /// current in-degrees.
    pub fn period_sampler(&self, year: i32) -> PeriodSampler {
        let eligible = self.cohorts.partition_point(|c| c.year < year);
        let latest = eligible.checked_sub(1).map(|i| self.cohorts[i].year);
        let mut cum = Vec::with_capacity(eligible);
        let mut hit_len = Vec::with_capacity(eligible);
        let mut uniform_mass = Vec::with_capacity(eligible);
        let mut total = 0.0;
        for c in &self.cohorts[..eligible] {
            // Ages are measured from the latest eligible cohort; the common
            // factor cancels and keeps the newest weight at 1.
            let age = (latest.unwrap_or(c.year) - c.year) as f64;
            let decay = (-age / self.tau).exp();
            let um = self.c0 * c.size as f64;
            total += (um + c.hits.len() as f64) * decay;
            cum.push(total);
            hit_len.push(c.hits.len());
            uniform_mass.push(um);
        }
        let pool = self.cohorts[..eligible].iter().map(|c| c.size).sum();
        PeriodSampler {
            pool,
            cum,
            hit_len,
            uniform_mass,
        }
    }

    /// Draws `count` references for a paper of period `year`.
    pub fn pick_references<R: Rng>(&self, year: i32, count: usize, beta: f64, rng: &mut R) -> Vec<PaperId> {
        self.period_sampler(year).pick(self, count, beta, rng)
    }

    pub fn into_network(self) -> CitationNetwork {
        CitationNetwork::from_reference_lists(self.nodes, self.ref_offsets, self.refs)
    }
}

/// Frozen per-period attachment distribution over the pool of earlier papers.
#[derive(Debug, Clone)]
pub struct PeriodSampler {
    pool: u32,
    cum: Vec<f64>,
    hit_len: Vec<usize>,
    uniform_mass: Vec<f64>,
}

impl PeriodSampler {
    pub fn pool_size(&self) -> usize {
        self.pool as usize
    }

    /// Selection probability of `id` for a single direct-citation draw.
    pub fn probability(&self, state: &GrowthState, id: PaperId) -> f64 {
        let c = state.cohort_of[id as usize] as usize;
        if c >= self.cum.len() {
            return 0.0;
        }
        let cohort = &state.cohorts[c];
        let prev = if c == 0 { 0.0 } else { self.cum[c - 1] };
        let cohort_weight = self.cum[c] - prev;
        let hits = cohort.hits[..self.hit_len[c]].iter().filter(|&&h| h == id).count() as f64;
        let inner = (state.c0 + hits) / (self.uniform_mass[c] + self.hit_len[c] as f64);
        cohort_weight / self.cum[self.cum.len() - 1] * inner
    }

    fn draw<R: Rng>(&self, state: &GrowthState, rng: &mut R) -> PaperId {
        let total = *self.cum.last().expect("empty pool");
        let u = rng.random::<f64>() * total;
        let c = self.cum.partition_point(|&x| x <= u).min(self.cum.len() - 1);
        let cohort = &state.cohorts[c];
        let um = self.uniform_mass[c];
        let v = rng.random::<f64>() * (um + self.hit_len[c] as f64);
        if v < um {
            cohort.first + ((v / state.c0) as u32).min(cohort.size - 1)
        } else {
            let k = ((v - um) as usize).min(self.hit_len[c] - 1);
            cohort.hits[k]
        }
    }

    /// Returns `min(count, pool)` distinct references in selection order.
    pub fn pick<R: Rng>(&self, state: &GrowthState, count: usize, beta: f64, rng: &mut R) -> Vec<PaperId> {
        let pool = self.pool as usize;
        if count >= pool {
            return (0..self.pool).collect();
        }
        let mut selected: Vec<PaperId> = Vec::with_capacity(count);
        let mut rejections = 0usize;
        while selected.len() < count {
            if beta > 0.0 && rng.random::<f64>() < beta && !selected.is_empty() {
                let via = selected[rng.random_range(0..selected.len())];
                let refs = state.references(via);
                let open = refs.iter().filter(|r| !selected.contains(r)).count();
                if open > 0 {
                    let k = rng.random_range(0..open);
                    let copied = *refs.iter().filter(|r| !selected.contains(r)).nth(k).expect("k < open");
                    selected.push(copied);
                    continue;
                }
            }
            loop {
                let q = self.draw(state, rng);
                if !selected.contains(&q) {
                    selected.push(q);
                    break;
                }
                rejections += 1;
                if rejections > 1000 * count {
                    // Remaining mass has underflowed; fall back to a uniform
                    // choice among unselected papers.
                    let open: Vec<PaperId> = (0..self.pool).filter(|q| !selected.contains(q)).collect();
                    selected.push(open[rng.random_range(0..open.len())]);
                    break;
                }
            }
        }
        selected
    }
}

/// Splits new papers into two arms; arm B papers take `ref_multiplier`
/// times the scheduled reference count. With `ref_jitter > 0` every paper's
/// count is further scaled by `exp(ref_jitter * z)`, `z` standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmDesign {
    pub share_b: f64,
    pub ref_multiplier: f64,
    #[serde(default)]
    pub ref_jitter: f64,
}

fn grow_inner(cfg: &GrowthConfig, arms: Option<ArmDesign>) -> Result<CitationNetwork> {
    cfg.validate()?;
    let schedule = build_schedule(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let expected = schedule.total_papers() as usize;
    let mut state = GrowthState::new(cfg.c0, cfg.tau);
    state.nodes.reserve(expected);
    state.refs.reserve(schedule.total_edges() as usize);
    for t in 1..=cfg.periods {
        let year = t as i32;
        let sampler = state.period_sampler(year);
        let r = schedule.r_at(t) as usize;
        for _ in 0..schedule.n_at(t) {
            let (count, group) = match arms {
                None => (r, None),
                Some(a) => {
                    let (mult, group) = if rng.random::<f64>() < a.share_b {
                        (a.ref_multiplier, 1)
                    } else {
                        (1.0, 0)
                    };
                    let noise = if a.ref_jitter > 0.0 {
                        (a.ref_jitter * rng.sample::<f64, _>(StandardNormal)).exp()
                    } else {
                        1.0
                    };
                    (((r as f64) * mult * noise).round().max(1.0) as usize, Some(group))
                }
            };
            let refs = sampler.pick(&state, count, cfg.beta, &mut rng);
            state.add_paper(year, group, &refs);
        }
    }
    Ok(state.into_network())
}

/// Grows one realization; bit-for-bit reproducible for a given seed.
pub fn grow(cfg: &GrowthConfig) -> Result<CitationNetwork> {
    grow_inner(cfg, None)
}

/// Grows a network whose papers are randomly assigned to arm 0 or arm B
/// (group label 1), the latter drawing longer reference lists.
pub fn grow_two_arm(cfg: &GrowthConfig, arms: ArmDesign) -> Result<CitationNetwork> {
    if !(0.0..=1.0).contains(&arms.share_b)
        || arms.ref_multiplier.is_nan()
        || arms.ref_multiplier <= 0.0
        || !(arms.ref_jitter >= 0.0 && arms.ref_jitter.is_finite())
    {
        return Err(Error::InvalidConfig("invalid arm design".into()));
    }
    grow_inner(cfg, Some(arms))
}
