//! Reproducible pipelines: network generation, the null model, the
//! reference-list quench simulation, the year and team-size regressions and
//! the two-group quasi-experiment.
//!
//! Every `run_*` function writes `manifest.json` before any output and
//! rewrites it with output checksums once all files are in place.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{csv_writer, load_corpus_with, CitationNetwork, CorpusFilter, FilterAudit, LoadOptions, PaperId};
use crate::econometrics::{
    decompose_group_gap, fit_spec, marginal_effects, Dependent, DependentTransform, FitResult, FixedEffects, GroupGap,
    LevelEffect, RegressionSpec, SeType, Term, TermTransform, Variable,
};
use crate::error::{Error, Result};
use crate::generator::{build_schedule, grow, grow_two_arm, realization_seed, ArmDesign, GrowthConfig, GrowthSchedule};
use crate::metrics::{compute_cd, compute_cd_all, normalize_cd, DisruptionRecord};
use crate::nullmodel::{write_zscores, z_scores_with_mixing, RandomizedCd, RewireConfig};
use crate::table::PaperTable;

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

/// Parses a configuration written as JSON (leading `{`) or TOML.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    if text.trim_start().starts_with('{') {
        Ok(serde_json::from_str(text)?)
    } else {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

pub fn read_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// SHA-256 of the canonical JSON encoding of `cfg`.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment: String,
    pub config_hash: String,
    /// Full configuration, enough to re-run the experiment.
    pub config: serde_json::Value,
    pub base_seed: Option<u64>,
    pub realizations: Option<usize>,
    pub software_version: String,
    /// Checksums of input files, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// Checksums of emitted files, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    /// `None` until the run has completed.
    pub wall_clock_seconds: Option<f64>,
    /// Run diagnostics such as rewiring acceptance and mixing.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl ExperimentManifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Names of outputs whose current checksum differs from the recorded one.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (name, sum) in &self.outputs {
            let path = dir.as_ref().join(name);
            if !path.exists() || file_sha256(&path)? != *sum {
                bad.push(name.clone());
            }
        }
        Ok(bad)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

struct Recorder {
    dir: PathBuf,
    manifest: ExperimentManifest,
    start: Instant,
}

impl Recorder {
    fn begin<C: Serialize>(
        experiment: &str,
        cfg: &C,
        seed: Option<u64>,
        realizations: Option<usize>,
        inputs: BTreeMap<String, String>,
        dir: &Path,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let manifest = ExperimentManifest {
            experiment: experiment.to_string(),
            config_hash: config_hash(cfg)?,
            config: serde_json::to_value(cfg)?,
            base_seed: seed,
            realizations,
            software_version: SOFTWARE_VERSION.to_string(),
            inputs,
            outputs: BTreeMap::new(),
            wall_clock_seconds: None,
            diagnostics: BTreeMap::new(),
        };
        manifest.write(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            start: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let sum = file_sha256(self.path(name))?;
        self.manifest.outputs.insert(name.to_string(), sum);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        std::fs::write(self.path(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.record(name)
    }

    fn finish(mut self) -> Result<ExperimentManifest> {
        self.manifest.wall_clock_seconds = Some(self.start.elapsed().as_secs_f64());
        self.manifest.write(&self.dir)?;
        Ok(self.manifest)
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares line `y = intercept + slope * x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let r = pearson(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2: r * r,
        points: x.len(),
    })
}

/// True when both networks hold the same papers, with the same reference
/// lists, for every publication year before `year`.
pub fn identical_before(a: &CitationNetwork, b: &CitationNetwork, year: i32) -> bool {
    let na = a.papers().partition_point(|p| p.year < year);
    let nb = b.papers().partition_point(|p| p.year < year);
    na == nb && (0..na as PaperId).all(|p| a.paper(p) == b.paper(p) && a.references(p) == b.references(p))
}

// ---------------------------------------------------------------------------
// Quench simulation

fn default_realizations() -> usize {
    10
}
fn default_cws() -> Vec<u32> {
    vec![5, 10]
}
fn default_burn_in() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchConfig {
    /// Growth parameters; `T_star` is the quench period.
    pub growth: GrowthConfig,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_cws")]
    pub cws: Vec<u32>,
    /// First period included in the summaries.
    #[serde(default = "default_burn_in")]
    pub burn_in: u32,
}

impl QuenchConfig {
    pub fn new(growth: GrowthConfig) -> Self {
        Self {
            growth,
            realizations: default_realizations(),
            cws: default_cws(),
            burn_in: default_burn_in(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.growth.validate()?;
        if self.growth.quench_at.is_none() {
            return Err(Error::InvalidConfig("quench experiment needs T_star".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidConfig("need at least one realization".into()));
        }
        if self.cws.is_empty() || self.cws.iter().any(|&cw| cw == 0 || cw >= self.growth.periods) {
            return Err(Error::InvalidConfig("citation windows must lie in 1..T".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Reference lists grow for all periods.
    Ci,
    /// Reference-list growth stops at `T_star`.
    Quenched,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Ci, Scenario::Quenched];

    pub fn growth_config(self, base: &GrowthConfig) -> GrowthConfig {
        match self {
            Scenario::Ci => GrowthConfig {
                quench_at: None,
                ..base.clone()
            },
            Scenario::Quenched => base.clone(),
        }
    }
}

/// Yearly means of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub scenario: Scenario,
    pub realization: usize,
    pub seed: u64,
    pub cw: u32,
    pub t: i32,
    pub r_t: u32,
    /// Papers of period `t` with a defined CD.
    pub papers: usize,
    pub mean_cd: f64,
    pub mean_cd_nok: f64,
    pub mean_rk: f64,
}

/// Across-realization mean, sample sd and standard error of the yearly means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePoint {
    pub scenario: Scenario,
    pub cw: u32,
    pub t: i32,
    pub r_t: u32,
    pub realizations: usize,
    pub papers: usize,
    pub mean_cd: f64,
    pub sd_cd: f64,
    pub se_cd: f64,
    pub mean_cd_nok: f64,
    pub mean_rk: f64,
    pub sd_rk: f64,
    pub se_rk: f64,
}

#[derive(Debug, Clone)]
pub struct QuenchResult {
    pub schedules: BTreeMap<Scenario, GrowthSchedule>,
    pub realizations: Vec<SeriesPoint>,
    pub ensemble: Vec<EnsemblePoint>,
}

impl QuenchResult {
    /// Ensemble points of one scenario and window, ordered by period.
    pub fn series(&self, scenario: Scenario, cw: u32) -> Vec<&EnsemblePoint> {
        self.ensemble
            .iter()
            .filter(|p| p.scenario == scenario && p.cw == cw)
            .collect()
    }

    pub fn point(&self, scenario: Scenario, cw: u32, t: i32) -> Option<&EnsemblePoint> {
        self.ensemble
            .iter()
            .find(|p| p.scenario == scenario && p.cw == cw && p.t == t)
    }

    /// Least-squares fit of mean `R_k(t)` against `r(t)`.
    pub fn rk_scaling(&self, scenario: Scenario, cw: u32) -> Option<LinearFit> {
        let s = self.series(scenario, cw);
        let x: Vec<f64> = s.iter().map(|p| p.r_t as f64).collect();
        let y: Vec<f64> = s.iter().map(|p| p.mean_rk).collect();
        linear_fit(&x, &y)
    }
}

fn realization_series(
    cfg: &QuenchConfig,
    scenario: Scenario,
    index: usize,
    schedule: &GrowthSchedule,
) -> Result<Vec<SeriesPoint>> {
    let seed = realization_seed(cfg.growth.seed, index as u64);
    let growth = scenario.growth_config(&cfg.growth).with_seed(seed);
    let net = grow(&growth)?;
    log::info!(
        "{scenario:?} realization {index}: {} papers, {} edges",
        net.num_papers(),
        net.num_edges()
    );
    let mut out = Vec::new();
    for &cw in &cfg.cws {
        let records = compute_cd_all(&net, cw);
        let last = growth.periods as i32 - cw as i32;
        let mut sums: BTreeMap<i32, (usize, f64, f64, f64)> = BTreeMap::new();
        for rec in &records {
            if rec.year >= cfg.burn_in as i32 && rec.year <= last {
                let e = sums.entry(rec.year).or_default();
                e.0 += 1;
                e.1 += rec.cd;
                e.2 += rec.cd_nok;
                e.3 += rec.r_k;
            }
        }
        for (t, (n, cd, nok, rk)) in sums {
            let n_f = n as f64;
            out.push(SeriesPoint {
                scenario,
                realization: index,
                seed,
                cw,
                t,
                r_t: schedule.r_at(t as u32),
                papers: n,
                mean_cd: cd / n_f,
                mean_cd_nok: nok / n_f,
                mean_rk: rk / n_f,
            });
        }
    }
    Ok(out)
}

fn ensemble_of(points: &[SeriesPoint]) -> Vec<EnsemblePoint> {
    let mut groups: BTreeMap<(Scenario, u32, i32), Vec<&SeriesPoint>> = BTreeMap::new();
    for p in points {
        groups.entry((p.scenario, p.cw, p.t)).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|((scenario, cw, t), ps)| {
            let n = ps.len();
            let cd: Vec<f64> = ps.iter().map(|p| p.mean_cd).collect();
            let rk: Vec<f64> = ps.iter().map(|p| p.mean_rk).collect();
            let (mean_cd, sd_cd) = mean_sd(&cd);
            let (mean_rk, sd_rk) = mean_sd(&rk);
            EnsemblePoint {
                scenario,
                cw,
                t,
                r_t: ps[0].r_t,
                realizations: n,
                papers: ps.iter().map(|p| p.papers).sum(),
                mean_cd,
                sd_cd,
                se_cd: sd_cd / (n as f64).sqrt(),
                mean_cd_nok: ps.iter().map(|p| p.mean_cd_nok).sum::<f64>() / n as f64,
                mean_rk,
                sd_rk,
                se_rk: sd_rk / (n as f64).sqrt(),
            }
        })
        .collect()
}

/// Grows both scenarios with matched seeds and summarizes CD and `R_k` by
/// period for every citation window.
pub fn simulate_quench(cfg: &QuenchConfig) -> Result<QuenchResult> {
    cfg.validate()?;
    let schedules: BTreeMap<Scenario, GrowthSchedule> = Scenario::ALL
        .iter()
        .map(|&s| (s, build_schedule(&s.growth_config(&cfg.growth))))
        .collect();
    let jobs: Vec<(Scenario, usize)> = Scenario::ALL
        .iter()
        .flat_map(|&s| (0..cfg.realizations).map(move |i| (s, i)))
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(s, i)| realization_series(cfg, s, i, &schedules[&s]))
        .collect::<Result<Vec<_>>>()?;
    let realizations: Vec<SeriesPoint> = per_job.into_iter().flatten().collect();
    let ensemble = ensemble_of(&realizations);
    Ok(QuenchResult {
        schedules,
        realizations,
        ensemble,
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ScheduleRow {
    t: u32,
    n_t: u32,
    r_ci: u32,
    r_quenched: u32,
}

#[derive(Serialize)]
struct ScalingRow {
    scenario: Scenario,
    cw: u32,
    slope: f64,
    intercept: f64,
    r2: f64,
    points: usize,
}

/// Runs [`simulate_quench`] and writes `quench_schedule.csv`,
/// `quench_realizations.csv`, `quench_ensemble.csv` and `quench_scaling.csv`.
pub fn run_quench(cfg: &QuenchConfig, out_dir: impl AsRef<Path>) -> Result<(ExperimentManifest, QuenchResult)> {
    cfg.validate()?;
    let mut rec = Recorder::begin(
        "quench",
        cfg,
        Some(cfg.growth.seed),
        Some(cfg.realizations),
        BTreeMap::new(),
        out_dir.as_ref(),
    )?;
    let result = simulate_quench(cfg)?;

    let ci = &result.schedules[&Scenario::Ci];
    let qu = &result.schedules[&Scenario::Quenched];
    let schedule: Vec<ScheduleRow> = (1..=cfg.growth.periods)
        .map(|t| ScheduleRow {
            t,
            n_t: ci.n_at(t),
            r_ci: ci.r_at(t),
            r_quenched: qu.r_at(t),
        })
        .collect();
    write_rows(&rec.path("quench_schedule.csv"), &schedule)?;
    rec.record("quench_schedule.csv")?;
    write_rows(&rec.path("quench_realizations.csv"), &result.realizations)?;
    rec.record("quench_realizations.csv")?;
    write_rows(&rec.path("quench_ensemble.csv"), &result.ensemble)?;
    rec.record("quench_ensemble.csv")?;
    let scaling: Vec<ScalingRow> = Scenario::ALL
        .iter()
        .flat_map(|&s| cfg.cws.iter().map(move |&cw| (s, cw)))
        .filter_map(|(scenario, cw)| {
            result.rk_scaling(scenario, cw).map(|f| ScalingRow {
                scenario,
                cw,
                slope: f.slope,
                intercept: f.intercept,
                r2: f.r2,
                points: f.points,
            })
        })
        .collect();
    write_rows(&rec.path("quench_scaling.csv"), &scaling)?;
    rec.record("quench_scaling.csv")?;
    Ok((rec.finish()?, result))
}

// ---------------------------------------------------------------------------
// Network generation and null model

/// Directory of realization `i` inside a `generate` output directory.
pub fn realization_dir(i: usize) -> String {
    format!("realization_{i:03}")
}

/// Grows `realizations` networks with seeds `base + i` and writes each to
/// `realization_NNN/{nodes,edges}.csv`.
pub fn run_generate(cfg: &GrowthConfig, realizations: usize, out_dir: impl AsRef<Path>) -> Result<ExperimentManifest> {
    cfg.validate()?;
    if realizations == 0 {
        return Err(Error::InvalidConfig("realizations must be positive".into()));
    }
    let mut rec = Recorder::begin(
        "generate",
        cfg,
        Some(cfg.seed),
        Some(realizations),
        BTreeMap::new(),
        out_dir.as_ref(),
    )?;
    let written: Vec<Result<(u64, usize, usize)>> = (0..realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(cfg.seed, i as u64);
            let net = grow(&cfg.with_seed(seed))?;
            let dir = rec.path(&realization_dir(i));
            std::fs::create_dir_all(&dir)?;
            crate::corpus::write_corpus(&net, dir.join("nodes.csv"), dir.join("edges.csv"))?;
            Ok((seed, net.num_papers(), net.num_edges()))
        })
        .collect();
    let mut seeds = Vec::with_capacity(realizations);
    for (i, w) in written.into_iter().enumerate() {
        let (seed, papers, edges) = w?;
        let dir = realization_dir(i);
        rec.record(&format!("{dir}/nodes.csv"))?;
        rec.record(&format!("{dir}/edges.csv"))?;
        seeds.push(serde_json::json!({ "realization": i, "seed": seed, "papers": papers, "edges": edges }));
    }
    rec.manifest
        .diagnostics
        .insert("realizations".into(), serde_json::Value::Array(seeds));
    rec.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModelConfig {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    #[serde(default = "default_cw")]
    pub cw: u32,
    pub rewires: usize,
    pub swaps_per_edge: f64,
    pub seed: u64,
    #[serde(default)]
    pub strict: bool,
}

/// Z-scores of every paper against rewired replicas, written to
/// `zscores.csv`; per-replica acceptance and Hamming distance go to the
/// manifest.
pub fn run_nullmodel(
    cfg: &NullModelConfig,
    out_dir: impl AsRef<Path>,
) -> Result<(ExperimentManifest, Vec<RandomizedCd>)> {
    if cfg.rewires == 0 || cfg.cw == 0 || cfg.swaps_per_edge.is_nan() || cfg.swaps_per_edge < 0.0 {
        return Err(Error::InvalidConfig(
            "rewires and cw must be positive, swaps_per_edge non-negative".into(),
        ));
    }
    let mut inputs = BTreeMap::new();
    for p in [&cfg.nodes, &cfg.edges] {
        inputs.insert(p.display().to_string(), file_sha256(p)?);
    }
    let mut rec = Recorder::begin(
        "nullmodel",
        cfg,
        Some(cfg.seed),
        Some(cfg.rewires),
        inputs,
        out_dir.as_ref(),
    )?;
    let net = load_corpus_with(&cfg.nodes, &cfg.edges, LoadOptions { strict: cfg.strict })?.network;
    let rewire_cfg = RewireConfig::per_edge(&net, cfg.swaps_per_edge, cfg.seed);
    let (scores, mixing) = z_scores_with_mixing(&net, cfg.cw, cfg.rewires, &rewire_cfg);
    write_zscores(rec.path("zscores.csv"), &scores)?;
    rec.record("zscores.csv")?;
    rec.manifest
        .diagnostics
        .insert("swap_attempts".into(), rewire_cfg.swap_attempts.into());
    rec.manifest
        .diagnostics
        .insert("mixing".into(), serde_json::to_value(&mixing)?);
    Ok((rec.finish()?, scores))
}

// ---------------------------------------------------------------------------
// Analysis tables

fn default_cw() -> u32 {
    5
}
fn default_team_size_max() -> u32 {
    10
}
fn default_journals() -> u32 {
    1
}

/// Synthetic two-arm corpus: arm B (group 1) papers draw longer reference
/// lists, team sizes and journals are assigned independently of the arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoArmConfig {
    pub growth: GrowthConfig,
    pub arms: ArmDesign,
    #[serde(default = "default_cw")]
    pub cw: u32,
    /// First analysed period; defaults to the last five fully observed ones.
    #[serde(default)]
    pub from_year: Option<i32>,
    #[serde(default = "default_team_size_max")]
    pub team_size_max: u32,
    #[serde(default = "default_journals")]
    pub journals: u32,
}

impl TwoArmConfig {
    fn year_range(&self) -> (i32, i32) {
        let last = self.growth.periods as i32 - self.cw as i32;
        (self.from_year.unwrap_or(last - 4), last)
    }
}

/// Builds the analysis table of a synthetic two-arm corpus.
pub fn two_arm_table(cfg: &TwoArmConfig) -> Result<PaperTable> {
    if cfg.cw == 0 || cfg.team_size_max == 0 || cfg.journals == 0 {
        return Err(Error::InvalidConfig(
            "cw, team_size_max and journals must be positive".into(),
        ));
    }
    let net = grow_two_arm(&cfg.growth, cfg.arms)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.growth.seed ^ 0x5eed_7ea3);
    let nodes = net
        .papers()
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.team_size = Some(rng.random_range(1..=cfg.team_size_max));
            p.journal_id = Some(rng.random_range(0..cfg.journals));
            p
        })
        .collect();
    let net = net.with_nodes(nodes)?;
    let (from, to) = cfg.year_range();
    let ids: Vec<PaperId> = net
        .papers()
        .iter()
        .filter(|p| p.year >= from && p.year <= to)
        .map(|p| p.id)
        .collect();
    let records: Vec<DisruptionRecord> = ids.par_iter().filter_map(|&p| compute_cd(&net, p, cfg.cw)).collect();
    Ok(PaperTable::from_records(&net, &records, None))
}

/// Where an analysis table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableSource {
    /// A per-paper table CSV (`id,year,journal_id,team_size,r,c,cd,normcd,group_label`).
    Table {
        path: PathBuf,
    },
    /// A node/edge corpus; CD is computed with window `cw`.
    Corpus {
        nodes: PathBuf,
        edges: PathBuf,
        #[serde(default = "default_cw")]
        cw: u32,
        #[serde(default)]
        strict: bool,
    },
    TwoArm(TwoArmConfig),
}

impl TableSource {
    /// Resolves relative paths against `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let fix = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        match self {
            TableSource::Table { path } => TableSource::Table { path: fix(path) },
            TableSource::Corpus {
                nodes,
                edges,
                cw,
                strict,
            } => TableSource::Corpus {
                nodes: fix(nodes),
                edges: fix(edges),
                cw: *cw,
                strict: *strict,
            },
            other => other.clone(),
        }
    }

    fn input_files(&self) -> Vec<&Path> {
        match self {
            TableSource::Table { path } => vec![path],
            TableSource::Corpus { nodes, edges, .. } => vec![nodes, edges],
            TableSource::TwoArm(_) => vec![],
        }
    }

    pub fn checksums(&self) -> Result<BTreeMap<String, String>> {
        self.input_files()
            .into_iter()
            .map(|p| Ok((p.display().to_string(), file_sha256(p)?)))
            .collect()
    }

    pub fn load(&self) -> Result<PaperTable> {
        match self {
            TableSource::Table { path } => PaperTable::read_csv(path),
            TableSource::Corpus {
                nodes,
                edges,
                cw,
                strict,
            } => {
                let net = load_corpus_with(nodes, edges, LoadOptions { strict: *strict })?.network;
                let records = compute_cd_all(&net, *cw);
                let normcd = if net.papers().iter().all(|p| p.journal_id.is_some()) {
                    Some(normalize_cd(&records, &net)?.normcd)
                } else {
                    None
                };
                Ok(PaperTable::from_records(&net, &records, normcd.as_deref()))
            }
            TableSource::TwoArm(cfg) => two_arm_table(cfg),
        }
    }
}

fn apply_filter(table: PaperTable, filter: Option<&CorpusFilter>) -> Result<(PaperTable, Option<FilterAudit>)> {
    match filter {
        None => Ok((table, None)),
        Some(f) => {
            let use_normcd = table.rows.iter().any(|r| r.normcd.is_some());
            let (t, audit) = table.filtered(f, use_normcd)?;
            Ok((t, Some(audit)))
        }
    }
}

fn write_effects(path: &Path, factor: &str, effects: &[LevelEffect]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        factor,
        "estimate",
        "se",
        "ci_low",
        "ci_high",
        "p_value",
        "significant",
        "baseline",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in effects {
        w.write_record([
            e.level.to_string(),
            e.estimate.to_string(),
            opt(e.se),
            opt(e.ci.map(|c| c.0)),
            opt(e.ci.map(|c| c.1)),
            opt(e.p_value),
            e.significant.to_string(),
            e.baseline.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn significant_share(effects: &[LevelEffect]) -> f64 {
    let tested: Vec<_> = effects.iter().filter(|e| !e.baseline).collect();
    if tested.is_empty() {
        return 0.0;
    }
    tested.iter().filter(|e| e.significant).count() as f64 / tested.len() as f64
}

// ---------------------------------------------------------------------------
// Year trend

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub input: TableSource,
    #[serde(default)]
    pub filter: Option<CorpusFilter>,
    /// Defaults to the earliest year in the table.
    #[serde(default)]
    pub baseline_year: Option<i32>,
    #[serde(default)]
    pub se_type: SeType,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    pub fit: FitResult,
    pub effects: Vec<LevelEffect>,
    /// Share of non-baseline years flagged significant at 5%.
    pub significant_share: f64,
}

/// Fits the year-trend model with journal fixed effects and extracts the
/// per-year effects relative to `baseline_year`.
pub fn run_trend_analysis(table: &PaperTable, baseline_year: Option<i32>, se_type: SeType) -> Result<TrendReport> {
    let baseline = match baseline_year {
        Some(y) => y,
        None => table
            .rows
            .iter()
            .map(|r| r.year)
            .min()
            .ok_or_else(|| Error::InvalidSpec("empty table".into()))?,
    };
    let spec = RegressionSpec {
        se_type,
        ..RegressionSpec::year_trend_model(baseline)
    };
    let fit = fit_spec(table, &spec)?;
    let effects = marginal_effects(&fit, Variable::Year.name())?;
    Ok(TrendReport {
        significant_share: significant_share(&effects),
        fit,
        effects,
    })
}

/// Writes `trend_effects.csv` and `trend_fit.json` (plus `filter_audit.json`
/// when a filter is configured).
pub fn run_trend(cfg: &TrendConfig, out_dir: impl AsRef<Path>) -> Result<(ExperimentManifest, TrendReport)> {
    let mut rec = Recorder::begin("trend", cfg, None, None, cfg.input.checksums()?, out_dir.as_ref())?;
    let (table, audit) = apply_filter(cfg.input.load()?, cfg.filter.as_ref())?;
    if let Some(a) = audit {
        rec.json("filter_audit.json", &a)?;
    }
    let report = run_trend_analysis(&table, cfg.baseline_year, cfg.se_type)?;
    write_effects(&rec.path("trend_effects.csv"), "year", &report.effects)?;
    rec.record("trend_effects.csv")?;
    rec.json("trend_fit.json", &report.fit)?;
    Ok((rec.finish()?, report))
}

// ---------------------------------------------------------------------------
// Team size

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamsizeConfig {
    pub input: TableSource,
    #[serde(default)]
    pub filter: Option<CorpusFilter>,
    #[serde(default)]
    pub se_type: SeType,
}

#[derive(Debug, Clone, Serialize)]
pub struct TeamsizeReport {
    pub fit: FitResult,
    /// Effects in NormCD (standard deviation) units relative to k = 1.
    pub effects: Vec<LevelEffect>,
    pub significant_share: f64,
    /// First team size whose effect turns positive after a negative one.
    pub sign_change: Option<i64>,
    /// Rows dropped because their journal-year cell has no NormCD.
    pub dropped_without_normcd: usize,
}

/// First level whose estimate is positive after at least one negative
/// non-baseline level.
pub fn sign_change_level(effects: &[LevelEffect]) -> Option<i64> {
    let mut seen_negative = false;
    for e in effects.iter().filter(|e| !e.baseline) {
        if e.estimate < 0.0 {
            seen_negative = true;
        } else if seen_negative && e.estimate > 0.0 {
            return Some(e.level);
        }
    }
    None
}

/// Fits the team-size model on NormCD with year fixed effects. NormCD is
/// computed from journal-year cells when no row carries it.
pub fn run_teamsize_analysis(table: &PaperTable, se_type: SeType) -> Result<TeamsizeReport> {
    let mut table = table.clone();
    if table.rows.iter().all(|r| r.normcd.is_none()) {
        table.normalize()?;
    }
    let before = table.len();
    table.rows.retain(|r| r.normcd.is_some());
    let dropped = before - table.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} rows without NormCD");
    }
    let spec = RegressionSpec {
        se_type,
        ..RegressionSpec::team_size_model()
    };
    let fit = fit_spec(&table, &spec)?;
    let effects = marginal_effects(&fit, Variable::TeamSize.name())?;
    Ok(TeamsizeReport {
        significant_share: significant_share(&effects),
        sign_change: sign_change_level(&effects),
        fit,
        effects,
        dropped_without_normcd: dropped,
    })
}

/// Writes `teamsize_effects.csv` and `teamsize_fit.json`.
pub fn run_teamsize(cfg: &TeamsizeConfig, out_dir: impl AsRef<Path>) -> Result<(ExperimentManifest, TeamsizeReport)> {
    let mut rec = Recorder::begin("teamsize", cfg, None, None, cfg.input.checksums()?, out_dir.as_ref())?;
    let mut table = cfg.input.load()?;
    if cfg.filter.is_some() && table.rows.iter().all(|r| r.normcd.is_none()) {
        table.normalize()?;
    }
    let (table, audit) = apply_filter(table, cfg.filter.as_ref())?;
    if let Some(a) = audit {
        rec.json("filter_audit.json", &a)?;
    }
    let report = run_teamsize_analysis(&table, cfg.se_type)?;
    write_effects(&rec.path("teamsize_effects.csv"), "team_size", &report.effects)?;
    rec.record("teamsize_effects.csv")?;
    rec.json("teamsize_fit.json", &report.fit)?;
    Ok((rec.finish()?, report))
}

// ---------------------------------------------------------------------------
// Quasi-experiment

fn default_indicator() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiConfig {
    pub input: TableSource,
    #[serde(default)]
    pub filter: Option<CorpusFilter>,
    /// Group label of the treated group; all other labels are controls.
    #[serde(default = "default_indicator")]
    pub indicator: u8,
    #[serde(default)]
    pub se_type: SeType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: u8,
    pub papers: usize,
    pub mean_abs_cd: f64,
    pub sd_abs_cd: f64,
    pub mean_refs: f64,
    pub mean_team_size: f64,
    pub mean_citations: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderModel {
    pub model: usize,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiReport {
    pub groups: Vec<GroupSummary>,
    pub ladder: Vec<LadderModel>,
    pub gap: GroupGap,
}

/// The six |CD| models compared in the quasi-experiment, all with year
/// fixed effects: the indicator, ln r, ln k and ln c alone, the three
/// covariates together, and the indicator in place of ln r.
pub fn quasi_ladder(se_type: SeType) -> Vec<RegressionSpec> {
    let group = Term::new(Variable::Group, TermTransform::Identity);
    let k = Term::log(Variable::TeamSize);
    let r = Term::log(Variable::Refs);
    let c = Term::log(Variable::Citations);
    [vec![group], vec![r], vec![k], vec![c], vec![k, r, c], vec![group, k, c]]
        .into_iter()
        .map(|terms| RegressionSpec {
            dependent: Dependent {
                variable: Variable::Cd,
                transform: DependentTransform::Abs,
            },
            terms,
            factors: vec![],
            fixed_effects: FixedEffects::Year,
            se_type,
        })
        .collect()
}

fn summarize_groups(table: &PaperTable) -> Result<Vec<GroupSummary>> {
    let mut by: BTreeMap<u8, Vec<&crate::table::PaperRow>> = BTreeMap::new();
    for row in &table.rows {
        let g = row.group_label.ok_or(Error::MissingMetadata {
            id: row.id,
            field: "group_label",
        })?;
        by.entry(g).or_default().push(row);
    }
    Ok(by
        .into_iter()
        .map(|(group, rows)| {
            let n = rows.len() as f64;
            let abs: Vec<f64> = rows.iter().map(|r| r.cd.abs()).collect();
            let (mean_abs_cd, sd_abs_cd) = mean_sd(&abs);
            GroupSummary {
                group,
                papers: rows.len(),
                mean_abs_cd,
                sd_abs_cd,
                mean_refs: rows.iter().map(|r| r.refs as f64).sum::<f64>() / n,
                mean_team_size: rows.iter().map(|r| r.team_size.unwrap_or(0) as f64).sum::<f64>() / n,
                mean_citations: rows.iter().map(|r| r.citations as f64).sum::<f64>() / n,
            }
        })
        .collect())
}

/// Group summaries, the model ladder and the reference-length decomposition
/// of the treated-minus-control |CD| gap.
pub fn run_quasi_experiment(table: &PaperTable, indicator: u8, se_type: SeType) -> Result<QuasiReport> {
    let groups = summarize_groups(table)?;
    let mut binary = table.clone();
    for row in &mut binary.rows {
        row.group_label = row.group_label.map(|g| u8::from(g == indicator));
    }
    let ladder = quasi_ladder(se_type)
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            Ok(LadderModel {
                model: i + 1,
                fit: fit_spec(&binary, spec)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let full = RegressionSpec {
        se_type,
        ..RegressionSpec::abs_cd_model()
    };
    let gap = decompose_group_gap(table, &full, indicator)?;
    Ok(QuasiReport { groups, ladder, gap })
}

#[derive(Serialize)]
struct LadderRow<'a> {
    model: usize,
    term: &'a str,
    estimate: f64,
    se: f64,
    p_value: f64,
    n_obs: usize,
    adj_r2: f64,
}

#[derive(Serialize)]
struct QuasiPaperRow {
    id: PaperId,
    year: i32,
    group: Option<u8>,
    abs_cd: f64,
    r: u32,
    k: Option<u32>,
    c: u32,
}

/// Writes `quasi_groups.csv`, `quasi_papers.csv`, `quasi_models.csv`,
/// `quasi_models.json` and `quasi_gap.json`.
pub fn run_quasi(cfg: &QuasiConfig, out_dir: impl AsRef<Path>) -> Result<(ExperimentManifest, QuasiReport)> {
    let seed = match &cfg.input {
        TableSource::TwoArm(t) => Some(t.growth.seed),
        _ => None,
    };
    let mut rec = Recorder::begin("quasi", cfg, seed, None, cfg.input.checksums()?, out_dir.as_ref())?;
    let (table, audit) = apply_filter(cfg.input.load()?, cfg.filter.as_ref())?;
    if let Some(a) = audit {
        rec.json("filter_audit.json", &a)?;
    }
    let report = run_quasi_experiment(&table, cfg.indicator, cfg.se_type)?;

    write_rows(&rec.path("quasi_groups.csv"), &report.groups)?;
    rec.record("quasi_groups.csv")?;
    let papers: Vec<QuasiPaperRow> = table
        .rows
        .iter()
        .map(|r| QuasiPaperRow {
            id: r.id,
            year: r.year,
            group: r.group_label,
            abs_cd: r.cd.abs(),
            r: r.refs,
            k: r.team_size,
            c: r.citations,
        })
        .collect();
    write_rows(&rec.path("quasi_papers.csv"), &papers)?;
    rec.record("quasi_papers.csv")?;
    let ladder: Vec<LadderRow> = report
        .ladder
        .iter()
        .flat_map(|m| {
            m.fit.coefficients.iter().map(move |c| LadderRow {
                model: m.model,
                term: &c.name,
                estimate: c.estimate,
                se: c.se,
                p_value: c.p_value,
                n_obs: m.fit.n_obs,
                adj_r2: m.fit.adj_r2,
            })
        })
        .collect();
    write_rows(&rec.path("quasi_models.csv"), &ladder)?;
    rec.record("quasi_models.csv")?;
    rec.json("quasi_models.json", &report.ladder)?;
    rec.json("quasi_gap.json", &report.gap)?;
    Ok((rec.finish()?, report))
}
