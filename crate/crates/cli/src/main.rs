use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cdlab::corpus::{load_corpus_with, write_id_map, CorpusFilter, LoadOptions};
use cdlab::econometrics::{fit_spec, RegressionSpec};
use cdlab::experiments::{
    read_config, run_generate, run_nullmodel, run_quasi, run_quench, run_teamsize, run_trend, ExperimentManifest,
    NullModelConfig, QuasiConfig, QuenchConfig, TableSource, TeamsizeConfig, TrendConfig,
};
use cdlab::metrics::{compute_cd_all, normalize_cd, write_records};
use cdlab::{GrowthConfig, PaperTable};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "cdlab",
    version,
    about = "Citation-network growth and disruption-index analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow synthetic citation networks.
    Generate {
        /// Growth configuration (TOML or JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        realizations: usize,
    },
    /// Compute per-paper disruption records for a corpus.
    Metrics {
        #[arg(long, default_value_t = 5)]
        cw: u32,
        /// Directory holding nodes.csv and edges.csv.
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Add journal-year normalized CD and write normtable.csv.
        #[arg(long)]
        normalize: bool,
        /// Abort on any corpus violation instead of dropping bad edges.
        #[arg(long)]
        strict: bool,
    },
    /// Z-scores of CD against degree-preserving rewired replicas.
    Nullmodel {
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        cw: u32,
        #[arg(long, default_value_t = 20)]
        rewires: usize,
        #[arg(long, default_value_t = 10.0)]
        swaps_per_edge: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        strict: bool,
    },
    /// Build a per-paper analysis table from a corpus.
    Table {
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        cw: u32,
        /// Sample-selection bounds (TOML or JSON); audit is printed to stdout.
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Fit a regression specification to a paper table.
    Regress {
        /// Regression specification (TOML or JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a reproducible experiment pipeline.
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check the output checksums recorded in a manifest.
    Verify { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Quench,
    Trend,
    Teamsize,
    Quasi,
}

fn corpus_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("nodes.csv"), dir.join("edges.csv"))
}

fn config_base(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn summarize(manifest: &ExperimentManifest, out_dir: &Path) {
    for name in manifest.outputs.keys() {
        println!("{}", out_dir.join(name).display());
    }
}

fn metrics(cw: u32, in_dir: &Path, out: &Path, normalize: bool, strict: bool) -> Result<()> {
    let (nodes, edges) = corpus_paths(in_dir);
    let loaded = load_corpus_with(&nodes, &edges, LoadOptions { strict })
        .with_context(|| format!("loading corpus from {}", in_dir.display()))?;
    if loaded.dropped_year_order + loaded.dropped_duplicates > 0 {
        log::warn!(
            "dropped {} time-reversed and {} duplicate edges",
            loaded.dropped_year_order,
            loaded.dropped_duplicates
        );
    }
    let records = compute_cd_all(&loaded.network, cw);
    ensure_parent(out)?;
    let dir = out.parent().unwrap_or(Path::new("."));
    if let Some(map) = &loaded.id_map {
        write_id_map(dir.join("id_map.csv"), map)?;
    }
    if normalize {
        let norm = normalize_cd(&records, &loaded.network)?;
        norm.table.write_csv(dir.join("normtable.csv"))?;
        write_records(out, &records, Some(&norm.normcd))?;
    } else {
        write_records(out, &records, None)?;
    }
    log::info!("{} records written to {}", records.len(), out.display());
    Ok(())
}

fn table(in_dir: &Path, out: &Path, cw: u32, filter: Option<&Path>, strict: bool) -> Result<()> {
    let (nodes, edges) = corpus_paths(in_dir);
    let mut table = TableSource::Corpus {
        nodes,
        edges,
        cw,
        strict,
    }
    .load()?;
    if let Some(path) = filter {
        let bounds: CorpusFilter = read_config(path)?;
        let use_normcd = table.rows.iter().any(|r| r.normcd.is_some());
        let (kept, audit) = table.filtered(&bounds, use_normcd)?;
        print_json(&audit)?;
        table = kept;
    }
    ensure_parent(out)?;
    table.write_csv(out)?;
    Ok(())
}

fn regress(spec: &Path, data: &Path, out: &Path) -> Result<()> {
    let spec: RegressionSpec = read_config(spec)?;
    let table = PaperTable::read_csv(data)?;
    let fit = fit_spec(&table, &spec)?;
    ensure_parent(out)?;
    std::fs::write(out, serde_json::to_string_pretty(&fit)? + "\n")?;
    Ok(())
}

fn experiment(kind: ExperimentKind, config: &Path, out_dir: &Path) -> Result<()> {
    let base = config_base(config);
    let manifest = match kind {
        ExperimentKind::Quench => {
            let cfg: QuenchConfig = read_config(config)?;
            run_quench(&cfg, out_dir)?.0
        }
        ExperimentKind::Trend => {
            let mut cfg: TrendConfig = read_config(config)?;
            cfg.input = cfg.input.resolved(&base);
            run_trend(&cfg, out_dir)?.0
        }
        ExperimentKind::Teamsize => {
            let mut cfg: TeamsizeConfig = read_config(config)?;
            cfg.input = cfg.input.resolved(&base);
            run_teamsize(&cfg, out_dir)?.0
        }
        ExperimentKind::Quasi => {
            let mut cfg: QuasiConfig = read_config(config)?;
            cfg.input = cfg.input.resolved(&base);
            run_quasi(&cfg, out_dir)?.0
        }
    };
    summarize(&manifest, out_dir);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            out_dir,
            realizations,
        } => {
            let cfg: GrowthConfig = read_config(&config)?;
            let manifest = run_generate(&cfg, realizations, &out_dir)?;
            summarize(&manifest, &out_dir);
        }
        Command::Metrics {
            cw,
            in_dir,
            out,
            normalize,
            strict,
        } => metrics(cw, &in_dir, &out, normalize, strict)?,
        Command::Nullmodel {
            in_dir,
            out_dir,
            cw,
            rewires,
            swaps_per_edge,
            seed,
            strict,
        } => {
            let (nodes, edges) = corpus_paths(&in_dir);
            let cfg = NullModelConfig {
                nodes,
                edges,
                cw,
                rewires,
                swaps_per_edge,
                seed,
                strict,
            };
            let (manifest, _) = run_nullmodel(&cfg, &out_dir)?;
            summarize(&manifest, &out_dir);
        }
        Command::Table {
            in_dir,
            out,
            cw,
            filter,
            strict,
        } => table(&in_dir, &out, cw, filter.as_deref(), strict)?,
        Command::Regress { spec, data, out } => regress(&spec, &data, &out)?,
        Command::Experiment { kind, config, out_dir } => experiment(kind, &config, &out_dir)?,
        Command::Verify { dir } => {
            let bad = ExperimentManifest::read(&dir)?.verify(&dir)?;
            if !bad.is_empty() {
                bail!("checksum mismatch: {}", bad.join(", "));
            }
            println!("all outputs match");
        }
    }
    Ok(())
}

/// Error chain on one line; causes already quoted by their parent are skipped.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|prev| !prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {}", describe(&e));
        std::process::exit(1);
    }
}
