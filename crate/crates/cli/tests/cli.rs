use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cdlab::econometrics::RegressionSpec;
use cdlab::experiments::{two_arm_table, ExperimentManifest, TwoArmConfig};
use cdlab::generator::ArmDesign;
use cdlab::GrowthConfig;

fn cdlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdlab"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = cdlab(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const GROWTH: &str = "n1 = 15\nr1 = 5\ng_n = 0.033\ng_r = 0.018\nT = 30\nseed = 11\n";

#[test]
fn generate_metrics_and_nullmodel() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("growth.toml"), GROWTH).unwrap();
    ok(
        &[
            "generate",
            "--config",
            "growth.toml",
            "--out-dir",
            "gen",
            "--realizations",
            "2",
        ],
        d,
    );
    let manifest = ExperimentManifest::read(d.join("gen")).unwrap();
    assert_eq!(manifest.outputs.len(), 4);
    assert_eq!(manifest.base_seed, Some(11));
    assert_eq!(ok(&["verify", "gen"], d).trim(), "all outputs match");

    // A second run with the JSON form of the same config is byte-identical.
    fs::write(d.join("growth.json"), serde_json::to_string(&manifest.config).unwrap()).unwrap();
    ok(
        &[
            "generate",
            "--config",
            "growth.json",
            "--out-dir",
            "gen2",
            "--realizations",
            "2",
        ],
        d,
    );
    for name in manifest.outputs.keys() {
        assert_eq!(
            fs::read(d.join("gen").join(name)).unwrap(),
            fs::read(d.join("gen2").join(name)).unwrap()
        );
    }

    ok(
        &[
            "metrics",
            "--cw",
            "5",
            "--in-dir",
            "gen/realization_000",
            "--out",
            "records.csv",
        ],
        d,
    );
    let records = fs::read_to_string(d.join("records.csv")).unwrap();
    assert!(records.starts_with("id,year,Ni,Nj,Nk,CD,CDnok,Rk,c_cw\n"));
    assert!(records.lines().count() > 100);

    ok(
        &[
            "nullmodel",
            "--in-dir",
            "gen/realization_000",
            "--out-dir",
            "null",
            "--rewires",
            "3",
            "--seed",
            "5",
        ],
        d,
    );
    let z = fs::read_to_string(d.join("null/zscores.csv")).unwrap();
    assert!(z.starts_with("id,cd,mean_rand,sd_rand,z\n"));
    let m = ExperimentManifest::read(d.join("null")).unwrap();
    assert_eq!(m.diagnostics["mixing"].as_array().unwrap().len(), 3);
}

#[test]
fn normalize_writes_normtable_and_strict_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("c")).unwrap();
    fs::write(
        d.join("c/nodes.csv"),
        "id,year,journal_id,team_size,group_label\n10,1,1,,\n11,1,1,,\n12,2,1,,\n13,2,1,,\n14,3,1,,\n15,3,1,,\n",
    )
    .unwrap();
    fs::write(
        d.join("c/edges.csv"),
        "citing_id,cited_id\n12,10\n13,11\n14,12\n15,12\n15,10\n14,13\n",
    )
    .unwrap();
    ok(
        &[
            "metrics",
            "--cw",
            "2",
            "--in-dir",
            "c",
            "--out",
            "out/records.csv",
            "--normalize",
        ],
        d,
    );
    let records = fs::read_to_string(d.join("out/records.csv")).unwrap();
    assert!(records.starts_with("id,year,Ni,Nj,Nk,CD,CDnok,Rk,c_cw,normcd\n"));
    assert!(d.join("out/normtable.csv").exists());
    assert_eq!(
        fs::read_to_string(d.join("out/id_map.csv")).unwrap().lines().nth(1),
        Some("0,10")
    );

    fs::write(d.join("c/edges.csv"), "citing_id,cited_id\n12,10\n10,12\n").unwrap();
    let out = cdlab(&["metrics", "--in-dir", "c", "--out", "r.csv", "--strict"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    ok(&["metrics", "--in-dir", "c", "--out", "r.csv"], d);
}

fn write_table(d: &Path) {
    let cfg = TwoArmConfig {
        growth: GrowthConfig {
            n1: 30,
            periods: 40,
            seed: 4,
            ..GrowthConfig::calibrated()
        },
        arms: ArmDesign {
            share_b: 0.5,
            ref_multiplier: 2.0,
            ref_jitter: 0.3,
        },
        cw: 5,
        from_year: Some(25),
        team_size_max: 6,
        journals: 3,
    };
    two_arm_table(&cfg)
        .unwrap()
        .write_csv(d.join("data/papers.csv"))
        .unwrap();
}

#[test]
fn experiments_resolve_inputs_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("data")).unwrap();
    write_table(d);
    let input = "[input]\nkind = \"table\"\npath = \"papers.csv\"\n";
    fs::write(d.join("data/trend.toml"), input).unwrap();
    fs::write(d.join("data/teams.toml"), input).unwrap();
    fs::write(d.join("data/quasi.toml"), format!("indicator = 1\n{input}")).unwrap();

    let listed = ok(
        &[
            "experiment",
            "trend",
            "--config",
            "data/trend.toml",
            "--out-dir",
            "trend",
        ],
        d,
    );
    assert!(listed.contains("trend_effects.csv"));
    ok(
        &[
            "experiment",
            "teamsize",
            "--config",
            "data/teams.toml",
            "--out-dir",
            "teams",
        ],
        d,
    );
    assert!(d.join("teams/teamsize_effects.csv").exists());
    ok(
        &[
            "experiment",
            "quasi",
            "--config",
            "data/quasi.toml",
            "--out-dir",
            "quasi",
        ],
        d,
    );
    for name in [
        "quasi_groups.csv",
        "quasi_papers.csv",
        "quasi_models.csv",
        "quasi_gap.json",
        "manifest.json",
    ] {
        assert!(d.join("quasi").join(name).exists(), "{name}");
    }
    ok(&["verify", "quasi"], d);
}

#[test]
fn quench_experiment_and_regress() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("quench.toml"),
        format!("realizations = 2\ncws = [5]\nburn_in = 5\n[growth]\n{GROWTH}T_star = 20\n"),
    )
    .unwrap();
    ok(
        &["experiment", "quench", "--config", "quench.toml", "--out-dir", "q"],
        d,
    );
    let ensemble = fs::read_to_string(d.join("q/quench_ensemble.csv")).unwrap();
    assert!(ensemble.lines().any(|l| l.starts_with("quenched,5,")));

    fs::create_dir(d.join("data")).unwrap();
    write_table(d);
    let spec = serde_json::to_string(&RegressionSpec::abs_cd_model()).unwrap();
    fs::write(d.join("spec.json"), spec).unwrap();
    ok(
        &[
            "regress",
            "--spec",
            "spec.json",
            "--data",
            "data/papers.csv",
            "--out",
            "fit.json",
        ],
        d,
    );
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("fit.json")).unwrap()).unwrap();
    let columns: Vec<&str> = fit["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_str().unwrap())
        .collect();
    assert!(columns.contains(&"ln(refs)"));
    assert_eq!(fit["coefficients"].as_array().unwrap().len(), columns.len());
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cdlab(&["metrics", "--in-dir", "missing", "--out", "r.csv"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    fs::write(dir.path().join("bad.toml"), "[growth]\nn1 = 1\n").unwrap();
    let out = cdlab(
        &["experiment", "quench", "--config", "bad.toml", "--out-dir", "q"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_parse() {
    use cdlab::experiments::{read_config, QuasiConfig, QuenchConfig, TeamsizeConfig, TrendConfig};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let growth: GrowthConfig = read_config(dir.join("growth.toml")).unwrap();
    growth.validate().unwrap();
    let quench: QuenchConfig = read_config(dir.join("quench.toml")).unwrap();
    quench.validate().unwrap();
    assert_eq!(quench.growth.quench_at, Some(108));
    read_config::<QuasiConfig>(dir.join("quasi.toml")).unwrap();
    read_config::<TrendConfig>(dir.join("trend.toml")).unwrap();
    read_config::<TeamsizeConfig>(dir.join("teamsize.toml")).unwrap();
}
