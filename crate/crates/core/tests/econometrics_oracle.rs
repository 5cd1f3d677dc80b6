mod common;

use cdlab::econometrics::{build_design, decompose_group_gap, fit, fit_spec, RegressionSpec, SeType};
use cdlab::experiments::{run_teamsize_analysis, run_trend_analysis};
use common::{lsdv, random_design, Planted};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn within_estimator_matches_dummy_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..40 {
        let (design, x, groups) = random_design(&mut rng);
        let got = fit(&design, SeType::Classical).unwrap();
        let y: Vec<f64> = design.y.iter().copied().collect();
        let (beta, se) = lsdv(&y, &x, &groups, design.n_groups);
        for (j, c) in got.coefficients.iter().enumerate() {
            assert!((c.estimate - beta[j]).abs() < 1e-8, "{} vs {}", c.estimate, beta[j]);
            assert!((c.se - se[j]).abs() < 1e-8, "{} vs {}", c.se, se[j]);
        }
    }
}

#[test]
fn cluster_errors_match_explicit_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (design, _, groups) = random_design(&mut rng);
    let got = fit(&design, SeType::Cluster).unwrap();
    let n = design.x.nrows();
    let p = design.x.ncols();
    let g = design.n_groups;
    // Demeaned regressors and residuals, recomputed from scratch.
    let mut xd = design.x.clone();
    for k in 0..g {
        let members: Vec<usize> = (0..n).filter(|&i| groups[i] == k).collect();
        for j in 0..p {
            let m = members.iter().map(|&i| design.x[(i, j)]).sum::<f64>() / members.len() as f64;
            for &i in &members {
                xd[(i, j)] -= m;
            }
        }
    }
    let resid = DVector::from_vec(got.residuals.clone());
    let bread = (xd.transpose() * &xd).try_inverse().unwrap();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for k in 0..g {
        let mut s = DVector::<f64>::zeros(p);
        for i in (0..n).filter(|&i| groups[i] == k) {
            s += xd.row(i).transpose() * resid[i];
        }
        meat += &s * s.transpose();
    }
    let scale = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - p as f64));
    let v = &bread * meat * &bread * scale;
    for j in 0..p {
        assert!((got.coefficients[j].se - v[(j, j)].sqrt()).abs() < 1e-9);
    }
}

#[test]
fn planted_coefficients_are_recovered() {
    let planted = Planted {
        rows: 10_000,
        years: 12,
        journals: 8,
        b_refs: -0.004,
        b_citations: 0.003,
        b_team: 0.0005,
        noise_sd: 0.01,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let table = planted.table(&mut rng, |t| 0.0002 * t as f64, |_| 0.0);
    let spec = RegressionSpec {
        dependent: cdlab::econometrics::Dependent {
            variable: cdlab::econometrics::Variable::Cd,
            transform: cdlab::econometrics::DependentTransform::Identity,
        },
        ..RegressionSpec::abs_cd_model()
    };
    let fit = fit_spec(&table, &spec).unwrap();
    for (name, truth) in [
        ("ln(refs)", -0.004),
        ("ln(citations)", 0.003),
        ("ln(team_size)", 0.0005),
    ] {
        let c = fit.coef(name).unwrap();
        assert!(
            (c.estimate - truth).abs() < 4.0 * c.se,
            "{name}: {} ± {}",
            c.estimate,
            c.se
        );
    }
    assert_eq!(fit.parameterization, "absorbed");
    let design = build_design(&table, &spec).unwrap();
    assert_eq!(design.n_groups, 12);
}

#[test]
fn trend_null_has_nominal_false_positive_rate() {
    let planted = Planted {
        rows: 10_000,
        years: 20,
        journals: 10,
        b_refs: -0.002,
        b_citations: 0.002,
        b_team: 0.0,
        noise_sd: 0.005,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut flagged = 0.0;
    let reps = 10;
    for _ in 0..reps {
        let table = planted.table(&mut rng, |_| 0.0, |_| 0.0);
        flagged += run_trend_analysis(&table, Some(1), SeType::Classical)
            .unwrap()
            .significant_share;
    }
    let rate = flagged / reps as f64;
    assert!(rate < 0.12, "false-positive rate {rate}");
}

#[test]
fn trend_step_is_recovered() {
    let planted = Planted {
        rows: 10_000,
        years: 20,
        journals: 10,
        b_refs: -0.002,
        b_citations: 0.002,
        b_team: 0.0,
        noise_sd: 0.001,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let step = |t: i32| if t > 15 { 0.0005 } else { 0.0 };
    let table = planted.table(&mut rng, step, |_| 0.0);
    let report = run_trend_analysis(&table, Some(1), SeType::Classical).unwrap();
    for e in report.effects.iter().filter(|e| !e.baseline) {
        let truth = step(e.level as i32);
        assert!(
            (e.estimate - truth).abs() < 4.0 * e.se.unwrap(),
            "year {}: {}",
            e.level,
            e.estimate
        );
    }
    assert!(report.effects.iter().filter(|e| e.level > 15).all(|e| e.significant));
}

#[test]
fn team_size_sign_flip_is_located() {
    let planted = Planted {
        rows: 10_000,
        years: 10,
        journals: 5,
        b_refs: -0.002,
        b_citations: 0.002,
        b_team: 0.0,
        noise_sd: 0.002,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let effect = |k: u32| match k {
        1 => 0.0,
        2..=7 => -0.002,
        _ => 0.002,
    };
    let table = planted.table(&mut rng, |_| 0.0, effect);
    let report = run_teamsize_analysis(&table, SeType::Classical).unwrap();
    let k = report.sign_change.unwrap();
    assert!((7..=9).contains(&k), "sign change at {k}");
    assert_eq!(report.effects[0].level, 1);
    assert!(report.effects[0].baseline);
}

#[test]
fn identical_groups_leave_gap_undefined() {
    let planted = Planted {
        rows: 8_000,
        years: 5,
        journals: 3,
        b_refs: -0.004,
        b_citations: 0.003,
        b_team: 0.0,
        noise_sd: 0.01,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut table = planted.table(&mut rng, |_| 0.0, |_| 0.0);
    for row in &mut table.rows {
        row.group_label = Some(u8::from(rng.random::<f64>() < 0.3));
        row.cd = row.cd.abs();
    }
    let gap = decompose_group_gap(&table, &RegressionSpec::abs_cd_model(), 1).unwrap();
    assert!(gap.delta.estimate.abs() < 4.0 * gap.delta.se);
    assert_eq!(gap.fraction_explained, None);
}
