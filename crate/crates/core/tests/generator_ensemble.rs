use cdlab::generator::{grow, grow_two_arm, realization_seed, ArmDesign, GrowthState};
use cdlab::metrics::{compute_cd_all, mean_closure_share};
use cdlab::GrowthConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn attachment_frequencies_within_binomial_bounds() {
    let mut state = GrowthState::new(1.0, f64::INFINITY);
    state.add_paper(1, None, &[]);
    state.add_paper(1, None, &[]);
    for _ in 0..3 {
        state.add_paper(2, None, &[0]);
    }
    let sampler = state.period_sampler(2);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 100_000;
    let hits = (0..draws)
        .filter(|_| sampler.pick(&state, 1, 0.0, &mut rng)[0] == 0)
        .count() as f64;
    let (p, n) = (0.8, draws as f64);
    let sd = (n * p * (1.0 - p)).sqrt();
    assert!((hits - n * p).abs() <= 3.0 * sd, "hits {hits}");
}

fn closure(beta: f64, runs: u64) -> f64 {
    let base = GrowthConfig {
        n1: 20,
        periods: 35,
        beta,
        ..GrowthConfig::calibrated()
    };
    (0..runs)
        .map(|i| {
            let net = grow(&base.with_seed(realization_seed(100, i))).unwrap();
            mean_closure_share(&compute_cd_all(&net, 5))
        })
        .sum::<f64>()
        / runs as f64
}

#[test]
fn redirection_raises_triadic_closure() {
    let with = closure(0.4, 10);
    let without = closure(0.0, 10);
    assert!(with > without, "{with} <= {without}");
}

#[test]
fn reference_lists_respect_time_and_uniqueness() {
    let cfg = GrowthConfig {
        n1: 25,
        periods: 50,
        beta: 0.5,
        seed: 17,
        ..GrowthConfig::calibrated()
    };
    let net = grow(&cfg).unwrap();
    net.check_invariants().unwrap();
    for p in 0..net.num_papers() as u32 {
        for &q in net.references(p) {
            assert!(net.year(q) < net.year(p));
        }
    }
}

#[test]
fn two_arm_arms_are_balanced_and_matched() {
    let cfg = GrowthConfig {
        n1: 40,
        periods: 40,
        seed: 21,
        ..GrowthConfig::calibrated()
    };
    let arms = ArmDesign {
        share_b: 0.5,
        ref_multiplier: 2.0,
        ref_jitter: 0.0,
    };
    let net = grow_two_arm(&cfg, arms).unwrap();
    let late: Vec<_> = net.papers().iter().filter(|p| p.year == 40).collect();
    let b = late.iter().filter(|p| p.group_label == Some(1)).count();
    let share = b as f64 / late.len() as f64;
    assert!((share - 0.5).abs() < 0.1, "share {share}");
    for p in &late {
        let r = net.out_degree(p.id);
        let r_a = net.out_degree(late.iter().find(|q| q.group_label == Some(0)).unwrap().id);
        if p.group_label == Some(1) {
            assert_eq!(r, 2 * r_a);
        }
    }
    let jittered = grow_two_arm(
        &cfg,
        ArmDesign {
            ref_jitter: 0.3,
            ..arms
        },
    )
    .unwrap();
    let distinct: std::collections::BTreeSet<usize> = jittered
        .papers()
        .iter()
        .filter(|p| p.year == 40 && p.group_label == Some(0))
        .map(|p| jittered.out_degree(p.id))
        .collect();
    assert!(distinct.len() > 3);
}
