use lastzero::sim::{
    apply_rule, detect_zero_crossings, estimate_functional, estimate_prediction_error, estimate_prediction_errors,
    last_zero, simulate_skeleton, Functional, SimConfig, StoppingRule,
};
use lastzero::{LevyModel, ScaleFamily};

fn bd() -> LevyModel {
    LevyModel::brownian_drift(0.5, 1.0).unwrap()
}

fn jd() -> LevyModel {
    LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap()
}

fn cl() -> LevyModel {
    LevyModel::cramer_lundberg(1.5, 1.0, 1.0).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn brownian_paths_have_no_jumps() {
    let sk = simulate_skeleton(&bd(), 0.0, 20.0, 0.01, 3, 0);
    assert!(sk.jump_flags.iter().all(|j| !j));
    assert_eq!(sk.times[0], 0.0);
    assert_eq!(sk.values[0], 0.0);
}

#[test]
fn drift_and_jump_rate() {
    let m = jd();
    let t = 5.0;
    let (mut drift, mut jumps) = (Vec::new(), Vec::new());
    for i in 0..20_000 {
        let sk = simulate_skeleton(&m, 0.0, t, 0.05, 11, i);
        drift.push(sk.terminal() / t);
        jumps.push(sk.jump_flags.iter().filter(|j| **j).count() as f64);
    }
    let (d, se) = mean_se(&drift);
    assert!((d - m.mean()).abs() < 3.0 * se, "{d} +- {se} vs {}", m.mean());
    let (j, se) = mean_se(&jumps);
    assert!((j - t).abs() < 3.0 * se, "{j} +- {se}");
}

#[test]
fn bridge_dips_match_closed_form() {
    let m = bd();
    let dt = 0.05;
    let (mut hits, mut expected, mut var) = (0.0, 0.0, 0.0);
    for i in 0..3_000 {
        let aug = detect_zero_crossings(simulate_skeleton(&m, 0.3, 2.0, dt, 5, i));
        for (s, &low) in aug.skeleton.segments().zip(&aug.minima) {
            if s.x0 > 0.0 && s.x_left > 0.0 {
                let p = (-2.0 * s.x0 * s.x_left / (s.t1 - s.t0)).exp();
                expected += p;
                var += p * (1.0 - p);
                hits += (low < 0.0) as u8 as f64;
            }
        }
    }
    let z = (hits - expected) / var.sqrt();
    assert!(z.abs() < 3.0, "{hits} dips, expected {expected}, z = {z}");
}

#[test]
fn finite_variation_crossings_are_exact() {
    let m = cl();
    let mut checked = 0;
    for i in 0..200 {
        let aug = detect_zero_crossings(simulate_skeleton(&m, 0.5, 30.0, 0.05, 9, i));
        for (s, mark) in aug.skeleton.segments().zip(&aug.zero_marks) {
            let ends_below = s.jump && s.x1 <= 0.0;
            if let (true, Some((_, last))) = (s.x0 < 0.0 && s.x_left > 0.0 && !ends_below, mark) {
                let at = s.x0 + 1.5 * (last - s.t0);
                assert!(at.abs() < 1e-12, "{at}");
                checked += 1;
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn no_zero_means_g_is_zero() {
    let aug = detect_zero_crossings(simulate_skeleton(&bd(), 30.0, 10.0, 0.01, 1, 0));
    assert_eq!(last_zero(&aug).0, 0.0);
}

#[test]
fn last_zero_mean_and_tail() {
    let m = bd();
    let (mut g, mut tail) = (Vec::new(), 0.0);
    let n = 20_000;
    for i in 0..n {
        let aug = detect_zero_crossings(simulate_skeleton(&m, 0.0, 80.0, 0.02, 21, i));
        let (gi, ti) = last_zero(&aug);
        g.push(gi);
        tail += ti;
    }
    let (mg, se) = mean_se(&g);
    assert!((mg - 4.0).abs() < 3.0 * se, "{mg} +- {se}");
    assert!(tail / (n as f64) < 1e-3);
}

#[test]
fn trivial_rules_fire_at_once() {
    let aug = detect_zero_crossings(simulate_skeleton(&bd(), 2.0, 10.0, 0.01, 1, 4));
    assert_eq!(apply_rule(&aug, &StoppingRule::Immediate).tau, 0.0);
    assert_eq!(apply_rule(&aug, &StoppingRule::ConstantBarrier(1.0)).tau, 0.0);
    let o = apply_rule(&aug, &StoppingRule::OracleG);
    assert_eq!(o.tau, o.g_hat);
}

#[test]
fn oracle_rule_has_no_loss() {
    let e = estimate_prediction_error(&bd(), &StoppingRule::OracleG, 2.0, 2_000, 80.0, 1e-3, 2).unwrap();
    assert!(e.mean < 1e-3, "{}", e.mean);
}

#[test]
fn immediate_rule_gives_second_moment() {
    let cfg = SimConfig::new(40_000, 80.0, 1e-2, 31);
    let e = estimate_prediction_errors(&bd(), &[StoppingRule::Immediate], 2.0, 0.0, &cfg).unwrap()[0];
    assert!(e.z_value(48.0) < 3.0, "{} +- {}", e.mean, e.stderr);
    assert!(!e.unreliable);
}

#[test]
fn censoring_is_controlled() {
    let m = bd();
    let fam = ScaleFamily::new(m).unwrap();
    // horizon with analytic tail E[1 - psi'W(X_T)] < 1e-3
    let t = 80.0;
    let tail = lastzero::sim::estimate_terminal(&m, t, lastzero::McBudget { n_paths: 20_000, seed: 1, dt: 1e-2 }, |x| {
        (1.0 - m.mean() * fam.scale_w(x)).clamp(0.0, 1.0)
    });
    assert!(tail.mean < 1e-3);
    let cfg = SimConfig::new(20_000, t, 1e-2, 8);
    let e = estimate_prediction_errors(&m, &[StoppingRule::ConstantBarrier(1.0)], 2.0, 0.0, &cfg).unwrap()[0];
    assert!(e.censored_fraction < 2e-3, "{}", e.censored_fraction);
}

#[test]
fn same_seed_same_bits() {
    let cfg = SimConfig::new(5_000, 80.0, 1e-2, 77);
    let rules = [StoppingRule::ConstantBarrier(1.5), StoppingRule::Immediate];
    let a = estimate_prediction_errors(&jd(), &rules, 2.0, 0.0, &cfg).unwrap();
    let b = estimate_prediction_errors(&jd(), &rules, 2.0, 0.0, &cfg).unwrap();
    assert_eq!(a, b);
    let other = SimConfig::new(5_000, 80.0, 1e-2, 78);
    let c = estimate_prediction_errors(&jd(), &rules, 2.0, 0.0, &other).unwrap();
    for (x, y) in a.iter().zip(&c) {
        assert!(x.z_against(y) < 3.0);
    }
}

#[test]
fn halving_dt_moves_functionals_little() {
    for m in [bd(), jd(), cl()] {
        for f in [
            Functional::ExitUpBeforeDown { x: 1.0, a: 2.0 },
            Functional::RuinProb { x: 1.0 },
            Functional::LaplaceG { q: 1.0 },
        ] {
            let a = estimate_functional(&m, f, &SimConfig::new(20_000, 400.0, 1e-2, 12)).unwrap();
            let b = estimate_functional(&m, f, &SimConfig::new(20_000, 400.0, 5e-3, 12)).unwrap();
            let z = a.z_against(&b);
            println!("{} {f:?}: {:.4} vs {:.4}, z = {z:.2}", m.name(), a.mean, b.mean);
            assert!(z < 1.0, "{} {f:?}: {} vs {}, z = {z}", m.name(), a.mean, b.mean);
        }
    }
}
