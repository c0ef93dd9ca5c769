use std::sync::OnceLock;

use lastzero::boundary::{kernel_h, lambda_positivity_check, script_v, smooth_fit_residual};
use lastzero::numeric::{integrate, norm_pdf};
use lastzero::sim::{estimate_running_gain, SimConfig, StoppingRule};
use lastzero::{solve, Error, Extended, GainSpec, LevyModel, ScaleFamily, Solution, SolverConfig};

fn bd_spec() -> GainSpec {
    GainSpec::new(LevyModel::brownian_drift(0.5, 1.0).unwrap(), 2.0).unwrap()
}

fn bd() -> &'static Solution {
    static S: OnceLock<Solution> = OnceLock::new();
    S.get_or_init(|| solve(&bd_spec(), &SolverConfig::default()).unwrap())
}

fn jd() -> &'static Solution {
    static S: OnceLock<Solution> = OnceLock::new();
    S.get_or_init(|| {
        let spec = GainSpec::new(LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap(), 2.0).unwrap();
        solve(&spec, &SolverConfig::default()).unwrap()
    })
}

fn cl() -> &'static Solution {
    static S: OnceLock<Solution> = OnceLock::new();
    S.get_or_init(|| {
        let spec = GainSpec::new(LevyModel::cramer_lundberg(1.5, 1.0, 1.0).unwrap(), 2.0).unwrap();
        solve(&spec, &SolverConfig::default()).unwrap()
    })
}

// int_0^b G(r+t, z) N(x + mu r, sigma^2 r)(dz)
fn h_by_quadrature(r: f64, t: f64, x: f64, b: f64) -> f64 {
    let spec = bd_spec();
    let s = r.sqrt();
    let m = x + 0.5 * r;
    let (lo, hi) = ((m - 12.0 * s).max(0.0), (m + 12.0 * s).min(b));
    if lo >= hi {
        return 0.0;
    }
    integrate(|z| spec.gain(r + t, z).unwrap() * norm_pdf((z - m) / s) / s, lo, hi, 1e-13, 1e-12).value
}

#[test]
fn kernel_h_at_empty_interval_is_zero() {
    for (r, t, x) in [(1.0, 0.0, 1.0), (0.3, 2.0, -0.5), (5.0, 1.0, 3.0)] {
        assert!(kernel_h(0.5, 1.0, r, t, x, 0.0).abs() < 1e-14);
    }
}

#[test]
fn kernel_h_small_r_limit() {
    let r = 1e-6;
    for (t, x, b) in [(0.0, 1.0, 2.0), (2.0, 0.5, 3.0)] {
        let h = kernel_h(0.5, 1.0, r, t, x, b);
        let q = h_by_quadrature(r, t, x, b);
        assert!((h - q).abs() < 1e-8, "{h} vs {q}");
        // dominated limit: t - (x/mu + t + sigma^2/mu^2) e^{-2 mu x / sigma^2}
        let lim = t - (2.0 * x + t + 4.0) * (-x).exp();
        assert!((h - lim).abs() < 1e-2, "{h} vs {lim}");
    }
}

#[test]
fn kernel_h_reference_point() {
    let h = kernel_h(0.5, 1.0, 1.0, 0.0, 1.0, 2.0);
    let q = h_by_quadrature(1.0, 0.0, 1.0, 2.0);
    assert!((h - q).abs() < 1e-8, "{h} vs {q}");
}

#[test]
fn two_first_term_forms_agree() {
    let fam = ScaleFamily::new(LevyModel::brownian_drift(0.5, 1.0).unwrap()).unwrap();
    for i in 1..200 {
        let x = 0.05 * i as f64;
        let lhs = 0.5 * fam.scale_w_prime(x).unwrap();
        let rhs = 1.0 - 0.5 * fam.scale_w(x);
        assert!((lhs - rhs).abs() < 1e-12, "{x}");
    }
}

#[test]
fn brownian_curve_properties() {
    let sol = bd();
    let c = &sol.curve;
    assert!(c.b_values.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(c.b_values.iter().zip(&c.h_values).all(|(b, h)| *b >= h - 1e-9));
    assert!(c.b_values[0] >= 2.0 * c.eval(1.0));
    assert!(c.v00 >= -24.0 && c.v00 < 0.0);
    assert_eq!(c.u_b, Extended::Infinite);
    for &(u, r) in &sol.diagnostics.smooth_fit {
        assert!(r.abs() < 1e-2, "u = {u}: {r}");
    }
}

#[test]
fn brownian_value_sign_region_and_monotonicity() {
    let sol = bd();
    let s = &sol.surface;
    for u in [0.05, 0.3, 1.0, 4.0, 20.0] {
        let b = sol.curve.eval(u);
        assert_eq!(s.value(u, b).unwrap(), 0.0);
        assert_eq!(s.value(u, b + 0.5).unwrap(), 0.0);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..8 {
            let x = b * k as f64 / 8.0;
            let v = s.value(u, x).unwrap();
            assert!(v < 0.0, "V({u},{x}) = {v}");
            assert!(v >= prev - 1e-9);
            prev = v;
        }
    }
    for x in [0.2, 0.8, 1.5] {
        let mut prev = f64::NEG_INFINITY;
        for u in [0.05, 0.2, 0.5, 1.0, 2.0, 5.0] {
            let v = s.value(u, x).unwrap();
            assert!(v >= prev - 1e-9, "V({u},{x}) = {v} below {prev}");
            prev = v;
        }
    }
}

#[test]
fn brownian_value_matches_simulation() {
    let sol = bd();
    let spec = bd_spec();
    let rule = StoppingRule::Boundary(sol.curve.to_rule().unwrap());
    let gain = |u: f64, x: f64| spec.gain(u, x).unwrap();
    let b1 = sol.curve.eval(1.0);
    let points = [(1.0, b1 - 0.1), (0.5, 1.0), (2.0, 0.5), (5.0, 0.3), (0.2, 3.0)];
    for (i, &(u, x)) in points.iter().enumerate() {
        let v = sol.surface.value(u, x).unwrap();
        // the first point is checked to 2e-3, which needs a large budget
        let n = if i == 0 { 4_000_000 } else { 100_000 };
        let cfg = SimConfig::new(n, 400.0, 1e-2, 40 + i as u64);
        let e = estimate_running_gain(spec.model(), gain, &rule, u, x, &cfg).unwrap();
        println!("V({u},{x:.3}) = {v:.5}, MC {:.5} +- {:.5}", e.mean, e.stderr);
        assert!(e.z_value(v) < 3.0, "V({u},{x}) = {v} vs {} +- {}", e.mean, e.stderr);
        if i == 0 {
            assert!(v < 0.0 && (e.mean - v).abs() < 2e-3);
        }
    }
}

#[test]
fn smooth_fit_detects_a_shifted_curve() {
    let sol = bd();
    let r = smooth_fit_residual(&sol.surface, 1.0).unwrap();
    let b1 = sol.curve.eval(1.0);
    assert!(r.abs() < 1e-2 * (sol.surface.value(1.0, b1 - 0.5).unwrap().abs() / 0.5).max(1.0));
    let moved = sol.surface.with_curve(sol.curve.shifted(0.3)).unwrap();
    assert!(smooth_fit_residual(&moved, 1.0).unwrap().abs() > 5e-2);
}

#[test]
fn lambda_reduces_to_gain_without_jumps() {
    let sol = bd();
    let spec = bd_spec();
    for u in [0.1, 1.0, 10.0] {
        let x = sol.curve.eval(u) + 0.2;
        let l = lambda_positivity_check(&sol.surface, u, x).unwrap();
        assert_eq!(l, spec.gain(u, x).unwrap());
        assert!(l >= 0.0);
    }
    assert!(matches!(lambda_positivity_check(&sol.surface, 1.0, 0.1), Err(Error::Domain(_))));
}

#[test]
fn script_v_cases() {
    let sol = jd();
    assert_eq!(script_v(&sol.surface, 1.0, 0.0).unwrap(), 0.0);
    // beyond b the surface is zero, so only (0, b(u)) contributes
    let u = 20.0;
    let b = sol.curve.eval(u);
    let full = script_v(&sol.surface, u, b).unwrap();
    assert!((script_v(&sol.surface, u, b + 1.0).unwrap() - full).abs() < 1e-8);
    let vmax = (0..=200)
        .map(|k| sol.surface.value(u, b * k as f64 / 200.0).unwrap().abs())
        .fold(0.0f64, f64::max);
    assert!(full <= 0.0);
    assert!(full.abs() <= (b).exp() * b * vmax);
    assert!(matches!(script_v(&bd().surface, 1.0, 1.0), Err(Error::Unsupported(_))));
}

#[test]
fn jump_surface_properties() {
    let sol = jd();
    let c = &sol.curve;
    assert!(c.b_values.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!(c.b_values.iter().zip(&c.h_values).all(|(b, h)| *b >= h - 1e-9));
    assert!(c.v00 >= -1.21875 && c.v00 < 0.0);
    for u in [0.5, 2.0, 10.0] {
        assert_eq!(sol.surface.value(u, c.eval(u) + 0.1).unwrap(), 0.0);
        assert!(sol.surface.value(u, 0.5 * c.eval(u)).unwrap() <= 1e-9);
    }
    // Lambda grows with u at a fixed level above the boundary
    let u0 = 1.0;
    let x = c.eval(u0) + 0.05;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..8 {
        let u = u0 * 1.5f64.powi(k);
        let l = lambda_positivity_check(&sol.surface, u, x).unwrap();
        assert!(l > prev - 1e-3, "Lambda({u},{x}) = {l} after {prev}");
        prev = l;
    }
}

#[test]
fn cutoff_family_boundary() {
    let sol = cl();
    let c = &sol.curve;
    let ub = c.u_b.finite().expect("finite cutoff");
    for (&u, &b) in c.u_grid.iter().zip(&c.b_values) {
        if u > ub {
            assert_eq!(b, 0.0);
            assert!(matches!(smooth_fit_residual(&sol.surface, u), Err(Error::Domain(_))));
        } else {
            assert!(b > 0.0);
        }
    }
    assert!(c.v00 >= -120.0 && c.v00 < 0.0);
}

#[test]
fn solver_rejects_bad_input() {
    let spec = bd_spec();
    let bad = SolverConfig { damping: 1.5, ..SolverConfig::default() };
    assert!(matches!(solve(&spec, &bad), Err(Error::InvalidParameter(_))));
    let p3 = GainSpec::new(LevyModel::brownian_drift(0.5, 1.0).unwrap(), 3.0).unwrap();
    assert!(matches!(solve(&p3, &SolverConfig::default()), Err(Error::Unsupported(_))));
}
