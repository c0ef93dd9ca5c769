//! The acceptance criteria as library checks. Each returns a pass flag plus a one-line detail.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crate::boundary::{lambda_positivity_check, smooth_fit_residual, solve, Solution, SolverConfig};
use crate::error::{Error, Result};
use crate::levy::{Family, LevyModel};
use crate::numeric::integrate;
use crate::quantity::Extended;
use crate::scale::ScaleFamily;
use crate::sim::{estimate_functional, estimate_prediction_errors, estimate_running_gain, Functional, SimConfig, StoppingRule};
use crate::stopping::{GainSpec, UbEquation};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {}: {} [{:.1}s]",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

pub const TITLES: [&str; 11] = [
    "scale-transform identity",
    "fluctuation identities by simulation",
    "equivalence identity",
    "optimality dominance",
    "boundary structure",
    "smooth fit",
    "anchor bounds",
    "negative half-line closed form",
    "jump-family Lambda positivity",
    "finite-variation cutoff",
    "determinism",
];

/// Monte Carlo settings shared by the simulation criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { n_paths: 100_000, dt: 1e-2, horizon: 400.0, seed: 7 }
    }
}

impl McSettings {
    fn sim(&self, seed: u64) -> SimConfig {
        SimConfig::new(self.n_paths, self.horizon, self.dt, seed)
    }
}

/// Models, solver settings and lazily solved boundaries for the three families.
pub struct Suite {
    pub brownian: LevyModel,
    pub jump_diffusion: LevyModel,
    pub cramer_lundberg: LevyModel,
    pub solver: SolverConfig,
    pub mc: McSettings,
    focus: Option<usize>,
    bd: OnceLock<std::result::Result<Solution, String>>,
    jd: OnceLock<std::result::Result<Solution, String>>,
    cl: OnceLock<std::result::Result<Solution, String>>,
}

impl Default for Suite {
    fn default() -> Self {
        Self::new(
            LevyModel::brownian_drift(0.5, 1.0).expect("valid"),
            LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).expect("valid"),
            LevyModel::cramer_lundberg(1.5, 1.0, 1.0).expect("valid"),
            SolverConfig::default(),
            McSettings::default(),
        )
    }
}

impl Suite {
    pub fn new(bd: LevyModel, jd: LevyModel, cl: LevyModel, solver: SolverConfig, mc: McSettings) -> Self {
        Self {
            brownian: bd,
            jump_diffusion: jd,
            cramer_lundberg: cl,
            solver,
            mc,
            focus: None,
            bd: OnceLock::new(),
            jd: OnceLock::new(),
            cl: OnceLock::new(),
        }
    }

    /// A suite about one model: it takes the slot of its family and the
    /// family-wide checks (2, 7, 11) look at it alone.
    pub fn for_model(model: LevyModel, solver: SolverConfig, mc: McSettings) -> Self {
        let mut s = Self { solver, mc, ..Self::default() };
        let slot = slot(&model.family());
        match slot {
            0 => s.brownian = model,
            1 => s.jump_diffusion = model,
            _ => s.cramer_lundberg = model,
        }
        s.focus = Some(slot);
        s
    }

    fn models(&self) -> Vec<(usize, LevyModel)> {
        let all = [self.brownian, self.jump_diffusion, self.cramer_lundberg];
        all.into_iter().enumerate().filter(|(i, _)| self.focus.is_none_or(|f| f == *i)).collect()
    }

    fn solved(&self, which: usize) -> Result<&Solution> {
        let (cell, model) = match which {
            0 => (&self.bd, self.brownian),
            1 => (&self.jd, self.jump_diffusion),
            _ => (&self.cl, self.cramer_lundberg),
        };
        cell.get_or_init(|| {
            let spec = GainSpec::new(model, 2.0).map_err(|e| e.to_string())?;
            solve(&spec, &self.solver).map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(|e| Error::NonConvergence(e.clone()))
    }

    pub fn brownian_solution(&self) -> Result<&Solution> {
        self.solved(0)
    }

    pub fn jump_diffusion_solution(&self) -> Result<&Solution> {
        self.solved(1)
    }

    pub fn cramer_lundberg_solution(&self) -> Result<&Solution> {
        self.solved(2)
    }

    /// Run one criterion; errors turn into a failing outcome.
    pub fn run(&self, id: u8) -> CriterionOutcome {
        let start = Instant::now();
        let res = match id {
            1 => self.c1(),
            2 => self.c2(),
            3 => self.c3(),
            4 => self.c4(),
            5 => self.c5(),
            6 => self.c6(),
            7 => self.c7(),
            8 => self.c8(),
            9 => self.c9(),
            10 => self.c10(),
            11 => self.c11(),
            _ => Err(Error::InvalidParameter(format!("no criterion {id}"))),
        };
        let (pass, detail) = match res {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        CriterionOutcome {
            id,
            title: TITLES.get(id as usize - 1).copied().unwrap_or("unknown"),
            pass,
            detail,
            elapsed: start.elapsed(),
        }
    }

    /// 1. int_0^inf e^{-beta x} W^(q)(x) dx = 1/(psi(beta) - q) with a certified tail.
    pub fn c1(&self) -> Result<(bool, String)> {
        let mut worst: f64 = 0.0;
        for (_, model) in self.models() {
            let fam = ScaleFamily::new(model)?;
            for q in [0.0, 1.0] {
                let phi = model.phi(q)?;
                for beta in [phi + 0.5, phi + 2.0] {
                    let (lhs, tail) = laplace_of_wq(&fam, q, beta)?;
                    let err = (lhs - 1.0 / (model.psi(beta) - q)).abs() + tail;
                    worst = worst.max(err);
                }
            }
        }
        Ok((worst < 1e-6, format!("max error incl. tail bound {worst:.2e} (needs < 1e-6)")))
    }

    /// 2. Exit, ruin and E(e^{-g}) against simulation, 3 SE each; BD constants as derived.
    pub fn c2(&self) -> Result<(bool, String)> {
        let mut worst_z: f64 = 0.0;
        let mut parts = Vec::new();
        for (_, model) in self.models() {
            let fam = ScaleFamily::new(model)?;
            let cfg = self.mc.sim(self.mc.seed);
            let exit = estimate_functional(&model, Functional::ExitUpBeforeDown { x: 1.0, a: 2.0 }, &cfg)?;
            let ruin = estimate_functional(&model, Functional::RuinProb { x: 1.0 }, &cfg)?;
            let lap = estimate_functional(&model, Functional::LaplaceG { q: 1.0 }, &cfg)?;
            let z = [
                exit.z_value(fam.scale_w(1.0) / fam.scale_w(2.0)),
                ruin.z_value(1.0 - model.mean() * fam.scale_w(1.0)),
                lap.z_value(fam.g_laplace(1.0, 0.0)?),
            ];
            let m = z.iter().fold(0.0f64, |a, &b| a.max(b));
            worst_z = worst_z.max(m);
            parts.push(format!("{} z<={m:.2}", model.name()));
        }
        let bd = GainSpec::new(self.brownian, 2.0)?;
        let mut derived_ok = true;
        if let Family::BrownianDrift { mu, sigma } = self.brownian.family() {
            if mu == 0.5 && sigma == 1.0 && self.focus.is_none_or(|f| f == 0) {
                let f = bd.family();
                derived_ok = (f.g_laplace(1.0, 0.0)? - 1.0 / 3.0).abs() < 1e-9
                    && (f.mean_g(0.0) - 4.0).abs() < 1e-9
                    && (bd.eg_p() - 48.0).abs() < 1e-6;
                parts.push(format!("BD constants {}", if derived_ok { "ok" } else { "off" }));
            }
        }
        Ok((worst_z < 3.0 && derived_ok, parts.join(", ")))
    }

    /// 3. E|tau_D - g|^2 = 2 V(0,0) + E(g^2) for the solved Brownian rule.
    pub fn c3(&self) -> Result<(bool, String)> {
        let sol = self.brownian_solution()?;
        let spec = GainSpec::new(self.brownian, 2.0)?;
        let rule = StoppingRule::Boundary(sol.curve.to_rule()?);
        let est = estimate_prediction_errors(&self.brownian, &[rule], 2.0, 0.0, &self.mc.sim(self.mc.seed))?.remove(0);
        let target = 2.0 * sol.curve.v00 + spec.eg_p();
        let z = est.z_value(target);
        Ok((
            z < 3.0 && !est.unreliable,
            format!("MC {:.3} +- {:.3} vs 2V00+E(g^2) = {target:.3}, z = {z:.2}", est.mean, est.stderr),
        ))
    }

    /// 4. The solved rule is no worse than constant barriers or stopping at once.
    pub fn c4(&self) -> Result<(bool, String)> {
        let sol = self.brownian_solution()?;
        let mut rules = vec![StoppingRule::Boundary(sol.curve.to_rule()?), StoppingRule::Immediate];
        let barriers = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0];
        rules.extend(barriers.iter().map(|&a| StoppingRule::ConstantBarrier(a)));
        let est = estimate_prediction_errors(&self.brownian, &rules, 2.0, 0.0, &self.mc.sim(self.mc.seed + 1))?;
        let d = est[0];
        let mut ok = true;
        let mut closest = f64::INFINITY;
        for e in &est[1..] {
            let slack = e.mean + 2.0 * (e.stderr.powi(2) + d.stderr.powi(2)).sqrt() - d.mean;
            if slack < 0.0 {
                ok = false;
            }
            if slack < closest {
                closest = slack;
            }
        }
        let best_barrier = est[2..].iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
        Ok((
            ok,
            format!(
                "boundary {:.3}, best barrier {best_barrier:.3}, immediate {:.3}, smallest slack {closest:.3}",
                d.mean, est[1].mean
            ),
        ))
    }

    /// 5. b non-increasing, b >= h, b(u_min) >= 2 b(1), |b(u_max) - h(u_max)| < 5e-2.
    pub fn c5(&self) -> Result<(bool, String)> {
        let sol = self.brownian_solution()?;
        let c = &sol.curve;
        let mono = c.b_values.windows(2).all(|w| w[1] <= w[0] + 1e-9);
        let above = c.b_values.iter().zip(&c.h_values).all(|(b, h)| *b >= h - 1e-9);
        let blow = c.b_values[0] / c.eval(1.0);
        let n = c.u_grid.len();
        let gap = (c.b_values[n - 1] - c.h_values[n - 1]).abs();
        let pass = mono && above && blow >= 2.0 && gap < 5e-2;
        Ok((
            pass,
            format!(
                "monotone {mono}, b>=h {above}, b(u_min)/b(1) = {blow:.2}, |b-h| at u_max = {:.0}: {gap:.3} (needs < 5e-2)",
                c.u_max()
            ),
        ))
    }

    /// 6. Smooth fit on the grid below 1e-2; b + 0.3 inflates the residual at least 5 times.
    pub fn c6(&self) -> Result<(bool, String)> {
        let sol = self.brownian_solution()?;
        let max = sol.diagnostics.max_smooth_fit;
        let shifted = sol.surface.with_curve(sol.curve.shifted(0.3))?;
        let mut pert: f64 = 0.0;
        for &u in &sol.curve.u_grid {
            pert = pert.max(smooth_fit_residual(&shifted, u)?.abs());
        }
        let at_one = smooth_fit_residual(&shifted, 1.0)?.abs();
        let tol = self.solver.tol_smooth_fit.min(1e-2);
        let pass = max < tol && pert >= 5.0 * max && at_one > 5.0 * tol;
        Ok((pass, format!("max residual {max:.2e}, perturbed max {pert:.3}, perturbed at u=1 {at_one:.3}")))
    }

    /// 7. -E(g^p)/p <= V(0,0) < 0 for every solved family.
    pub fn c7(&self) -> Result<(bool, String)> {
        let mut ok = true;
        let mut parts = Vec::new();
        for (i, model) in self.models() {
            let sol = self.solved(i)?;
            let spec = GainSpec::new(model, 2.0)?;
            let lo = -spec.eg_p() / 2.0;
            let v = sol.curve.v00;
            ok &= v >= lo && v < 0.0;
            parts.push(format!("{} {v:.4} in [{lo:.3}, 0)", model.name()));
        }
        Ok((ok, parts.join(", ")))
    }

    /// 8. V(0,-1) against E_{-1} int_0^{tau_0^+} G(0, X_s) ds + V(0,0).
    pub fn c8(&self) -> Result<(bool, String)> {
        let sol = self.brownian_solution()?;
        let spec = GainSpec::new(self.brownian, 2.0)?;
        let v00 = sol.curve.v00;
        let closed = spec.v0_on_negatives(v00, -1.0)?;
        let g = |_: f64, x: f64| spec.gain(0.0, x).unwrap_or(f64::NAN);
        let est = estimate_running_gain(&self.brownian, g, &StoppingRule::ConstantBarrier(0.0), 0.0, -1.0, &self.mc.sim(self.mc.seed + 2))?;
        let z = est.z_value(closed - v00);
        Ok((z < 3.0, format!("closed {closed:.4}, MC {:.4} +- {:.4}, z = {z:.2}", est.mean + v00, est.stderr)))
    }

    /// 9. Lambda(u,x) > -1e-3 on a 10 x 10 grid above the solved jump-diffusion boundary.
    pub fn c9(&self) -> Result<(bool, String)> {
        let sol = self.jump_diffusion_solution()?;
        let c = &sol.curve;
        let (lo, hi) = (c.u_min(), c.u_max());
        let mut worst = (f64::INFINITY, 0.0, 0.0);
        for i in 0..10 {
            let u = lo * (hi / lo).powf(i as f64 / 9.0);
            let b = c.eval(u);
            for j in 0..10 {
                let x = b + 0.02 + 0.3 * j as f64;
                let l = lambda_positivity_check(&sol.surface, u, x)?;
                if l < worst.0 {
                    worst = (l, u, x);
                }
            }
        }
        Ok((worst.0 > -1e-3, format!("min {:.3e} at u = {:.3}, x = {:.3}", worst.0, worst.1, worst.2)))
    }

    /// 10. u_b finite, its equation changes sign there, and b vanishes exactly beyond it.
    pub fn c10(&self) -> Result<(bool, String)> {
        let sol = self.cramer_lundberg_solution()?;
        let spec = GainSpec::new(self.cramer_lundberg, 2.0)?;
        let c = &sol.curve;
        let Extended::Finite(ub) = c.u_b else {
            return Ok((false, "u_b is infinite".into()));
        };
        let res = |u: f64| -> Result<f64> {
            match spec.u_b_residual(c.v00, u)? {
                UbEquation::Residual(r) => Ok(r),
                UbEquation::Infinite => Err(Error::Unsupported("u_b equation absent".into())),
            }
        };
        let sign_change = res(0.9 * ub)? * res(1.1 * ub)? < 0.0;
        let mut beyond_zero = true;
        let mut below_pos = true;
        let mut n_beyond = 0;
        for (&u, &b) in c.u_grid.iter().zip(&c.b_values) {
            if u > ub {
                n_beyond += 1;
                beyond_zero &= b == 0.0;
            } else {
                below_pos &= b > 0.0;
            }
        }
        let pass = sign_change && beyond_zero && below_pos && n_beyond > 0;
        Ok((
            pass,
            format!("u_b = {ub:.3}, sign change {sign_change}, b = 0 on {n_beyond} nodes beyond {beyond_zero}, b > 0 below {below_pos}"),
        ))
    }

    /// 11. Same seed, same bits; disjoint seeds agree within 3 combined SE.
    pub fn c11(&self) -> Result<(bool, String)> {
        let m = match self.focus {
            Some(_) => self.models()[0].1,
            None => self.jump_diffusion,
        };
        let spec = GainSpec::new(m, 2.0)?;
        let cfg = SolverConfig { n_u: 40, mc_kernel_paths: 20_000, ..self.solver.clone() };
        let a = solve(&spec, &cfg)?;
        let b = solve(&spec, &cfg)?;
        let same_solve = a.curve == b.curve;
        let sim = SimConfig::new(self.mc.n_paths / 4, self.mc.horizon, self.mc.dt, self.mc.seed);
        let rules = [StoppingRule::ConstantBarrier(1.0)];
        let e1 = estimate_prediction_errors(&m, &rules, 2.0, 0.0, &sim)?[0];
        let e2 = estimate_prediction_errors(&m, &rules, 2.0, 0.0, &sim)?[0];
        let same_sim = e1.mean.to_bits() == e2.mean.to_bits() && e1.stderr.to_bits() == e2.stderr.to_bits();
        let other = SimConfig { master_seed: self.mc.seed + 1000, ..sim };
        let e3 = estimate_prediction_errors(&m, &rules, 2.0, 0.0, &other)?[0];
        let z = e1.z_against(&e3);
        Ok((same_solve && same_sim && z < 3.0, format!("solve repeat identical {same_solve}, simulate repeat identical {same_sim}, disjoint-seed z = {z:.2}")))
    }
}

fn slot(family: &Family) -> usize {
    match family {
        Family::BrownianDrift { .. } => 0,
        Family::JumpDiffusion { .. } => 1,
        Family::CramerLundberg { .. } => 2,
    }
}

/// Criteria that make sense for a model of the given family.
pub fn applicable(family: &Family) -> Vec<u8> {
    match family {
        Family::BrownianDrift { .. } => vec![1, 2, 3, 4, 5, 6, 7, 8, 11],
        Family::JumpDiffusion { .. } => vec![1, 2, 7, 9, 11],
        Family::CramerLundberg { .. } => vec![1, 2, 7, 10, 11],
    }
}

/// (int_0^L e^{-beta x} W^(q)(x) dx, bound on the rest). Since e^{-Phi(q) x} W^(q)(x) increases
/// to 1/psi'(Phi(q)), the tail is at most e^{-(beta-Phi) L} / ((beta-Phi) psi'(Phi)).
pub fn laplace_of_wq(fam: &ScaleFamily, q: f64, beta: f64) -> Result<(f64, f64)> {
    let model = fam.model();
    let phi = model.phi(q)?;
    let gap = beta - phi;
    if !(gap > 0.0) {
        return Err(Error::Domain(format!("beta = {beta} must exceed Phi(q) = {phi}")));
    }
    let slope = model.psi_prime(phi);
    let bound = |l: f64| (-gap * l).exp() / (gap * slope);
    let mut l = 10.0 / gap;
    while bound(l) > 1e-10 {
        l *= 1.5;
    }
    let mut err = None;
    let mut f = |x: f64| match fam.scale_wq(q, x) {
        Ok(w) => w * (-beta * x).exp(),
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    // split so that the adaptive rule sees the decay
    let pieces = 16;
    let mut total = 0.0;
    for k in 0..pieces {
        let (a, b) = (l * k as f64 / pieces as f64, l * (k + 1) as f64 / pieces as f64);
        total += integrate(&mut f, a, b, 1e-14, 1e-13).value;
    }
    match err {
        Some(e) => Err(e),
        None => Ok((total, bound(l))),
    }
}
