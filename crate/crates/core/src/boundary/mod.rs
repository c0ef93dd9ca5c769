//! The optimal boundary b(u), V(0,0) and the value surface V(u,x).

mod brownian;
mod tabulated;

pub use brownian::kernel_h;

use brownian::{BmConsts, BmEval};
use tabulated::{Shapes, TabSolver, TabState, Tables};

use crate::error::{Error, Result};
use crate::levy::Family;
use crate::numeric::{illinois, integrate};
use crate::quantity::Extended;
use crate::sim::BoundaryRule;
use crate::stopping::GainSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub u_min: f64,
    pub u_max: f64,
    pub n_u: usize,
    /// Gauss-Legendre nodes per r-panel
    pub r_nodes: usize,
    /// the r-integral stops where the kernel mass is this many standard deviations out
    pub r_cut: f64,
    /// relaxation of the per-node boundary update in the jump-family sweep
    pub damping: f64,
    pub tol_fixed_point: f64,
    pub tol_smooth_fit: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub fd_step: f64,
    /// (delta, h) of the difference quotient [V(delta,h) - V(0,0)]/h
    pub closure_delta: f64,
    pub closure_h: f64,
    pub mc_kernel_paths: usize,
    /// kernel checkpoints in s
    pub n_s: usize,
    /// z-bins of the kernel tables
    pub n_z: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            u_min: 1e-2,
            u_max: 50.0,
            n_u: 120,
            r_nodes: 8,
            r_cut: 8.0,
            damping: 1.0,
            tol_fixed_point: 1e-7,
            tol_smooth_fit: 1e-2,
            max_outer: 80,
            max_inner: 6,
            fd_step: 1e-3,
            closure_delta: 1e-3,
            closure_h: 1e-3,
            mc_kernel_paths: 40_000,
            n_s: 160,
            n_z: 480,
            seed: 1,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        let pos = [
            ("u_min", self.u_min),
            ("u_max", self.u_max),
            ("r_cut", self.r_cut),
            ("damping", self.damping),
            ("tol_fixed_point", self.tol_fixed_point),
            ("tol_smooth_fit", self.tol_smooth_fit),
            ("fd_step", self.fd_step),
            ("closure_delta", self.closure_delta),
            ("closure_h", self.closure_h),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if self.damping > 1.0 {
            return Err(Error::InvalidParameter("solver.damping must lie in (0, 1]".into()));
        }
        if self.u_min >= self.u_max {
            return Err(Error::InvalidParameter("solver.u_min must be below solver.u_max".into()));
        }
        if self.n_u < 4 || self.r_nodes == 0 || self.r_nodes > 32 || self.n_s < 8 || self.n_z < 32 {
            return Err(Error::InvalidParameter("solver grid sizes are too small".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidParameter("iteration caps must be positive".into()));
        }
        Ok(())
    }

    pub fn u_grid(&self) -> Vec<f64> {
        log_grid(self.u_min, self.u_max, self.n_u)
    }
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let r = (b / a).ln();
    (0..n).map(|i| a * (r * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Curve through (u_k, b_k) in the variable ln u, constant outside the knots.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Knots {
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl Knots {
    pub(crate) fn interp(&self, vals: &[f64], u: f64) -> f64 {
        let n = self.u.len();
        if u <= self.u[0] {
            return vals[0];
        }
        if u >= self.u[n - 1] {
            return vals[n - 1];
        }
        let k = self.u.partition_point(|&x| x <= u) - 1;
        // linear in ln u: b behaves like -ln u near zero
        let t = if self.u[k] > 0.0 {
            (u / self.u[k]).ln() / (self.u[k + 1] / self.u[k]).ln()
        } else {
            (u - self.u[k]) / (self.u[k + 1] - self.u[k])
        };
        vals[k] + t * (vals[k + 1] - vals[k])
    }

    /// b(u): on [u_k, u_k+1] the quadratic in ln u through knots k, k+1, k+2, clamped to the
    /// range of b_k and b_k+1. It looks forward only, so a backward sweep never reads a stale knot.
    pub(crate) fn at(&self, u: f64) -> f64 {
        let n = self.u.len();
        if u <= self.u[0] {
            return self.b[0];
        }
        if u >= self.u[n - 1] {
            return self.b[n - 1];
        }
        let k = self.u.partition_point(|&x| x <= u) - 1;
        if k + 2 >= n || self.u[k] <= 0.0 {
            return self.interp(&self.b, u);
        }
        let (t0, t1, t2) = (self.u[k].ln(), self.u[k + 1].ln(), self.u[k + 2].ln());
        let (y0, y1, y2) = (self.b[k], self.b[k + 1], self.b[k + 2]);
        let t = u.ln();
        let q = y0 * (t - t1) * (t - t2) / ((t0 - t1) * (t0 - t2))
            + y1 * (t - t0) * (t - t2) / ((t1 - t0) * (t1 - t2))
            + y2 * (t - t0) * (t - t1) / ((t2 - t0) * (t2 - t1));
        q.clamp(y0.min(y1), y0.max(y1))
    }

    /// First knot strictly beyond u.
    pub(crate) fn next_after(&self, u: f64) -> Option<f64> {
        let eps = 1e-13 * (1.0 + u.abs());
        let k = self.u.partition_point(|&x| x <= u + eps);
        self.u.get(k).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    pub u_grid: Vec<f64>,
    pub b_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// continuation of the curve beyond the grid (b = h there, or 0 past a finite u_b)
    pub tail_u: Vec<f64>,
    pub tail_b: Vec<f64>,
    pub u_b: Extended,
    pub v00: f64,
}

impl BoundaryCurve {
    pub(crate) fn knots(&self) -> Knots {
        let mut u = self.u_grid.clone();
        u.extend(&self.tail_u);
        let mut b = self.b_values.clone();
        b.extend(&self.tail_b);
        Knots { u, b }
    }

    /// b(u): b(u_min) below the grid, quadratic in ln u on it, then the tail; 0 past a finite u_b.
    pub fn eval(&self, u: f64) -> f64 {
        if let Extended::Finite(ub) = self.u_b {
            if u >= ub {
                return 0.0;
            }
        }
        self.knots().at(u)
    }

    pub fn u_min(&self) -> f64 {
        self.u_grid[0]
    }

    pub fn u_max(&self) -> f64 {
        *self.u_grid.last().unwrap()
    }

    /// The curve as a stopping rule for the simulator, sampled at 8 points per knot interval
    /// (the rule interpolates linearly in u).
    pub fn to_rule(&self) -> Result<BoundaryRule> {
        let k = self.knots();
        let mut u = Vec::with_capacity(8 * k.u.len());
        for w in k.u.windows(2) {
            for j in 0..8 {
                u.push(w[0] * (w[1] / w[0]).powf(j as f64 / 8.0));
            }
        }
        u.push(*k.u.last().unwrap());
        let b = u.iter().map(|&v| self.eval(v)).collect();
        BoundaryRule::new(u, b)
    }

    /// b + shift wherever b > 0, tail included.
    pub fn shifted(&self, shift: f64) -> BoundaryCurve {
        let mut c = self.clone();
        for b in c.b_values.iter_mut().chain(c.tail_b.iter_mut()) {
            if *b > 0.0 {
                *b += shift;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// (V00 trial, closing residual) in evaluation order
    pub v00_history: Vec<(f64, f64)>,
    pub closure_residual: f64,
    /// (u, normalised smooth-fit residual) at grid nodes with b > 0
    pub smooth_fit: Vec<(f64, f64)>,
    pub max_smooth_fit: f64,
    /// largest |int e^{-kx} H(r,u,-x,b) dr| at x = b(u), Brownian case only
    pub reflected_term_max: Option<f64>,
    pub kernel_paths: usize,
}

#[derive(Debug, Clone)]
enum Machinery {
    Brownian { consts: BmConsts },
    Tabulated(Box<TabSurface>),
}

#[derive(Debug, Clone)]
struct TabSurface {
    x: Vec<f64>,
    /// rows[0] sits at u = closure_delta; rows[k+1] at u_grid[k]
    row_u: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ValueSurface {
    spec: GainSpec,
    curve: BoundaryCurve,
    cfg: SolverConfig,
    machinery: Machinery,
}

impl ValueSurface {
    pub fn spec(&self) -> &GainSpec {
        &self.spec
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    /// V(u, x). Zero on the stopping region, V(0,x) below zero.
    pub fn value(&self, u: f64, x: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("u must be nonnegative, got {u}")));
        }
        let v00 = self.curve.v00;
        if x <= 0.0 {
            return self.spec.v0_on_negatives(v00, x.min(0.0));
        }
        if u > 0.0 && x >= self.curve.eval(u) {
            return Ok(0.0);
        }
        match &self.machinery {
            Machinery::Brownian { consts } => {
                let ev = BmEval { c: *consts, spec: &self.spec, cfg: &self.cfg };
                let uu = if u == 0.0 { self.cfg.closure_delta } else { u };
                Ok(ev.value(&self.curve.knots(), v00, uu, x).min(0.0))
            }
            Machinery::Tabulated(t) => Ok(t.interp(u, x)),
        }
    }

    /// Same machinery evaluated with another curve; used by the perturbation check.
    pub fn with_curve(&self, curve: BoundaryCurve) -> Result<ValueSurface> {
        match &self.machinery {
            Machinery::Brownian { .. } => Ok(ValueSurface { curve, ..self.clone() }),
            Machinery::Tabulated(_) => Err(Error::Unsupported(
                "re-evaluating a tabulated surface on another curve needs a fresh solve".into(),
            )),
        }
    }

    /// Representation value at (u, x) ignoring the stopping region; Brownian case.
    fn raw_value(&self, u: f64, x: f64) -> Result<f64> {
        match &self.machinery {
            Machinery::Brownian { consts } => {
                let ev = BmEval { c: *consts, spec: &self.spec, cfg: &self.cfg };
                Ok(ev.value(&self.curve.knots(), self.curve.v00, u, x))
            }
            Machinery::Tabulated(t) => Ok(t.interp(u, x)),
        }
    }
}

impl TabSurface {
    fn row_value(&self, k: usize, x: f64) -> f64 {
        let row = &self.rows[k];
        let n = self.x.len();
        if x >= self.x[n - 1] {
            return row[n - 1];
        }
        let m = self.x.partition_point(|&v| v <= x) - 1;
        let t = (x - self.x[m]) / (self.x[m + 1] - self.x[m]);
        row[m] + t * (row[m + 1] - row[m])
    }

    fn interp(&self, u: f64, x: f64) -> f64 {
        let n = self.row_u.len();
        if u <= self.row_u[0] {
            return self.row_value(0, x);
        }
        if u >= self.row_u[n - 1] {
            return self.row_value(n - 1, x);
        }
        let k = self.row_u.partition_point(|&v| v <= u) - 1;
        let t = (u - self.row_u[k]) / (self.row_u[k + 1] - self.row_u[k]);
        ((1.0 - t) * self.row_value(k, x) + t * self.row_value(k + 1, x)).min(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub curve: BoundaryCurve,
    pub surface: ValueSurface,
    pub diagnostics: Diagnostics,
}

/// Solve for (b, V(0,0)) and build the value surface. p = 2 only.
pub fn solve(spec: &GainSpec, cfg: &SolverConfig) -> Result<Solution> {
    cfg.check()?;
    if !(spec.p() == 2.0) {
        return Err(Error::Unsupported(format!("the boundary solver covers p = 2, got p = {}", spec.p())));
    }
    match spec.model().family() {
        Family::BrownianDrift { .. } => solve_brownian(spec, cfg),
        _ => solve_tabulated(spec, cfg),
    }
}

/// Solved nodes run on to EXTEND * u_max before b is handed over to h.
const EXTEND: f64 = 20.0;

fn h_table(spec: &GainSpec, u: &[f64]) -> Result<Vec<f64>> {
    u.iter().map(|&v| spec.h_curve(v)).collect()
}

/// V(0,0) bracket from -E(g^p)/p <= V(0,0) < 0.
fn v00_bracket(spec: &GainSpec) -> (f64, f64) {
    let lower = -spec.eg_p() / spec.p();
    (lower * (1.0 - 1e-9), lower * 1e-6)
}

fn solve_brownian(spec: &GainSpec, cfg: &SolverConfig) -> Result<Solution> {
    let consts = BmConsts::new(spec)?;
    let ev = BmEval { c: consts, spec, cfg };
    let grid = cfg.u_grid();
    let n = grid.len();
    // solved nodes continue past u_max: b approaches h very slowly, and switching to h right
    // at u_max drags b near u_max upwards
    let ratio = grid[1] / grid[0];
    let mut solved = grid.clone();
    while *solved.last().unwrap() < EXTEND * cfg.u_max {
        solved.push(solved.last().unwrap() * ratio);
    }
    let n_solved = solved.len();
    let h = h_table(spec, &solved)?;
    // the r-integral from the smallest u reaches roughly (b + x)/mu + cut^2 sigma^2/mu^2
    let model = spec.model();
    let (mu, sigma) = (model.drift(), model.sigma());
    let reach = 4.0 * (2.0 * h[0] + 10.0) / mu + 4.0 * (cfg.r_cut * sigma / mu).powi(2);
    let u_end = solved[n_solved - 1];
    let mut tail_u = Vec::new();
    let mut t = u_end;
    while t < u_end + reach {
        t *= 1.15;
        tail_u.push(t);
    }
    let tail_b = h_table(spec, &tail_u)?;
    let mut knots = Knots { u: solved.iter().chain(&tail_u).copied().collect(), b: h.iter().chain(&tail_b).copied().collect() };

    let c1 = spec.v0_slope(0.0)?;
    let mut diag = Diagnostics::default();
    let mut sweep_err: Option<Error> = None;
    let closure = |v00: f64, kn: &mut Knots, diag: &mut Diagnostics, sweep_err: &mut Option<Error>| -> f64 {
        if let Err(e) = ev.sweep(kn, n_solved, &h, v00) {
            sweep_err.get_or_insert(e);
            return f64::NAN;
        }
        diag.inner_iterations += 1;
        let (d, hh) = (cfg.closure_delta, cfg.closure_h);
        // Richardson in h, then in delta (the bias in delta is linear)
        let dq = |d: f64| 2.0 * ev.difference_quotient(kn, v00, d, 0.5 * hh) - ev.difference_quotient(kn, v00, d, hh);
        let r = c1 - (2.0 * dq(0.5 * d) - dq(d));
        diag.v00_history.push((v00, r));
        r
    };
    let (a, b) = v00_bracket(spec);
    let fa = closure(a, &mut knots, &mut diag, &mut sweep_err);
    let fb = closure(b, &mut knots, &mut diag, &mut sweep_err);
    if let Some(e) = sweep_err.take() {
        return Err(e);
    }
    let (v00, it) = illinois(|v| closure(v, &mut knots, &mut diag, &mut sweep_err), a, b, fa, fb, 1e-10 * a.abs(), cfg.max_outer)
        .map_err(|e| match e {
            Error::Bracket(_) => Error::Bracket(format!("closing residual keeps one sign on V(0,0) in [{a}, {b}]: {fa} and {fb}")),
            other => other,
        })?;
    if let Some(e) = sweep_err.take() {
        return Err(e);
    }
    diag.outer_iterations = it + 2;
    let r = closure(v00, &mut knots, &mut diag, &mut sweep_err);
    diag.closure_residual = r;
    if let Some(e) = sweep_err {
        return Err(e);
    }
    if diag.outer_iterations > cfg.max_outer {
        return Err(Error::NonConvergence(format!("V(0,0) iteration hit the cap of {}", cfg.max_outer)));
    }

    let curve = BoundaryCurve {
        u_grid: grid.clone(),
        b_values: knots.b[..n].to_vec(),
        h_values: h[..n].to_vec(),
        tail_u: knots.u[n..].to_vec(),
        tail_b: knots.b[n..].to_vec(),
        u_b: Extended::Infinite,
        v00,
    };
    check_curve(&curve)?;
    let surface = ValueSurface { spec: spec.clone(), curve: curve.clone(), cfg: cfg.clone(), machinery: Machinery::Brownian { consts } };
    let mut refl: f64 = 0.0;
    for (i, &u) in grid.iter().enumerate() {
        refl = refl.max(ev.reflected_integral(&knots, u, knots.b[i]).abs());
    }
    diag.reflected_term_max = Some(refl);
    fill_smooth_fit(&surface, &mut diag)?;
    Ok(Solution { curve, surface, diagnostics: diag })
}

fn fill_smooth_fit(surface: &ValueSurface, diag: &mut Diagnostics) -> Result<()> {
    diag.smooth_fit.clear();
    for (&u, &b) in surface.curve.u_grid.iter().zip(&surface.curve.b_values) {
        if b > 0.0 {
            diag.smooth_fit.push((u, smooth_fit_residual(surface, u)?));
        }
    }
    diag.max_smooth_fit = diag.smooth_fit.iter().fold(0.0, |a, &(_, r)| a.max(r.abs()));
    Ok(())
}

fn check_curve(c: &BoundaryCurve) -> Result<()> {
    for i in 1..c.b_values.len() {
        if c.b_values[i] > c.b_values[i - 1] + 1e-9 {
            return Err(Error::Invariant(format!("b increases between u = {} and u = {}", c.u_grid[i - 1], c.u_grid[i])));
        }
    }
    for i in 0..c.b_values.len() {
        if c.b_values[i] < c.h_values[i] - 1e-9 {
            return Err(Error::Invariant(format!("b < h at u = {}", c.u_grid[i])));
        }
    }
    if !(c.v00 < 0.0) {
        return Err(Error::Invariant(format!("V(0,0) = {} is not negative", c.v00)));
    }
    Ok(())
}

fn solve_tabulated(spec: &GainSpec, cfg: &SolverConfig) -> Result<Solution> {
    let model = *spec.model();
    let (lambda, rho) = model.jumps().expect("jump family");
    let shapes = Shapes::new(spec)?;
    let (a, b) = v00_bracket(spec);
    // a finite u_b moves with V(0,0); the grid must reach past its largest value
    let ub_max = spec.u_b(a)?.finite();
    let u_top = match ub_max {
        Some(ub) => cfg.u_max.max(1.25 * ub),
        None => cfg.u_max,
    };
    let grid = log_grid(cfg.u_min, u_top, cfg.n_u);
    let n = grid.len();
    let h = h_table(spec, &grid)?;
    let x_max = (2.5 * h[0]).max(h[0] + 5.0);
    // paths must be followed until they have left (0, x_max) for good
    let drift_out = (x_max + 8.0 / rho) / model.mean();
    let s_max = match ub_max {
        Some(ub) => (2.0 * drift_out).min(ub),
        None => 2.0 * drift_out,
    }
    .max(4.0 * drift_out.min(10.0));
    let tables = Tables::build(spec, &shapes, cfg, s_max, x_max)?;
    let nm = tables.n_x();
    let creep: Vec<f64> = tables
        .x
        .iter()
        .map(|&x| {
            if model.sigma() > 0.0 {
                0.5 * model.sigma().powi(2) * spec.family().scale_w_prime(x.max(1e-300)).unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let (tail_u, tail_b) = match ub_max {
        Some(_) => (vec![u_top * 1.5, u_top * 4.0], vec![0.0, 0.0]),
        None => {
            let mut tu = Vec::new();
            let mut t = u_top;
            while t < u_top + 2.0 * s_max {
                t *= 1.15;
                tu.push(t);
            }
            let tb = h_table(spec, &tu)?;
            (tu, tb)
        }
    };
    let knots = Knots { u: grid.iter().chain(&tail_u).copied().collect(), b: h.iter().chain(&tail_b).copied().collect() };
    let n_knots = knots.u.len();
    let mut state = TabState { knots, sv: vec![0.0; n_knots], rows: vec![vec![0.0; nm]; n] };

    let mut diag = Diagnostics { kernel_paths: tables.n_paths, ..Default::default() };
    let finite_variation = model.sigma() == 0.0;
    let c1 = spec.v0_slope(0.0)?;
    let delta = cfg.closure_delta;
    // lattice nodes at h, 2h, 4h for the difference quotients
    let hx = tables.delta;
    let node = |k: usize| tables.x.iter().position(|&x| (x - k as f64 * hx).abs() < 1e-9 * hx);
    let (n1, n2, n4) = match (node(1), node(2), node(4)) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Invariant("closure nodes missing from the x-grid".into())),
    };

    let mut err: Option<Error> = None;
    let closure = |v00: f64, st: &mut TabState, diag: &mut Diagnostics, err: &mut Option<Error>| -> f64 {
        let u_b = if finite_variation { spec.u_b(v00).ok().and_then(|e| e.finite()) } else { None };
        let solver = TabSolver { spec, cfg, t: &tables, lambda, rho, creep: creep.clone(), n_grid: n, u_b };
        match solver.sweep(st, &h, v00) {
            Ok(k) => diag.inner_iterations += k,
            Err(e) => {
                err.get_or_insert(e);
                return f64::NAN;
            }
        }
        let kappa_l = match spec.jump_average_v0(v00) {
            Ok(k) => lambda * k,
            Err(e) => {
                err.get_or_insert(e);
                return f64::NAN;
            }
        };
        let r = if finite_variation {
            // V(0,0) reproduces itself through the representation at u = x = 0
            solver.row_at(st, v00, kappa_l, 0.0)[0] - v00
        } else {
            let row = solver.row_at(st, v00, kappa_l, delta);
            let d = |m: usize, k: f64| (row[m] - v00) / (k * hx);
            let d0 = (8.0 * d(n1, 1.0) - 6.0 * d(n2, 2.0) + d(n4, 4.0)) / 3.0;
            c1 - d0
        };
        diag.v00_history.push((v00, r));
        r
    };
    let fa = closure(a, &mut state, &mut diag, &mut err);
    let fb = closure(b, &mut state, &mut diag, &mut err);
    if let Some(e) = err.take() {
        return Err(e);
    }
    let (v00, it) = illinois(|v| closure(v, &mut state, &mut diag, &mut err), a, b, fa, fb, 1e-9 * a.abs(), cfg.max_outer)
        .map_err(|e| match e {
            Error::Bracket(_) => Error::Bracket(format!("closing residual keeps one sign on V(0,0) in [{a}, {b}]: {fa} and {fb}")),
            other => other,
        })?;
    if let Some(e) = err.take() {
        return Err(e);
    }
    diag.outer_iterations = it + 2;
    diag.closure_residual = closure(v00, &mut state, &mut diag, &mut err);
    if let Some(e) = err {
        return Err(e);
    }
    if diag.outer_iterations > cfg.max_outer {
        return Err(Error::NonConvergence(format!("V(0,0) iteration hit the cap of {}", cfg.max_outer)));
    }

    let u_b = if finite_variation { spec.u_b(v00)? } else { Extended::Infinite };
    let curve = BoundaryCurve {
        u_grid: grid.clone(),
        b_values: state.knots.b[..n].to_vec(),
        h_values: h.clone(),
        tail_u,
        tail_b,
        u_b,
        v00,
    };
    check_curve(&curve)?;
    let kappa_l = lambda * spec.jump_average_v0(v00)?;
    let solver = TabSolver { spec, cfg, t: &tables, lambda, rho, creep, n_grid: n, u_b: u_b.finite() };
    let mut row_u = vec![delta];
    row_u.extend(&grid);
    let mut rows = vec![solver.row_at(&state, v00, kappa_l, delta)];
    rows.extend(state.rows.iter().cloned());
    let tab = TabSurface { x: tables.x.clone(), row_u, rows };
    let surface = ValueSurface { spec: spec.clone(), curve: curve.clone(), cfg: cfg.clone(), machinery: Machinery::Tabulated(Box::new(tab)) };
    fill_smooth_fit(&surface, &mut diag)?;
    Ok(Solution { curve, surface, diagnostics: diag })
}

/// One-sided slope of V(u, .) at b(u)-, by the second-order difference on (b - 2d, b - d, b),
/// divided by the average slope |V(u, b - s)| / s with s = min(1/2, b/2). Zero at an optimal boundary.
pub fn smooth_fit_residual(surface: &ValueSurface, u: f64) -> Result<f64> {
    let b = surface.curve.eval(u);
    if !(b > 0.0) {
        return Err(Error::Domain(format!("smooth fit needs b(u) > 0, got b({u}) = {b}")));
    }
    let d = match &surface.machinery {
        Machinery::Brownian { .. } => surface.cfg.fd_step,
        // the tabulated surface is piecewise linear between lattice nodes
        Machinery::Tabulated(t) => surface.cfg.fd_step.max(t.x[t.x.len() - 1] - t.x[t.x.len() - 2]),
    }
    .min(0.25 * b);
    let s = (0.5f64).min(0.5 * b);
    let f = |x: f64| surface.raw_value(u, x);
    let slope = (3.0 * f(b)? - 4.0 * f(b - d)? + f(b - 2.0 * d)?) / (2.0 * d);
    let scale = f(b - s)?.abs() / s;
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(slope / scale)
}

/// int_0^b V(u, y) lambda rho e^{rho y} dy on the current surface.
pub fn script_v(surface: &ValueSurface, u: f64, b: f64) -> Result<f64> {
    let Some((lambda, rho)) = surface.spec.model().jumps() else {
        return Err(Error::Unsupported("the jump average needs a jump family".into()));
    };
    if !(b > 0.0) {
        return Ok(0.0);
    }
    let mut err = None;
    let q = integrate(
        |y| match surface.value(u, y) {
            Ok(v) => v * lambda * rho * (rho * y).exp(),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.0,
        b,
        1e-10,
        1e-8,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(q.value),
    }
}

/// G(u,x) + int V(u, x+y) Pi(dy) for x > b(u); positive at the optimal boundary.
pub fn lambda_positivity_check(surface: &ValueSurface, u: f64, x: f64) -> Result<f64> {
    let b = surface.curve.eval(u);
    if !(x > b) {
        return Err(Error::Domain(format!("need x > b(u) = {b}, got {x}")));
    }
    let spec = &surface.spec;
    let g = spec.gain(u, x)?;
    let Some((lambda, rho)) = spec.model().jumps() else {
        return Ok(g);
    };
    let kappa = spec.jump_average_v0(surface.curve.v00)?;
    let jump = (-rho * x).exp() * (lambda * kappa + script_v(surface, u, b)?);
    Ok(g + jump)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyModel;

    #[test]
    fn knots_interpolate() {
        // exact on b = a + c ln u
        let u = vec![0.1, 0.3, 1.0, 2.0, 7.0];
        let k = Knots { b: u.iter().map(|v: &f64| 5.0 - 2.0 * v.ln()).collect(), u };
        for v in [0.15, 0.5, 1.7, 3.3, 6.9] {
            assert!((k.at(v) - (5.0 - 2.0 * f64::ln(v))).abs() < 1e-12, "{v}");
        }
        assert_eq!(k.at(0.05), k.b[0]);
        assert_eq!(k.at(9.0), k.b[4]);
        // no overshoot across a step
        let k = Knots { u: vec![1.0, 2.0, 4.0, 8.0], b: vec![3.0, 3.0, 0.0, 0.0] };
        let mut prev = f64::INFINITY;
        for i in 0..=70 {
            let v = k.at(1.0 + 0.1 * i as f64);
            assert!(v <= prev + 1e-15 && (0.0..=3.0).contains(&v));
            prev = v;
        }
        assert!((k.interp(&[3.0, 1.0, 0.0, 0.0], 2f64.sqrt()) - 2.0).abs() < 1e-14);
        assert_eq!(k.next_after(1.0), Some(2.0));
        assert_eq!(k.next_after(8.0), None);
    }

    #[test]
    fn kernel_h_matches_quadrature() {
        let spec = GainSpec::new(LevyModel::brownian_drift(0.5, 1.0).unwrap(), 2.0).unwrap();
        let fam = spec.family();
        let (mu, sigma) = (0.5, 1.0);
        for (r, t, x, b) in [(1.0, 0.0, 1.0, 2.0), (0.3, 2.0, 0.5, 1.5), (4.0, 1.0, 2.0, 3.0)] {
            let s = sigma * f64::sqrt(r);
            let direct = integrate(
                |z| {
                    let g = (r + t) * 0.5 * fam.scale_w(z) - fam.mean_g(z);
                    g * crate::numeric::norm_pdf((z - x - mu * r) / s) / s
                },
                0.0,
                b,
                1e-13,
                1e-12,
            )
            .value;
            assert!((kernel_h(mu, sigma, r, t, x, b) - direct).abs() < 1e-10);
        }
        assert_eq!(kernel_h(mu, sigma, 1.0, 1.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn stable_integrand_matches_direct_form() {
        let spec = GainSpec::new(LevyModel::brownian_drift(0.5, 1.0).unwrap(), 2.0).unwrap();
        let c = BmConsts::new(&spec).unwrap();
        for (r, u, x, b) in [(0.5f64, 1.0, 0.7f64, 2.0), (3.0, 0.2, 2.5, 4.0), (1e-4, 5.0, 0.01, 0.3)] {
            let e = (-2.0 * 0.5 * x).exp();
            let direct = kernel_h(0.5, 1.0, r, u, x, b) - e * kernel_h(0.5, 1.0, r, u, -x, b);
            let (v, _) = brownian::killed_integrand(&c, r, u, x, b);
            assert!((v - direct).abs() < 1e-11, "{v} vs {direct}");
        }
    }
}
