//! Stopping rules evaluated segment by segment.

use super::path::{bridge_dip_probability, bridge_passage_time, AugmentedSkeleton, BridgeCtx, Segment};
use super::rng::{counter_normal, derive_key, purpose};
use crate::scale::ScaleFamily;

const SUBGRID: usize = 16;

/// Piecewise-linear stopping boundary u -> b(u), held constant outside its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRule {
    u: Vec<f64>,
    b: Vec<f64>,
}

impl BoundaryRule {
    pub fn new(u: Vec<f64>, b: Vec<f64>) -> crate::Result<Self> {
        if u.len() != b.len() || u.is_empty() {
            return Err(crate::Error::InvalidParameter("boundary grid and values differ in length".into()));
        }
        if u.windows(2).any(|w| !(w[1] > w[0])) || u[0] <= 0.0 {
            return Err(crate::Error::InvalidParameter("boundary grid must be positive and increasing".into()));
        }
        if b.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(crate::Error::InvalidParameter("boundary values must be finite and nonnegative".into()));
        }
        Ok(Self { u, b })
    }

    /// b(u); infinite at u = 0 where the clock has just reset.
    pub fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::INFINITY;
        }
        let n = self.u.len();
        if u <= self.u[0] {
            return self.b[0];
        }
        if u >= self.u[n - 1] {
            return self.b[n - 1];
        }
        let i = self.u.partition_point(|&v| v <= u) - 1;
        let w = (u - self.u[i]) / (self.u[i + 1] - self.u[i]);
        self.b[i] + w * (self.b[i + 1] - self.b[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    /// first time X_t >= b(U_t)
    Boundary(BoundaryRule),
    /// first time X_t >= a
    ConstantBarrier(f64),
    Immediate,
    /// tau := g, the zero-loss oracle
    OracleG,
}

impl StoppingRule {
    pub fn label(&self) -> String {
        match self {
            StoppingRule::Boundary(_) => "boundary".into(),
            StoppingRule::ConstantBarrier(a) => format!("barrier:{a}"),
            StoppingRule::Immediate => "immediate".into(),
            StoppingRule::OracleG => "oracle".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingOutcome {
    pub tau: f64,
    pub censored: bool,
    pub g_hat: f64,
    pub u_at_tau: f64,
    pub censor_prob_bound: f64,
}

/// Keys for the randomness the rules consume beyond the skeleton itself.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RuleCtx {
    pub bridge: BridgeCtx,
    pub subgrid_key: u64,
    pub barrier_key: u64,
}

impl RuleCtx {
    pub fn new(master: u64, path: u64, sigma: f64, drift: f64) -> Self {
        Self {
            bridge: BridgeCtx { key: derive_key(master, path, purpose::BRIDGE), sigma, drift },
            subgrid_key: derive_key(master, path, purpose::SUBGRID),
            barrier_key: derive_key(master, path, purpose::BARRIER),
        }
    }
}

/// Firing time and state for one rule along one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Fired {
    pub tau: f64,
    pub u: f64,
    pub x: f64,
}

/// First time the continuous part of `seg` reaches the level `a` from below.
pub(crate) fn barrier_passage(seg: &Segment, a: f64, ctx: &RuleCtx) -> Option<f64> {
    let (x0, xl) = (seg.x0, seg.x_left);
    if x0 >= a {
        return Some(seg.t0);
    }
    let sigma = ctx.bridge.sigma;
    if sigma == 0.0 {
        return if xl >= a { Some(seg.t0 + (a - x0) / ctx.bridge.drift) } else { None };
    }
    let dt = seg.dt();
    if xl >= a {
        return Some(seg.t0 + bridge_passage_time(a - x0, xl - a, sigma, dt, ctx.barrier_key, seg.index, 1));
    }
    let p = bridge_dip_probability(a - x0, a - xl, 0.0, sigma, dt);
    if p > 1e-300 && super::rng::counter_uniform(ctx.barrier_key, seg.index, 0) < p {
        return Some(seg.t0 + bridge_passage_time(a - x0, a - xl, sigma, dt, ctx.barrier_key, seg.index, 1));
    }
    None
}

/// Boundary firing inside a segment whose clock origin `g` is fixed over the segment.
fn boundary_passage(seg: &Segment, rule: &BoundaryRule, g: f64, ctx: &RuleCtx) -> Option<Fired> {
    let sigma = ctx.bridge.sigma;
    let dt = seg.dt();
    let reach = seg.x0.max(seg.x_left) + 6.0 * sigma * dt.sqrt();
    if reach < rule.eval(seg.t1 - g) {
        return None;
    }
    let h = dt / SUBGRID as f64;
    let mut x = seg.x0;
    let mut t = seg.t0;
    for k in 1..=SUBGRID {
        let tk = if k == SUBGRID { seg.t1 } else { seg.t0 + k as f64 * h };
        let xk = if k == SUBGRID {
            seg.x_left
        } else if sigma == 0.0 {
            seg.x0 + (seg.x_left - seg.x0) * (k as f64 / SUBGRID as f64)
        } else {
            let rem = seg.t1 - t;
            let step = tk - t;
            let mean = x + (seg.x_left - x) * step / rem;
            let sd = sigma * (step * (rem - step) / rem).max(0.0).sqrt();
            mean + sd * counter_normal(ctx.subgrid_key, seg.index, 2 * k as u64)
        };
        let u = tk - g;
        if xk > 0.0 && xk >= rule.eval(u) {
            return Some(Fired { tau: tk, u, x: xk });
        }
        x = xk;
        t = tk;
    }
    None
}

/// Incremental evaluation of one rule.
#[derive(Debug, Clone)]
pub(crate) struct RuleTracker {
    pub rule: StoppingRule,
    pub fired: Option<Fired>,
}

impl RuleTracker {
    /// `clock` is the time of the last zero (negative when the excursion started before time 0).
    pub fn new(rule: StoppingRule, x0: f64, clock: f64) -> Self {
        let u0 = -clock;
        let fired = match &rule {
            StoppingRule::Immediate => Some(Fired { tau: 0.0, u: u0, x: x0 }),
            StoppingRule::ConstantBarrier(a) if x0 >= *a => Some(Fired { tau: 0.0, u: u0, x: x0 }),
            StoppingRule::Boundary(b) if x0 > 0.0 && x0 >= b.eval(u0) => Some(Fired { tau: 0.0, u: u0, x: x0 }),
            _ => None,
        };
        Self { rule, fired }
    }

    pub fn done(&self) -> bool {
        self.fired.is_some() || matches!(self.rule, StoppingRule::OracleG)
    }

    /// Process one segment; `clock` is the last zero before it, `cont` the zero marks of its continuous part.
    pub fn feed(&mut self, seg: &Segment, clock: f64, cont: Option<(f64, f64)>, ctx: &RuleCtx) {
        if self.done() {
            return;
        }
        match &self.rule {
            StoppingRule::ConstantBarrier(a) => {
                if let Some(t) = barrier_passage(seg, *a, ctx) {
                    let g = match cont {
                        Some((_, l)) if l <= t => l,
                        _ => clock,
                    };
                    self.fired = Some(Fired { tau: t, u: t - g, x: *a });
                }
            }
            StoppingRule::Boundary(b) => match cont {
                None => self.fired = boundary_passage(seg, b, clock, ctx),
                Some((_, last)) => {
                    let u = seg.t1 - last;
                    if seg.x_left > 0.0 && seg.x_left >= b.eval(u) {
                        self.fired = Some(Fired { tau: seg.t1, u, x: seg.x_left });
                    }
                }
            },
            StoppingRule::Immediate | StoppingRule::OracleG => {}
        }
    }
}

/// Apply a rule to a materialised path started with excursion age 0.
pub fn apply_rule(aug: &AugmentedSkeleton, rule: &StoppingRule) -> StoppingOutcome {
    apply_rule_from(aug, rule, 0.0)
}

/// Apply a rule to a path whose excursion at time 0 is `u0` old.
pub fn apply_rule_from(aug: &AugmentedSkeleton, rule: &StoppingRule, u0: f64) -> StoppingOutcome {
    let sk = &aug.skeleton;
    let ctx = RuleCtx::new(sk.master_seed, sk.path_index, sk.model.sigma(), sk.model.drift());
    let mut clock = if sk.x0 <= 0.0 { 0.0 } else { -u0 };
    let mut g_hat: f64 = 0.0;
    let mut tracker = RuleTracker::new(rule.clone(), sk.x0, clock);
    for (seg, marks) in sk.segments().zip(&aug.zero_marks) {
        let cont = seg.continuous_zero_marks(&ctx.bridge);
        tracker.feed(&seg, clock, cont, &ctx);
        if let Some((_, last)) = *marks {
            clock = last;
            g_hat = g_hat.max(last);
        }
    }
    let tail = ScaleFamily::new(sk.model)
        .map(|f| (1.0 - sk.model.mean() * f.scale_w(sk.terminal())).clamp(0.0, 1.0))
        .unwrap_or(1.0);
    let (tau, u, censored) = match (&tracker.rule, tracker.fired) {
        (StoppingRule::OracleG, _) => (g_hat, 0.0, false),
        (_, Some(f)) => (f.tau, f.u, false),
        (_, None) => (sk.horizon, sk.horizon - clock, true),
    };
    StoppingOutcome { tau, censored, g_hat, u_at_tau: u, censor_prob_bound: tail }
}

/// Last zero of a materialised path and the bound 1 - psi'(0+) W(X_T) on a later zero.
pub fn last_zero(aug: &AugmentedSkeleton) -> (f64, f64) {
    let sk = &aug.skeleton;
    let g = aug.zero_marks.iter().flatten().map(|m| m.1).fold(0.0, f64::max);
    let tail = ScaleFamily::new(sk.model)
        .map(|f| (1.0 - sk.model.mean() * f.scale_w(sk.terminal())).clamp(0.0, 1.0))
        .unwrap_or(1.0);
    (g, tail)
}
