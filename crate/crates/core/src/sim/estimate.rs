//! Monte Carlo estimators. Paths run in parallel; sums are taken in path-index order.

use rayon::prelude::*;

use super::path::{sample_increment, Walker};
use super::rng::{purpose, StreamRng};
use super::rules::{barrier_passage, RuleCtx, RuleTracker, StoppingRule};
use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::scale::{McBudget, ScaleFamily};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub censored_fraction: f64,
    /// censored_fraction * horizon^p exceeds 1% of the mean
    pub unreliable: bool,
}

impl MCEstimate {
    /// |self - other| in units of the combined standard error.
    pub fn z_against(&self, other: &MCEstimate) -> f64 {
        (self.mean - other.mean).abs() / (self.stderr.powi(2) + other.stderr.powi(2)).sqrt()
    }

    /// |self - value| in units of this estimate's standard error.
    pub fn z_value(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub master_seed: u64,
    /// a path is settled once P(another zero) = 1 - psi'W(X) falls below this
    pub settle_tail: f64,
}

impl SimConfig {
    pub fn new(n_paths: usize, horizon: f64, dt: f64, master_seed: u64) -> Self {
        Self { n_paths, horizon, dt, master_seed, settle_tail: 1e-7 }
    }

    fn check(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter("need at least two paths".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 0.05) {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, 0.05], got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(())
    }
}

impl From<McBudget> for SimConfig {
    fn from(b: McBudget) -> Self {
        SimConfig::new(b.n_paths, 400.0, b.dt, b.seed)
    }
}

/// Smallest level above which another visit to (-inf, 0] has probability below `eps`.
pub(crate) fn settle_level(fam: &ScaleFamily, eps: f64) -> f64 {
    let m = fam.model().mean();
    let tail = |x: f64| 1.0 - m * fam.scale_w(x);
    let mut hi = 1.0;
    while tail(hi) > eps && hi < 1e6 {
        hi *= 2.0;
    }
    crate::numeric::bisect(|x| tail(x) - eps, 0.0, hi, 1e-9).unwrap_or(hi)
}

/// (value, censor weight) per path, reduced in index order.
fn reduce(samples: &[(f64, f64)], master: u64, horizon: f64, p: f64) -> MCEstimate {
    let n = samples.len();
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let censored_fraction = samples.iter().map(|s| s.1).sum::<f64>() / n as f64;
    MCEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n_paths: n,
        master_seed: master,
        censored_fraction,
        unreliable: censored_fraction * horizon.powf(p) > 0.01 * mean.abs(),
    }
}

struct PathOutcome {
    fired: Vec<Option<f64>>,
    g: f64,
    tail: f64,
}

fn run_rules(
    model: &LevyModel,
    fam: &ScaleFamily,
    rules: &[StoppingRule],
    x0: f64,
    cfg: &SimConfig,
    settle: f64,
    path: u64,
) -> PathOutcome {
    let ctx = RuleCtx::new(cfg.master_seed, path, model.sigma(), model.drift());
    let mut walker = Walker::new(model, x0, cfg.horizon, cfg.dt, cfg.master_seed, path);
    let mut clock = 0.0;
    let mut g: f64 = 0.0;
    let mut trackers: Vec<RuleTracker> = rules.iter().map(|r| RuleTracker::new(r.clone(), x0, clock)).collect();
    let mut all_done = trackers.iter().all(|t| t.done());
    while let Some(seg) = walker.next_segment() {
        let cont = seg.continuous_zero_marks(&ctx.bridge);
        if !all_done {
            for t in trackers.iter_mut() {
                t.feed(&seg, clock, cont, &ctx);
            }
            all_done = trackers.iter().all(|t| t.done());
        }
        let marks = if seg.jump && seg.x1 <= 0.0 {
            Some((cont.map(|c| c.0).unwrap_or(seg.t1), seg.t1))
        } else {
            cont
        };
        if let Some((_, last)) = marks {
            clock = last;
            g = g.max(last);
        }
        if all_done && seg.x1 > settle {
            break;
        }
    }
    let x = walker.value();
    let tail = (1.0 - model.mean() * fam.scale_w(x)).clamp(0.0, 1.0);
    PathOutcome {
        fired: trackers
            .iter()
            .map(|t| match t.rule {
                StoppingRule::OracleG => Some(g),
                _ => t.fired.map(|f| f.tau),
            })
            .collect(),
        g,
        tail,
    }
}

/// E|tau - g|^p for several rules on common paths started at `x0`.
pub fn estimate_prediction_errors(
    model: &LevyModel,
    rules: &[StoppingRule],
    p: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<Vec<MCEstimate>> {
    cfg.check()?;
    let fam = ScaleFamily::new(*model)?;
    let settle = settle_level(&fam, cfg.settle_tail);
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_rules(model, &fam, rules, x0, cfg, settle, i))
        .collect();
    Ok((0..rules.len())
        .map(|r| {
            let samples: Vec<(f64, f64)> = outcomes
                .iter()
                .map(|o| {
                    let (tau, cens) = match o.fired[r] {
                        Some(t) => (t, 0.0),
                        None => (cfg.horizon, 1.0),
                    };
                    // the oracle's loss is zero whatever the horizon, so truncation cannot bias it
                    let tail = if rules[r] == StoppingRule::OracleG { 0.0 } else { o.tail.max(cens) };
                    ((tau - o.g).abs().powf(p), tail)
                })
                .collect();
            reduce(&samples, cfg.master_seed, cfg.horizon, p)
        })
        .collect())
}

/// E|tau - g|^p for one rule from x0 = 0.
pub fn estimate_prediction_error(
    model: &LevyModel,
    rule: &StoppingRule,
    p: f64,
    n_paths: usize,
    horizon: f64,
    dt: f64,
    master_seed: u64,
) -> Result<MCEstimate> {
    let cfg = SimConfig::new(n_paths, horizon, dt, master_seed);
    Ok(estimate_prediction_errors(model, std::slice::from_ref(rule), p, 0.0, &cfg)?.remove(0))
}

/// Fluctuation functionals with closed forms in terms of scale functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// E_0 exp(-q g)
    LaplaceG { q: f64 },
    /// P_x(tau_a^+ < tau_0^-)
    ExitUpBeforeDown { x: f64, a: f64 },
    /// P_x(tau_0^- < infinity)
    RuinProb { x: f64 },
}

fn run_functional(model: &LevyModel, f: Functional, cfg: &SimConfig, settle: f64, path: u64) -> (f64, f64) {
    let ctx = RuleCtx::new(cfg.master_seed, path, model.sigma(), model.drift());
    let x0 = match f {
        Functional::LaplaceG { .. } => 0.0,
        Functional::ExitUpBeforeDown { x, .. } | Functional::RuinProb { x } => x,
    };
    let mut walker = Walker::new(model, x0, cfg.horizon, cfg.dt, cfg.master_seed, path);
    let mut g: f64 = 0.0;
    if let Functional::ExitUpBeforeDown { a, .. } = f {
        if x0 >= a {
            return (1.0, 0.0);
        }
    }
    if !matches!(f, Functional::LaplaceG { .. }) && x0 < 0.0 {
        return (if matches!(f, Functional::RuinProb { .. }) { 1.0 } else { 0.0 }, 0.0);
    }
    while let Some(seg) = walker.next_segment() {
        let cont = seg.continuous_zero_marks(&ctx.bridge);
        // first time strictly below 0: for a continuous part that only touches 0 the event has probability 0
        // a linear (sigma = 0) piece only meets 0 from below or at the start, never going down
        let down = match cont {
            Some((first, _)) if model.sigma() > 0.0 => Some(first),
            _ if seg.jump && seg.x1 < 0.0 => Some(seg.t1),
            _ => None,
        };
        match f {
            Functional::LaplaceG { .. } => {
                let marks = if seg.jump && seg.x1 <= 0.0 { Some(seg.t1) } else { cont.map(|c| c.1) };
                if let Some(l) = marks {
                    g = g.max(l);
                }
            }
            Functional::RuinProb { .. } => {
                if down.is_some() {
                    return (1.0, 0.0);
                }
            }
            Functional::ExitUpBeforeDown { a, .. } => {
                let up = barrier_passage(&seg, a, &ctx);
                match (up, down) {
                    (Some(u), Some(d)) => return (if u < d { 1.0 } else { 0.0 }, 0.0),
                    (Some(_), None) => return (1.0, 0.0),
                    (None, Some(_)) => return (0.0, 0.0),
                    (None, None) => {}
                }
                continue;
            }
        }
        if seg.x1 > settle {
            break;
        }
    }
    let x = walker.value();
    let fam_tail = (x <= settle) as u8 as f64;
    match f {
        Functional::LaplaceG { q } => ((-q * g).exp(), fam_tail),
        Functional::RuinProb { .. } => (0.0, fam_tail),
        Functional::ExitUpBeforeDown { .. } => (0.0, 1.0),
    }
}

pub fn estimate_functional(model: &LevyModel, functional: Functional, cfg: &SimConfig) -> Result<MCEstimate> {
    cfg.check()?;
    let fam = ScaleFamily::new(*model)?;
    let settle = settle_level(&fam, cfg.settle_tail);
    let samples: Vec<(f64, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_functional(model, functional, cfg, settle, i))
        .collect();
    Ok(reduce(&samples, cfg.master_seed, cfg.horizon, 1.0))
}

/// E_{u0,x0} int_0^tau gain(U_s, X_s) ds, by the trapezoid rule on the skeleton epochs.
pub fn estimate_running_gain<G>(
    model: &LevyModel,
    gain: G,
    rule: &StoppingRule,
    u0: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<MCEstimate>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    cfg.check()?;
    let samples: Vec<(f64, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let ctx = RuleCtx::new(cfg.master_seed, i, model.sigma(), model.drift());
            let mut walker = Walker::new(model, x0, cfg.horizon, cfg.dt, cfg.master_seed, i);
            let mut clock = if x0 <= 0.0 { 0.0 } else { -u0 };
            let mut tracker = RuleTracker::new(rule.clone(), x0, clock);
            if tracker.fired.is_some() {
                return (0.0, 0.0);
            }
            let mut acc = 0.0;
            let mut prev = gain(-clock, x0);
            while let Some(seg) = walker.next_segment() {
                let cont = seg.continuous_zero_marks(&ctx.bridge);
                tracker.feed(&seg, clock, cont, &ctx);
                if let Some(f) = tracker.fired {
                    acc += 0.5 * (f.tau - seg.t0) * (prev + gain(f.u, f.x));
                    return (acc, 0.0);
                }
                let marks = if seg.jump && seg.x1 <= 0.0 { Some((seg.t1, seg.t1)) } else { cont };
                let u_left = match cont {
                    Some((_, l)) => seg.t1 - l,
                    None => seg.t1 - clock,
                };
                acc += 0.5 * seg.dt() * (prev + gain(u_left, seg.x_left));
                if let Some((_, last)) = marks {
                    clock = last;
                }
                prev = gain(seg.t1 - clock, seg.x1);
            }
            (acc, 1.0)
        })
        .collect();
    Ok(reduce(&samples, cfg.master_seed, cfg.horizon, 1.0))
}

/// E_{x0}(g^p) from simulated last zeros.
pub fn estimate_g_power(model: &LevyModel, x0: f64, p: f64, budget: McBudget) -> Result<MCEstimate> {
    let cfg = SimConfig::from(budget);
    cfg.check()?;
    let fam = ScaleFamily::new(*model)?;
    let settle = settle_level(&fam, cfg.settle_tail);
    let samples: Vec<(f64, f64)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let o = run_rules(model, &fam, &[], x0, &cfg, settle, i);
            (o.g.powf(p), o.tail)
        })
        .collect();
    Ok(reduce(&samples, cfg.master_seed, cfg.horizon, p))
}

/// E f(X_t - X_0) from exact draws of the increment.
pub fn estimate_terminal<F>(model: &LevyModel, t: f64, budget: McBudget, f: F) -> MCEstimate
where
    F: Fn(f64) -> f64 + Sync,
{
    let samples: Vec<(f64, f64)> = (0..budget.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::for_path(budget.seed, i, purpose::INCREMENTS);
            (f(sample_increment(model, t, &mut rng)), 0.0)
        })
        .collect();
    reduce(&samples, budget.seed, t, 1.0)
}
