//! Path skeletons: Gaussian increments on a time grid, exact exponential jump epochs,
//! and Brownian-bridge corrections between epochs.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::rng::{counter_normal, counter_uniform, derive_key, purpose, StreamRng};
use crate::levy::LevyModel;

/// One inter-epoch piece: continuous motion on (t0, t1), then an optional downward jump at t1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub index: u64,
    pub t0: f64,
    pub t1: f64,
    /// value at t0 (after any jump at t0)
    pub x0: f64,
    /// left limit at t1
    pub x_left: f64,
    /// value at t1 (after any jump at t1)
    pub x1: f64,
    pub jump: bool,
}

/// What the bridge corrections need to know about the continuous part.
#[derive(Debug, Clone, Copy)]
pub struct BridgeCtx {
    pub key: u64,
    pub sigma: f64,
    pub drift: f64,
}

/// First passage time of a Brownian bridge (volatility sigma, length dt) from distance
/// `d0 > 0` above a level to `d1` beyond it, conditioned to reach it.
/// With S inverse Gaussian of mean d0 dt / |d1| and shape d0^2 / sigma^2, T = dt S / (dt + S).
pub fn bridge_passage_time(d0: f64, d1: f64, sigma: f64, dt: f64, key: u64, counter: u64, lane: u64) -> f64 {
    if d0 <= 0.0 {
        return 0.0;
    }
    let shape = d0 * d0 / (sigma * sigma);
    let nu = counter_normal(key, counter, lane);
    let y = nu * nu;
    let mean = d0 * dt / d1.abs();
    let s = if !mean.is_finite() {
        shape / y
    } else {
        let a = mean * y / (2.0 * shape);
        let x = mean / (1.0 + a + (a * a + 2.0 * a).sqrt());
        let u = counter_uniform(key, counter, lane + 2);
        if u <= mean / (mean + x) {
            x
        } else {
            mean * mean / x
        }
    };
    if !s.is_finite() {
        return dt;
    }
    (dt * s / (dt + s)).clamp(0.0, dt)
}

/// Probability that a Brownian bridge between a and b (both above `level`) dips to it.
pub fn bridge_dip_probability(a: f64, b: f64, level: f64, sigma: f64, dt: f64) -> f64 {
    let e = 2.0 * (a - level) * (b - level) / (sigma * sigma * dt);
    if e > 700.0 {
        0.0
    } else {
        (-e).exp()
    }
}

impl Segment {
    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Sampled infimum of the continuous part over [t0, t1) (endpoints included).
    pub fn bridge_min(&self, ctx: &BridgeCtx) -> f64 {
        let (a, b) = (self.x0, self.x_left);
        if ctx.sigma == 0.0 {
            return a.min(b);
        }
        let u = counter_uniform(ctx.key, self.index, 0);
        let d = a - b;
        0.5 * ((a + b) - (d * d - 2.0 * ctx.sigma * ctx.sigma * self.dt() * u.ln()).sqrt())
    }

    /// Whether the continuous part reaches (-inf, 0] strictly inside, given positive endpoints.
    fn dips(&self, ctx: &BridgeCtx) -> bool {
        if ctx.sigma == 0.0 {
            return false;
        }
        let p = bridge_dip_probability(self.x0, self.x_left, 0.0, ctx.sigma, self.dt());
        p > 1e-300 && counter_uniform(ctx.key, self.index, 0) < p
    }

    /// (first, last) times in [t0, t1] at which the continuous part is <= 0.
    pub fn continuous_zero_marks(&self, ctx: &BridgeCtx) -> Option<(f64, f64)> {
        let (a, b) = (self.x0, self.x_left);
        let dt = self.dt();
        if ctx.sigma == 0.0 {
            if b <= 0.0 {
                Some((self.t0, self.t1))
            } else if a <= 0.0 {
                Some((self.t0, self.t0 + (-a) / ctx.drift))
            } else {
                None
            }
        } else if a <= 0.0 && b <= 0.0 {
            Some((self.t0, self.t1))
        } else if a <= 0.0 {
            let back = bridge_passage_time(b, a, ctx.sigma, dt, ctx.key, self.index, 4);
            Some((self.t0, self.t1 - back))
        } else if b <= 0.0 {
            let fwd = bridge_passage_time(a, b, ctx.sigma, dt, ctx.key, self.index, 1);
            Some((self.t0 + fwd, self.t1))
        } else if self.dips(ctx) {
            let fwd = bridge_passage_time(a, b, ctx.sigma, dt, ctx.key, self.index, 1);
            let back = bridge_passage_time(b, a, ctx.sigma, dt, ctx.key, self.index, 4);
            let first = self.t0 + fwd;
            Some((first, (self.t1 - back).max(first)))
        } else {
            None
        }
    }

    /// As [`continuous_zero_marks`](Self::continuous_zero_marks), also counting a jump to or below 0 at t1.
    pub fn zero_marks(&self, ctx: &BridgeCtx) -> Option<(f64, f64)> {
        let marks = self.continuous_zero_marks(ctx);
        if self.jump && self.x1 <= 0.0 {
            return Some(match marks {
                Some((f, _)) => (f, self.t1),
                None => (self.t1, self.t1),
            });
        }
        marks
    }
}

/// Sequential generator of segments for one path.
pub struct Walker {
    drift: f64,
    sigma: f64,
    jumps: Option<(f64, f64)>,
    dt: f64,
    horizon: f64,
    rng: StreamRng,
    t: f64,
    x: f64,
    grid_k: u64,
    next_jump: f64,
    index: u64,
    extra_stops: Vec<f64>,
    stop_pos: usize,
}

impl Walker {
    pub fn new(model: &LevyModel, x0: f64, horizon: f64, dt: f64, master: u64, path: u64) -> Self {
        let mut rng = StreamRng::for_path(master, path, purpose::INCREMENTS);
        let jumps = model.jumps();
        let next_jump = match jumps {
            Some((lambda, _)) => rng.sample::<f64, _>(Exp1) / lambda,
            None => f64::INFINITY,
        };
        Self {
            drift: model.drift(),
            sigma: model.sigma(),
            jumps,
            dt,
            horizon,
            rng,
            t: 0.0,
            x: x0,
            grid_k: 0,
            next_jump,
            index: 0,
            extra_stops: Vec::new(),
            stop_pos: 0,
        }
    }

    /// Additional epochs (sorted) at which a segment must end, e.g. tabulation times.
    pub fn with_stops(mut self, stops: &[f64]) -> Self {
        self.extra_stops = stops.to_vec();
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn value(&self) -> f64 {
        self.x
    }

    pub fn next_segment(&mut self) -> Option<Segment> {
        if self.t >= self.horizon {
            return None;
        }
        while self.stop_pos < self.extra_stops.len() && self.extra_stops[self.stop_pos] <= self.t {
            self.stop_pos += 1;
        }
        let grid_next = (self.grid_k + 1) as f64 * self.dt;
        let extra = self.extra_stops.get(self.stop_pos).copied().unwrap_or(f64::INFINITY);
        let mut t1 = grid_next.min(self.horizon).min(extra);
        let jump = self.next_jump < t1;
        if jump {
            t1 = self.next_jump;
        }
        if t1 >= grid_next {
            self.grid_k += 1;
        }
        let h = t1 - self.t;
        let mut x_left = self.x + self.drift * h;
        if self.sigma > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            x_left += self.sigma * h.sqrt() * z;
        }
        let mut x1 = x_left;
        if jump {
            let (lambda, rho) = self.jumps.unwrap();
            let y: f64 = self.rng.sample(Exp1);
            x1 -= y / rho;
            self.next_jump += self.rng.sample::<f64, _>(Exp1) / lambda;
        }
        let seg = Segment { index: self.index, t0: self.t, t1, x0: self.x, x_left, x1, jump };
        self.index += 1;
        self.t = t1;
        self.x = x1;
        Some(seg)
    }
}

/// A materialised path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSkeleton {
    pub times: Vec<f64>,
    /// value at each epoch, after any jump there
    pub values: Vec<f64>,
    /// left limit at each epoch
    pub left_values: Vec<f64>,
    pub jump_flags: Vec<bool>,
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub master_seed: u64,
    pub path_index: u64,
    pub model: LevyModel,
}

impl PathSkeleton {
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        (1..self.times.len()).map(move |i| Segment {
            index: (i - 1) as u64,
            t0: self.times[i - 1],
            t1: self.times[i],
            x0: self.values[i - 1],
            x_left: self.left_values[i],
            x1: self.values[i],
            jump: self.jump_flags[i],
        })
    }

    pub(crate) fn bridge_ctx(&self) -> BridgeCtx {
        BridgeCtx {
            key: derive_key(self.master_seed, self.path_index, purpose::BRIDGE),
            sigma: self.model.sigma(),
            drift: self.model.drift(),
        }
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

pub fn simulate_skeleton(model: &LevyModel, x0: f64, horizon: f64, dt: f64, master: u64, path: u64) -> PathSkeleton {
    let mut w = Walker::new(model, x0, horizon, dt, master, path);
    let mut sk = PathSkeleton {
        times: vec![0.0],
        values: vec![x0],
        left_values: vec![x0],
        jump_flags: vec![false],
        x0,
        dt,
        horizon,
        master_seed: master,
        path_index: path,
        model: *model,
    };
    while let Some(s) = w.next_segment() {
        sk.times.push(s.t1);
        sk.values.push(s.x1);
        sk.left_values.push(s.x_left);
        sk.jump_flags.push(s.jump);
    }
    sk
}

/// Per-segment bridge corrections attached to a skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSkeleton {
    pub skeleton: PathSkeleton,
    /// sampled infimum over each segment
    pub minima: Vec<f64>,
    /// (first, last) zero-set times inside each segment
    pub zero_marks: Vec<Option<(f64, f64)>>,
}

impl AugmentedSkeleton {
    /// Epochs inserted where the path sits at or below zero strictly between skeleton epochs.
    pub fn crossing_epochs(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (s, m) in self.skeleton.segments().zip(&self.zero_marks) {
            if let Some((f, l)) = *m {
                for t in [f, l] {
                    if t > s.t0 && t < s.t1 && out.last() != Some(&t) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }
}

pub fn detect_zero_crossings(skel: PathSkeleton) -> AugmentedSkeleton {
    let ctx = skel.bridge_ctx();
    let minima = skel.segments().map(|s| s.bridge_min(&ctx)).collect();
    let zero_marks = skel.segments().map(|s| s.zero_marks(&ctx)).collect();
    AugmentedSkeleton { skeleton: skel, minima, zero_marks }
}

/// Exact draw of X_t - X_0.
pub fn sample_increment<R: Rng>(model: &LevyModel, t: f64, rng: &mut R) -> f64 {
    let mut x = model.drift() * t;
    if model.sigma() > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        x += model.sigma() * t.sqrt() * z;
    }
    if let Some((lambda, rho)) = model.jumps() {
        // Poisson count by exponential spacings, then sum of the exponential sizes
        let mut s: f64 = rng.sample::<f64, _>(Exp1) / lambda;
        while s < t {
            x -= rng.sample::<f64, _>(Exp1) / rho;
            s += rng.sample::<f64, _>(Exp1) / lambda;
        }
    }
    x
}
