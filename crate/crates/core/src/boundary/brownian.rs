//! Brownian motion with drift: the closed-form kernel H and the backward sweep.

use super::{Knots, SolverConfig};
use crate::error::{Error, Result};
use crate::levy::Family;
use crate::numeric::{gl_panel, illinois, integrate, norm_cdf, norm_mass, norm_pdf};
use crate::stopping::GainSpec;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BmConsts {
    mu: f64,
    sigma: f64,
    k: f64,
}

impl BmConsts {
    pub(crate) fn new(spec: &GainSpec) -> Result<Self> {
        match spec.model().family() {
            Family::BrownianDrift { mu, sigma } => Ok(Self { mu, sigma, k: 2.0 * mu / (sigma * sigma) }),
            _ => Err(Error::Unsupported("the kernel H exists for Brownian motion with drift only".into())),
        }
    }
}

/// H(r, t, x, b) in closed form: the integral of the p = 2 gain against the free Gaussian density.
pub fn kernel_h(mu: f64, sigma: f64, r: f64, t: f64, x: f64, b: f64) -> f64 {
    let s = sigma * r.sqrt();
    let e = (-2.0 * mu / (sigma * sigma) * x).exp();
    (r + t) * (norm_cdf((b - x - mu * r) / s) - norm_cdf((-x - mu * r) / s))
        - (x / mu + t + sigma * sigma / (mu * mu)) * e * (norm_cdf((b - x + mu * r) / s) - norm_cdf((-x + mu * r) / s))
        + s / mu * e * (norm_pdf((b - x + mu * r) / s) - norm_pdf((-x + mu * r) / s))
}

/// H(r,u,x,b) - e^{-kx} H(r,u,-x,b), arranged so that no factor e^{kx} is ever formed.
/// Returns (total, reflected part).
pub(crate) fn killed_integrand(c: &BmConsts, r: f64, u: f64, x: f64, b: f64) -> (f64, f64) {
    if b <= 0.0 || r <= 0.0 {
        return (0.0, 0.0);
    }
    let (mu, k) = (c.mu, c.k);
    let s = c.sigma * r.sqrt();
    let a0 = c.sigma * c.sigma / (mu * mu) + u;
    let mass = |m: f64| norm_mass(-m / s, (b - m) / s);
    let e = (-k * x).exp();
    let direct = (r + u) * mass(x + mu * r) - (x / mu + a0) * e * mass(x - mu * r)
        + s / mu * e * (norm_pdf((b - x + mu * r) / s) - norm_pdf((-x + mu * r) / s));
    let reflected = e * (r + u) * mass(-x + mu * r) - (a0 - x / mu) * mass(-x - mu * r)
        + s / mu * (norm_pdf((b + x + mu * r) / s) - norm_pdf((x + mu * r) / s));
    (direct - reflected, reflected)
}

/// r beyond which the killed transition mass in (0, b) starting from x is negligible.
fn horizon(c: &BmConsts, cut: f64, x: f64, b: f64) -> f64 {
    let d = (b + x).max(0.0);
    let sr = (cut * c.sigma + (cut * cut * c.sigma * c.sigma + 4.0 * c.mu * d).sqrt()) / (2.0 * c.mu);
    sr * sr
}

pub(crate) struct BmEval<'a> {
    pub c: BmConsts,
    pub spec: &'a GainSpec,
    pub cfg: &'a SolverConfig,
}

impl BmEval<'_> {
    /// int_0^R f(r, b(u+r)) dr over panels aligned with the knots: adaptive on the first panel,
    /// Gauss-Legendre on later pieces whose width grows with r.
    fn integrate_r<F: Fn(f64, f64) -> f64>(&self, knots: &Knots, u: f64, x: f64, f: F) -> f64 {
        let big_r = horizon(&self.c, self.cfg.r_cut, x, knots.at(u));
        let g = |r: f64| f(r, knots.at(u + r));
        let first_end = knots.next_after(u).map(|k| k - u).unwrap_or(big_r).min(big_r);
        let mut total = integrate(g, 0.0, first_end, 1e-12, 1e-10).value;
        let mut a = first_end;
        while a < big_r {
            let next = knots.next_after(u + a).map(|k| k - u).unwrap_or(big_r).min(big_r);
            let mut lo = a;
            while lo < next {
                let hi = (1.5 * lo + 0.05).min(next);
                total += gl_panel(&mut |r| g(r), lo, hi, self.cfg.r_nodes);
                lo = hi;
            }
            a = next;
        }
        total
    }

    /// int_0^inf {H(r,u,x,b(u+r)) - e^{-kx} H(r,u,-x,b(u+r))} dr.
    pub(crate) fn r_integral(&self, knots: &Knots, u: f64, x: f64) -> f64 {
        self.integrate_r(knots, u, x, |r, b| killed_integrand(&self.c, r, u, x, b).0)
    }

    /// The reflected share int e^{-kx} H(r,u,-x,b(u+r)) dr on its own.
    pub(crate) fn reflected_integral(&self, knots: &Knots, u: f64, x: f64) -> f64 {
        self.integrate_r(knots, u, x, |r, b| killed_integrand(&self.c, r, u, x, b).1)
    }

    pub(crate) fn value(&self, knots: &Knots, v00: f64, u: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return v00;
        }
        let m = self.spec.model().mean();
        v00 * (1.0 - m * self.spec.family().scale_w(x)) + self.r_integral(knots, u, x)
    }

    /// [V(delta, h) - V00] / h, computed without the cancellation of the V00 term.
    pub(crate) fn difference_quotient(&self, knots: &Knots, v00: f64, delta: f64, h: f64) -> f64 {
        let m = self.spec.model().mean();
        (-v00 * m * self.spec.family().scale_w(h) + self.r_integral(knots, delta, h)) / h
    }

    /// Backward sweep: b at grid node i is the first upward crossing of V(u_i, .) above
    /// max(h(u_i), b(u_{i+1})), with b(u_i) itself moved along with the trial point.
    /// Knots beyond the grid stay fixed. Returns the number of value evaluations.
    pub(crate) fn sweep(&self, knots: &mut Knots, n_grid: usize, h: &[f64], v00: f64) -> Result<usize> {
        let mut evals = 0;
        for i in (0..n_grid).rev() {
            let u = knots.u[i];
            let lo = h[i].max(knots.b[i + 1]);
            let resid = |x: f64, kn: &mut Knots| {
                kn.b[i] = x;
                self.value(kn, v00, u, x)
            };
            let r_lo = resid(lo, knots);
            evals += 1;
            if r_lo >= 0.0 {
                knots.b[i] = lo;
                continue;
            }
            let (mut a, mut fa) = (lo, r_lo);
            let mut step = 0.02 * (1.0 + lo);
            let (b, fb) = loop {
                let x = a + step;
                let fx = resid(x, knots);
                evals += 1;
                if fx >= 0.0 {
                    break (x, fx);
                }
                if x > 1e4 {
                    return Err(Error::NonConvergence(format!("no boundary crossing at u = {u}")));
                }
                a = x;
                fa = fx;
                step *= 1.6;
            };
            let (root, it) = illinois(|x| resid(x, knots), a, b, fa, fb, 1e-10 * (1.0 + b), 200)?;
            evals += it;
            knots.b[i] = root;
        }
        Ok(evals)
    }
}
