//! Scale functions, the law of the last zero g and potential densities.

use libm::tgamma as gamma;

use crate::error::{Error, Result};
use crate::levy::{Family, LevyModel, Variation};
use crate::numeric::{integrate, norm_cdf};
use crate::quantity::{Provenance, Quantity};

/// sum_i w_i exp(r_i x), the shape every closed-form scale function takes here.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSum {
    pub rates: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ExpSum {
    pub fn eval(&self, x: f64) -> f64 {
        self.rates.iter().zip(&self.weights).map(|(r, w)| w * (r * x).exp()).sum()
    }

    /// value(0) + sum w_i expm1(r_i x); keeps relative accuracy near the origin.
    pub fn eval_from(&self, at_zero: f64, x: f64) -> f64 {
        at_zero + self.rates.iter().zip(&self.weights).map(|(r, w)| w * (r * x).exp_m1()).sum::<f64>()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.rates.iter().zip(&self.weights).map(|(r, w)| w * r * (r * x).exp()).sum()
    }
}

/// Which killed potential density to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    /// killed on exiting [0, a]
    Interval(f64),
    /// killed on exiting (-inf, a]
    HalfLine(f64),
    Free,
}

/// Monte Carlo budget for quantities without a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McBudget {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
}

impl Default for McBudget {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 1, dt: 1e-2 }
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> (f64, f64) {
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return (0.0, -b / a);
    }
    (q / a, c / q)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Scale functions of a model with cached q = 0 roots.
#[derive(Debug, Clone)]
pub struct ScaleFamily {
    model: LevyModel,
    w: ExpSum,
    w_zero: f64,
}

impl ScaleFamily {
    pub fn new(model: LevyModel) -> Result<Self> {
        if !(model.mean() > 0.0) {
            return Err(Error::Domain("scale functions need psi'(0+) > 0".into()));
        }
        let rates = Self::roots_for(&model, 0.0)?;
        let weights = rates.iter().map(|&b| 1.0 / model.psi_prime(b)).collect();
        let w_zero = match model.family() {
            Family::CramerLundberg { c, .. } => 1.0 / c,
            _ => 0.0,
        };
        Ok(Self { model, w: ExpSum { rates, weights }, w_zero })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    /// The q = 0 scale function as an exponential sum.
    pub fn w_terms(&self) -> &ExpSum {
        &self.w
    }

    /// Real roots of psi(beta) = q, largest (Phi(q)) first.
    pub fn roots(&self, q: f64) -> Result<Vec<f64>> {
        Self::roots_for(&self.model, q)
    }

    fn roots_for(model: &LevyModel, q: f64) -> Result<Vec<f64>> {
        let phi = model.phi(q)?;
        let mut roots = match model.family() {
            Family::BrownianDrift { mu, sigma } => vec![phi, -2.0 * mu / (sigma * sigma) - phi],
            Family::CramerLundberg { c, lambda, rho } => {
                let (r1, r2) = quadratic_roots(c, c * rho - lambda - q, -q * rho);
                let neg = if (r1 - phi).abs() < (r2 - phi).abs() { r2 } else { r1 };
                vec![phi, neg]
            }
            Family::JumpDiffusion { mu, sigma, lambda, rho } => {
                let s2 = sigma * sigma;
                let a = phi + rho + 2.0 * mu / s2;
                let b = a * phi + 2.0 * (mu * rho - lambda - q) / s2;
                let (r1, r2) = quadratic_roots(1.0, a, b);
                let cubic = |x: f64| {
                    let v = ((0.5 * s2 * x + 0.5 * s2 * rho + mu) * x + (mu * rho - q - lambda)) * x - q * rho;
                    let d = (1.5 * s2 * x + 2.0 * (0.5 * s2 * rho + mu)) * x + (mu * rho - q - lambda);
                    (v, d)
                };
                let polish = |mut x: f64| {
                    for _ in 0..6 {
                        let (v, d) = cubic(x);
                        if d == 0.0 {
                            break;
                        }
                        let step = v / d;
                        x -= step;
                        if step.abs() <= 1e-16 * x.abs().max(1.0) {
                            break;
                        }
                    }
                    x
                };
                vec![phi, polish(r1), polish(r2)]
            }
        };
        roots[1..].sort_by(|a, b| b.partial_cmp(a).unwrap());
        for w in roots.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::Invariant(format!("repeated roots of psi = {q}: {roots:?}")));
            }
        }
        Ok(roots)
    }

    fn wq_terms(&self, q: f64) -> Result<ExpSum> {
        if q == 0.0 {
            return Ok(self.w.clone());
        }
        let rates = self.roots(q)?;
        let weights = rates.iter().map(|&b| 1.0 / self.model.psi_prime(b)).collect();
        Ok(ExpSum { rates, weights })
    }

    /// W(0): zero for infinite variation, 1/c for the Cramer-Lundberg model.
    pub fn w_at_zero(&self) -> f64 {
        self.w_zero
    }

    /// W(infinity) = 1/psi'(0+).
    pub fn w_infinity(&self) -> f64 {
        1.0 / self.model.mean()
    }

    pub fn scale_w(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.w.eval_from(self.w_zero, x)
        }
    }

    /// W'(x); for the Cramer-Lundberg model x must be strictly positive.
    pub fn scale_w_prime(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if x == 0.0 && self.model.variation() == Variation::Finite {
            return Err(Error::Domain("W' is discontinuous at 0 for finite variation".into()));
        }
        Ok(self.w.derivative(x))
    }

    pub fn scale_wq(&self, q: f64, x: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("q must be nonnegative, got {q}")));
        }
        if x < 0.0 {
            return Ok(0.0);
        }
        Ok(self.wq_terms(q)?.eval_from(self.w_zero, x))
    }

    pub fn scale_wq_prime(&self, q: f64, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        Ok(self.wq_terms(q)?.derivative(x))
    }

    /// Z^(q)(x) = 1 + q int_0^x W^(q).
    pub fn scale_zq(&self, q: f64, x: f64) -> Result<f64> {
        if x <= 0.0 || q == 0.0 {
            return Ok(1.0);
        }
        let t = self.wq_terms(q)?;
        let integral: f64 = t
            .rates
            .iter()
            .zip(&t.weights)
            .map(|(&r, &w)| if r == 0.0 { w * x } else { w * (r * x).exp_m1() / r })
            .sum();
        Ok(1.0 + q * integral)
    }

    /// W^(q) from the series sum_k q^k W^{*(k+1)}, each convolution done on a trapezoid grid.
    pub fn scale_wq_series(&self, q: f64, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if x == 0.0 || q == 0.0 {
            return Ok(self.scale_w(x));
        }
        let n = 2000;
        let h = x / n as f64;
        let base: Vec<f64> = (0..=n).map(|i| self.scale_w(i as f64 * h)).collect();
        let mut term = base.clone();
        let mut sum = base[n];
        for k in 1..200 {
            let mut next = vec![0.0; n + 1];
            for m in 1..=n {
                let mut s = 0.5 * (term[0] * base[m] + term[m] * base[0]);
                for j in 1..m {
                    s += term[j] * base[m - j];
                }
                next[m] = s * h;
            }
            term = next;
            let add = q.powi(k) * term[n];
            sum += add;
            if add.abs() < 1e-12 * sum.abs() {
                return Ok(sum);
            }
        }
        Err(Error::SeriesNonConvergence { terms: 200 })
    }

    /// (W * W)(x), closed form over pairs of exponential terms.
    pub fn w_convolution2(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        Self::conv_pairs(&self.w, &self.w, x)
    }

    fn conv_pairs(a: &ExpSum, b: &ExpSum, x: f64) -> f64 {
        let mut s = 0.0;
        for (&ri, &wi) in a.rates.iter().zip(&a.weights) {
            for (&rj, &wj) in b.rates.iter().zip(&b.weights) {
                let d = ri - rj;
                let v = if d == 0.0 {
                    x * (ri * x).exp()
                } else if d > 0.0 {
                    (rj * x).exp() * (d * x).exp_m1() / d
                } else {
                    (ri * x).exp() * (-d * x).exp_m1() / -d
                };
                s += wi * wj * v;
            }
        }
        s
    }

    /// (W * W)(x) by adaptive quadrature of the defining integral.
    pub fn w_convolution2_quadrature(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        integrate(|y| self.scale_w(y) * self.scale_w(x - y), 0.0, x, 1e-13, 1e-12).value
    }

    /// E_x(exp(-q g)).
    pub fn g_laplace(&self, q: f64, x: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("q must be nonnegative, got {q}")));
        }
        if q == 0.0 {
            return Ok(1.0);
        }
        let m = self.model.mean();
        let t = self.wq_terms(q)?;
        if x < 0.0 {
            return Ok((t.rates[0] * x).exp() * m * t.weights[0]);
        }
        // the Phi(q) term of W^(q) cancels exactly against exp(Phi x) Phi'(q) psi'
        let rest: f64 = t.rates[1..].iter().zip(&t.weights[1..]).map(|(r, w)| w * (r * x).exp()).sum();
        Ok((m * (self.scale_w(x) - rest)).clamp(0.0, 1.0))
    }

    /// E_x(g), stable for every x.
    pub fn mean_g(&self, x: f64) -> f64 {
        let m = self.model.mean();
        if x < 0.0 {
            return self.mean_g(0.0) - x / m;
        }
        // negative-root part N of W = W(inf) + N
        let neg = ExpSum { rates: self.w.rates[1..].to_vec(), weights: self.w.weights[1..].to_vec() };
        let lin: f64 = neg.rates.iter().zip(&neg.weights).map(|(r, w)| 2.0 * w * (r * x).exp() / r).sum();
        lin + m * Self::conv_pairs(&neg, &neg, x)
    }

    /// E_x(g) by the transform-derivative identity, used as a cross-check of [`mean_g`].
    pub fn mean_g_identity(&self, x: f64) -> f64 {
        let m = self.model.mean();
        let (p1, p2) = self.model.phi_derivatives_at_zero();
        -m * (p2 + x * p1 * p1) + m * self.w_convolution2(x)
    }

    /// E_x(g^r). Closed form for r = 1, Richardson-extrapolated forward differences of the
    /// transform for integer r up to 4, and the fractional-moment integral for 0 < r < 1.
    pub fn exg_moment(&self, x: f64, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("moment order must be positive, got {r}")));
        }
        if r == 1.0 {
            return Ok(self.mean_g(x));
        }
        if r.fract() == 0.0 && r <= 4.0 {
            return self.moment_by_differences(x, r as u32);
        }
        if r < 1.0 {
            return self.fractional_moment(x, r);
        }
        Err(Error::Unsupported(format!("moment of order {r} of g")))
    }

    fn moment_by_differences(&self, x: f64, r: u32) -> Result<f64> {
        let scale = self.mean_g(x).max(1.0);
        let mut est = [0.0; 4];
        for (k, e) in est.iter_mut().enumerate() {
            let h = 1e-2 / scale / f64::powi(2.0, k as i32);
            let mut s = 0.0;
            for j in 0..=r {
                let sign = if (r - j).is_multiple_of(2) { 1.0 } else { -1.0 };
                s += sign * binomial(r, j) * self.g_laplace(j as f64 * h, x)?;
            }
            *e = s / h.powi(r as i32);
        }
        // forward differences carry every power of h; knock out h, h^2, h^3
        for level in 1..4 {
            let f = f64::powi(2.0, level);
            for k in 0..4 - level as usize {
                est[k] = (f * est[k + 1] - est[k]) / (f - 1.0);
            }
        }
        Ok(if r.is_multiple_of(2) { est[0] } else { -est[0] })
    }

    fn fractional_moment(&self, x: f64, r: f64) -> Result<f64> {
        // E g^r = r / Gamma(1-r) int_0^inf (1 - L(q)) q^(-1-r) dq, split at q = 1
        let one_minus = |q: f64| 1.0 - self.g_laplace(q, x).unwrap_or(f64::NAN);
        let head = integrate(
            |v: f64| {
                if v <= 0.0 {
                    return self.mean_g(x) / (1.0 - r);
                }
                let q = v.powf(1.0 / (1.0 - r));
                one_minus(q) / q / (1.0 - r)
            },
            0.0,
            1.0,
            1e-11,
            1e-10,
        );
        let tail = integrate(
            |v: f64| {
                if v <= 0.0 {
                    let atom = self.model.mean() * self.scale_w(x);
                    return (1.0 - atom) / r;
                }
                one_minus(v.powf(-1.0 / r)) / r
            },
            0.0,
            1.0,
            1e-11,
            1e-10,
        );
        let v = r / gamma(1.0 - r) * (head.value + tail.value);
        if !v.is_finite() {
            return Err(Error::NonConvergence("fractional moment integral".into()));
        }
        Ok(v)
    }

    /// E(g^p) under P_0.
    pub fn g_pth_moment(&self, p: f64) -> Result<Quantity> {
        self.g_pth_moment_with(p, McBudget::default())
    }

    pub fn g_pth_moment_with(&self, p: f64, budget: McBudget) -> Result<Quantity> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("moment order must be positive, got {p}")));
        }
        if let Family::BrownianDrift { mu, sigma } = self.model.family() {
            // under P_0 the last zero is Gamma(1/2, 2 sigma^2 / mu^2)
            let a = 2.0 * sigma * sigma / (mu * mu);
            return Ok(Quantity::closed(a.powf(p) * gamma(p + 0.5) / gamma(0.5)));
        }
        if p == 1.0 {
            return Ok(Quantity::closed(self.mean_g(0.0)));
        }
        if p == 2.0 {
            let m = self.model.mean();
            return Ok(Quantity::closed(m * self.model.phi_third_at_zero()));
        }
        if p.fract() == 0.0 && p <= 4.0 {
            return Ok(Quantity {
                value: self.moment_by_differences(0.0, p as u32)?,
                provenance: Provenance::FiniteDifference,
            });
        }
        let est = crate::sim::estimate_g_power(&self.model, 0.0, p, budget)?;
        Ok(Quantity {
            value: est.mean,
            provenance: Provenance::MonteCarlo { stderr: est.stderr, n_paths: est.n_paths, seed: est.master_seed },
        })
    }

    /// P_x(g <= gamma) = E_x(psi'(0+) W(X_gamma)).
    pub fn g_cdf(&self, x: f64, gamma_t: f64) -> Result<Quantity> {
        self.g_cdf_with(x, gamma_t, McBudget::default())
    }

    pub fn g_cdf_with(&self, x: f64, gamma_t: f64, budget: McBudget) -> Result<Quantity> {
        if !(gamma_t >= 0.0) {
            return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma_t}")));
        }
        let m = self.model.mean();
        if gamma_t == 0.0 {
            return Ok(Quantity::closed(m * self.scale_w(x)));
        }
        if let Family::BrownianDrift { mu, sigma } = self.model.family() {
            let s = sigma * gamma_t.sqrt();
            let k = 2.0 * mu / (sigma * sigma);
            let v = norm_cdf((x + mu * gamma_t) / s) - (-k * x).exp() * norm_cdf((x - mu * gamma_t) / s);
            return Ok(Quantity::closed(v.clamp(0.0, 1.0)));
        }
        let est = crate::sim::estimate_terminal(&self.model, gamma_t, budget, |y| m * self.scale_w(x + y));
        Ok(Quantity {
            value: est.mean,
            provenance: Provenance::MonteCarlo { stderr: est.stderr, n_paths: est.n_paths, seed: est.master_seed },
        })
    }

    pub fn potential_density(&self, kind: PotentialKind, q: f64, x: f64, y: f64) -> Result<f64> {
        let wq = |z: f64| self.scale_wq(q, z);
        let v = match kind {
            PotentialKind::Interval(a) => {
                if !(a > 0.0) || x < 0.0 || x > a || y < 0.0 || y > a {
                    return Err(Error::Domain(format!("interval density needs x, y in [0, {a}]")));
                }
                wq(x)? * wq(a - y)? / wq(a)? - wq(x - y)?
            }
            PotentialKind::HalfLine(a) => {
                if x > a || y > a {
                    return Err(Error::Domain(format!("half-line density needs x, y <= {a}")));
                }
                (-self.model.phi(q)? * (a - x)).exp() * wq(a - y)? - wq(x - y)?
            }
            PotentialKind::Free => {
                let phi = self.model.phi(q)?;
                self.model.phi_prime(q)? * (-phi * (y - x)).exp() - wq(x - y)?
            }
        };
        Ok(v.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(m: LevyModel) -> ScaleFamily {
        ScaleFamily::new(m).unwrap()
    }
    fn bd() -> ScaleFamily {
        fam(LevyModel::brownian_drift(0.5, 1.0).unwrap())
    }
    fn jd() -> ScaleFamily {
        fam(LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap())
    }
    fn cl() -> ScaleFamily {
        fam(LevyModel::cramer_lundberg(1.5, 1.0, 1.0).unwrap())
    }

    #[test]
    fn w_values() {
        for f in [bd(), jd(), cl()] {
            assert_eq!(f.scale_w(-0.5), 0.0);
        }
        assert!((bd().scale_w(1.0) - 2.0 * (1.0 - (-1f64).exp())).abs() < 1e-14);
        assert!((cl().scale_w(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(jd().scale_w(0.0), 0.0);
        for f in [bd(), jd(), cl()] {
            assert!((f.scale_w(120.0) - f.w_infinity()).abs() < 1e-10);
        }
    }

    #[test]
    fn w_prime_values() {
        assert!((bd().scale_w_prime(1e-12).unwrap() - 2.0).abs() < 1e-9);
        assert!((bd().scale_w_prime(1.0).unwrap() - 2.0 * (-1f64).exp()).abs() < 1e-14);
        let j = jd();
        let h = 1e-5;
        let fd = (j.scale_w(2.0 + h) - j.scale_w(2.0 - h)) / (2.0 * h);
        let d = j.scale_w_prime(2.0).unwrap();
        assert!((fd - d).abs() < 1e-6 * d);
        assert!(cl().scale_w_prime(0.0).is_err());
    }

    #[test]
    fn jump_diffusion_roots_match_quadratic() {
        // zeta roots solve sigma^2/2 b^2 + (sigma^2 rho/2 + mu) b + mu rho - lambda = 0
        let r = jd().roots(0.0).unwrap();
        let (a, b) = quadratic_roots(0.5, 3.5, 2.0);
        assert!((r[1] - a.max(b)).abs() < 1e-13);
        assert!((r[2] - a.min(b)).abs() < 1e-13);
    }

    #[test]
    fn wq_reduces_to_w() {
        for f in [bd(), jd(), cl()] {
            for x in [0.0, 0.3, 2.0, 7.0] {
                assert!((f.scale_wq(0.0, x).unwrap() - f.scale_w(x)).abs() < 1e-14);
            }
            assert_eq!(f.scale_zq(0.0, 3.0).unwrap(), 1.0);
            assert_eq!(f.scale_zq(2.0, -1.0).unwrap(), 1.0);
        }
        assert_eq!(bd().scale_wq(3.0, 0.0).unwrap(), 0.0);
        assert_eq!(jd().scale_wq(3.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn wq_laplace_transform() {
        let f = bd();
        let beta = 3.0;
        let i = integrate(|x| (-beta * x).exp() * f.scale_wq(1.0, x).unwrap(), 0.0, 40.0, 1e-13, 1e-12);
        assert!((i.value - 1.0 / (f.model().psi(beta) - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn zq_matches_quadrature() {
        let f = bd();
        let i = integrate(|y| f.scale_wq(1.0, y).unwrap(), 0.0, 1.0, 1e-13, 1e-13).value;
        assert!((f.scale_zq(1.0, 1.0).unwrap() - (1.0 + i)).abs() < 1e-8);
    }

    #[test]
    fn series_route_agrees() {
        for f in [bd(), jd(), cl()] {
            let a = f.scale_wq(0.7, 1.5).unwrap();
            let b = f.scale_wq_series(0.7, 1.5).unwrap();
            assert!((a - b).abs() < 1e-5 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn convolution() {
        let v = bd().w_convolution2(1.0);
        assert!((v - (-4.0 + 12.0 * (-1f64).exp())).abs() < 1e-12);
        for f in [bd(), jd(), cl()] {
            assert_eq!(f.w_convolution2(0.0), 0.0);
            for x in [0.5, 2.0, 6.0] {
                let a = f.w_convolution2(x);
                let b = f.w_convolution2_quadrature(x);
                assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn laplace_of_g() {
        let f = bd();
        for g in [bd(), jd(), cl()] {
            assert_eq!(g.g_laplace(0.0, 1.3).unwrap(), 1.0);
        }
        assert!((f.g_laplace(1.0, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((f.g_laplace(0.375, 0.0).unwrap() - 0.5).abs() < 1e-14);
        // the stable form agrees with the textbook expression
        for g in [bd(), jd(), cl()] {
            let m = g.model().mean();
            for (q, x) in [(0.5, 0.7), (2.0, 1.5), (0.1, -0.5)] {
                let phi = g.model().phi(q).unwrap();
                let direct = (phi * x).exp() * g.model().phi_prime(q).unwrap() * m
                    + m * (g.scale_w(x) - g.scale_wq(q, x).unwrap());
                assert!((direct - g.g_laplace(q, x).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_moment() {
        assert!((bd().exg_moment(0.0, 1.0).unwrap() - 4.0).abs() < 1e-13);
        assert!((bd().exg_moment(-1.0, 1.0).unwrap() - 6.0).abs() < 1e-13);
        assert!((jd().exg_moment(-2.0, 1.0).unwrap() - 1.75).abs() < 1e-13);
        assert!((cl().exg_moment(0.0, 1.0).unwrap() - 8.0).abs() < 1e-12);
        for f in [bd(), jd(), cl()] {
            for x in [0.0, 0.4, 1.0, 3.0, 8.0] {
                let a = f.mean_g(x);
                let b = f.mean_g_identity(x);
                assert!((a - b).abs() < 1e-11, "{x}: {a} vs {b}");
            }
        }
        // BD piecewise closed form (sigma^2/mu^2 + x/mu) e^{-2 mu x / sigma^2}
        for x in [0.2, 1.0, 5.0] {
            assert!((bd().mean_g(x) - (4.0 + 2.0 * x) * (-x).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn higher_moments() {
        let f = bd();
        assert!((f.g_pth_moment(2.0).unwrap().value - 48.0).abs() < 1e-10);
        assert!((f.g_pth_moment(1.0).unwrap().value - 4.0).abs() < 1e-12);
        assert!((f.exg_moment(0.0, 2.0).unwrap() - 48.0).abs() < 2e-5 * 48.0);
        assert!((f.exg_moment(0.0, 3.0).unwrap() - 960.0).abs() < 1e-4 * 960.0);
        // Gamma(1/2, 8): E g^{1/2} = sqrt(8) Gamma(1) / Gamma(1/2)
        let half = 8f64.sqrt() / gamma(0.5);
        assert!((f.exg_moment(0.0, 0.5).unwrap() - half).abs() < 1e-7);
        for g in [jd(), cl()] {
            let closed = g.g_pth_moment(2.0).unwrap().value;
            let fd = g.exg_moment(0.0, 2.0).unwrap();
            assert!((closed - fd).abs() < 1e-5 * closed, "{closed} vs {fd}");
        }
        assert!((cl().g_pth_moment(2.0).unwrap().value - 240.0).abs() < 1e-9);
        assert!(f.exg_moment(0.0, 5.5).is_err());
    }

    #[test]
    fn cdf_of_g() {
        let f = bd();
        let x = 0.8;
        let at0 = f.g_cdf(x, 0.0).unwrap().value;
        assert!((at0 - 0.5 * f.scale_w(x)).abs() < 1e-15);
        assert_eq!(f.g_cdf(-0.3, 0.0).unwrap().value, 0.0);
        // derivative of the cdf against the Laplace transform: int e^{-q t} dF(t)
        let q = 0.6;
        let lt = at0
            + integrate(
                |t| {
                    let h = 1e-6;
                    let d = (f.g_cdf(x, t + h).unwrap().value - f.g_cdf(x, (t - h).max(0.0)).unwrap().value)
                        / (t + h - (t - h).max(0.0));
                    (-q * t).exp() * d
                },
                1e-9,
                200.0,
                1e-9,
                1e-8,
            )
            .value;
        assert!((lt - f.g_laplace(q, x).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn potential_densities() {
        let f = bd();
        let a = 2.0;
        let v = f.potential_density(PotentialKind::Interval(a), 0.0, 1.0, 1.0).unwrap();
        assert!((v - f.scale_w(1.0).powi(2) / f.scale_w(2.0)).abs() < 1e-14);
        let free = f.potential_density(PotentialKind::Free, 0.0, 0.4, 0.4).unwrap();
        assert!((free - 2.0).abs() < 1e-14);
        assert!(f.potential_density(PotentialKind::Interval(a), 0.0, 3.0, 1.0).is_err());
        assert!(f.potential_density(PotentialKind::HalfLine(a), 0.0, 3.0, 1.0).is_err());
    }
}
