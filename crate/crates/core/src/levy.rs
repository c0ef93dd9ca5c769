//! Process families and their Laplace exponents.

use std::fmt;

use crate::error::{Error, Rejection, Result};

/// Parameters of a spectrally negative Levy process with exponential downward jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    BrownianDrift { mu: f64, sigma: f64 },
    JumpDiffusion { mu: f64, sigma: f64, lambda: f64, rho: f64 },
    CramerLundberg { c: f64, lambda: f64, rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variation {
    Infinite,
    Finite,
}

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variation::Infinite => "infinite",
            Variation::Finite => "finite",
        })
    }
}

/// An immutable, parameter-checked process description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyModel {
    family: Family,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and positive, got {v}")))
    }
}

impl LevyModel {
    pub fn new(family: Family) -> Result<Self> {
        match family {
            Family::BrownianDrift { mu, sigma } => {
                positive("mu", mu)?;
                positive("sigma", sigma)?;
            }
            Family::JumpDiffusion { mu, sigma, lambda, rho } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidParameter(format!("mu must be finite, got {mu}")));
                }
                positive("sigma", sigma)?;
                positive("lambda", lambda)?;
                positive("rho", rho)?;
            }
            Family::CramerLundberg { c, lambda, rho } => {
                positive("c", c)?;
                positive("lambda", lambda)?;
                positive("rho", rho)?;
            }
        }
        Ok(Self { family })
    }

    pub fn brownian_drift(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::BrownianDrift { mu, sigma })
    }

    pub fn jump_diffusion(mu: f64, sigma: f64, lambda: f64, rho: f64) -> Result<Self> {
        Self::new(Family::JumpDiffusion { mu, sigma, lambda, rho })
    }

    pub fn cramer_lundberg(c: f64, lambda: f64, rho: f64) -> Result<Self> {
        Self::new(Family::CramerLundberg { c, lambda, rho })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::BrownianDrift { .. } => "brownian",
            Family::JumpDiffusion { .. } => "jump-diffusion",
            Family::CramerLundberg { .. } => "cramer-lundberg",
        }
    }

    /// Linear drift coefficient (mu, or the premium rate c).
    pub fn drift(&self) -> f64 {
        match self.family {
            Family::BrownianDrift { mu, .. } | Family::JumpDiffusion { mu, .. } => mu,
            Family::CramerLundberg { c, .. } => c,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self.family {
            Family::BrownianDrift { sigma, .. } | Family::JumpDiffusion { sigma, .. } => sigma,
            Family::CramerLundberg { .. } => 0.0,
        }
    }

    /// (lambda, rho) of the exponential jump part, if any.
    pub fn jumps(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::BrownianDrift { .. } => None,
            Family::JumpDiffusion { lambda, rho, .. } | Family::CramerLundberg { lambda, rho, .. } => {
                Some((lambda, rho))
            }
        }
    }

    pub fn variation(&self) -> Variation {
        if self.sigma() > 0.0 {
            Variation::Infinite
        } else {
            Variation::Finite
        }
    }

    /// Levy density on y < 0: lambda * rho * exp(rho * y).
    pub fn levy_density(&self, y: f64) -> f64 {
        match self.jumps() {
            Some((lambda, rho)) if y < 0.0 => lambda * rho * (rho * y).exp(),
            _ => 0.0,
        }
    }

    /// psi(beta) = log E exp(beta X_1); valid for beta > -rho.
    pub fn psi(&self, beta: f64) -> f64 {
        let d = self.drift();
        let s2 = self.sigma().powi(2);
        let mut v = d * beta + 0.5 * s2 * beta * beta;
        if let Some((lambda, rho)) = self.jumps() {
            v -= lambda * beta / (rho + beta);
        }
        v
    }

    pub fn psi_prime(&self, beta: f64) -> f64 {
        let mut v = self.drift() + self.sigma().powi(2) * beta;
        if let Some((lambda, rho)) = self.jumps() {
            v -= lambda * rho / (rho + beta).powi(2);
        }
        v
    }

    pub fn psi_second(&self, beta: f64) -> f64 {
        let mut v = self.sigma().powi(2);
        if let Some((lambda, rho)) = self.jumps() {
            v += 2.0 * lambda * rho / (rho + beta).powi(3);
        }
        v
    }

    pub fn psi_third(&self, beta: f64) -> f64 {
        match self.jumps() {
            Some((lambda, rho)) => -6.0 * lambda * rho / (rho + beta).powi(4),
            None => 0.0,
        }
    }

    /// psi'(0+) = E(X_1).
    pub fn mean(&self) -> f64 {
        self.psi_prime(0.0)
    }

    /// Right inverse of psi, by Newton safeguarded inside a growing bracket.
    pub fn phi(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(Error::Domain(format!("phi needs finite q >= 0, got {q}")));
        }
        let mean = self.mean();
        if q == 0.0 && mean > 0.0 {
            return Ok(0.0);
        }
        // for a non-drifting model the bracket must start at the minimiser of psi
        let mut lo = 0.0;
        if mean <= 0.0 {
            let mut hi = 1.0;
            while self.psi_prime(hi) <= 0.0 {
                hi *= 2.0;
            }
            let mut a = 0.0;
            for _ in 0..200 {
                let m = 0.5 * (a + hi);
                if self.psi_prime(m) > 0.0 {
                    hi = m
                } else {
                    a = m
                }
            }
            lo = hi;
        }
        let mut hi = lo.max(1.0);
        let mut grow = 0;
        while self.psi(hi) <= q {
            hi *= 2.0;
            grow += 1;
            if grow > 1100 {
                return Err(Error::Bracket(format!("phi: psi stays below q={q}")));
            }
        }
        let mut x = hi;
        for _ in 0..200 {
            let fx = self.psi(x) - q;
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if fx.abs() <= 1e-15 * q.max(1.0) {
                return Ok(x);
            }
            let mut next = x - fx / self.psi_prime(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::Bracket(format!("phi: Newton iteration did not settle for q={q}")))
    }

    pub fn phi_prime(&self, q: f64) -> Result<f64> {
        Ok(1.0 / self.psi_prime(self.phi(q)?))
    }

    /// (Phi'(0+), Phi''(0+)) from implicit differentiation of psi(Phi(q)) = q.
    pub fn phi_derivatives_at_zero(&self) -> (f64, f64) {
        let m = self.mean();
        (1.0 / m, -self.psi_second(0.0) / m.powi(3))
    }

    /// Phi'''(0+), used by the moment formulas.
    pub fn phi_third_at_zero(&self) -> f64 {
        let (p1, p2) = self.phi_derivatives_at_zero();
        -self.psi_third(0.0) * p1.powi(4) - 3.0 * self.psi_second(0.0) * p1 * p1 * p2
    }
}

/// Exponent of the L^p loss, p > 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOrder(f64);

impl MomentOrder {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidParameter(format!("moment order p must exceed 1, got {p}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_two(self) -> bool {
        self.0 == 2.0
    }
}

/// Admissibility of a model for the L^p problem.
///
/// The exponential jump tails carry every moment, so only the drift clause can fail
/// for the built-in families.
pub fn validate(model: &LevyModel, p: MomentOrder) -> std::result::Result<(), Rejection> {
    let m = model.mean();
    if !(m > 0.0) {
        return Err(Rejection::Drift { psi_prime0: m });
    }
    let moment_ok = match model.jumps() {
        None => true,
        Some((_, rho)) => rho > 0.0 && p.value().is_finite(),
    };
    if !moment_ok {
        return Err(Rejection::Moment { p: p.value() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bd() -> LevyModel {
        LevyModel::brownian_drift(0.5, 1.0).unwrap()
    }
    fn jd() -> LevyModel {
        LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap()
    }
    fn cl() -> LevyModel {
        LevyModel::cramer_lundberg(1.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn exponent_values() {
        assert_eq!(bd().psi(1.0), 1.0);
        assert!((jd().psi(1.0) - 3.0).abs() < 1e-15);
        for m in [bd(), jd(), cl()] {
            assert_eq!(m.psi(0.0), 0.0);
        }
    }

    #[test]
    fn means() {
        assert_eq!(bd().mean(), 0.5);
        assert!((jd().mean() - 2.0).abs() < 1e-15);
        assert!((cl().mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn phi_values() {
        assert!((bd().phi(1.0).unwrap() - 1.0).abs() < 1e-14);
        for m in [bd(), jd(), cl()] {
            assert_eq!(m.phi(0.0).unwrap(), 0.0);
        }
        for q in [1e-6, 0.3, 1.0, 17.0, 1e3] {
            let v = jd().phi(q).unwrap();
            assert!((jd().psi(v) - q).abs() < 1e-12 * q.max(1.0));
        }
    }

    #[test]
    fn derivatives_at_zero() {
        assert_eq!(bd().phi_derivatives_at_zero(), (2.0, -8.0));
        let (a, b) = jd().phi_derivatives_at_zero();
        assert!((a - 0.5).abs() < 1e-15 && (b + 0.375).abs() < 1e-15);
        let m = cl();
        let (a, b) = m.phi_derivatives_at_zero();
        assert!((a - 2.0).abs() < 1e-14);
        assert!((b + m.psi_second(0.0) / m.mean().powi(3)).abs() < 1e-10);
        // forward-difference check of Phi'' on the jump-diffusion
        let h = 1e-4;
        let fd = (jd().phi(2.0 * h).unwrap() - 2.0 * jd().phi(h).unwrap()) / (h * h);
        assert!((fd + 0.375).abs() < 1e-3);
    }

    #[test]
    fn validation_clauses() {
        let p2 = MomentOrder::new(2.0).unwrap();
        assert!(validate(&bd(), p2).is_ok());
        let bad = LevyModel::jump_diffusion(1.0, 1.0, 2.0, 1.0).unwrap();
        match validate(&bad, p2) {
            Err(Rejection::Drift { psi_prime0 }) => assert!((psi_prime0 + 1.0).abs() < 1e-15),
            other => panic!("expected drift rejection, got {other:?}"),
        }
        assert!(validate(&cl(), MomentOrder::new(3.0).unwrap()).is_ok());
        assert!(MomentOrder::new(1.0).is_err());
        assert!(LevyModel::brownian_drift(-1.0, 1.0).is_err());
        assert!(LevyModel::cramer_lundberg(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn variation_class() {
        assert_eq!(bd().variation(), Variation::Infinite);
        assert_eq!(jd().variation(), Variation::Infinite);
        assert_eq!(cl().variation(), Variation::Finite);
    }
}
