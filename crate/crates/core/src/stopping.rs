//! Gain function, the curve h, the threshold T, u_h*, u_b and the value on the negative half-line.

use crate::error::{Error, Rejection, Result};
use crate::levy::{validate, LevyModel, MomentOrder, Variation};
use crate::numeric::{bisect, integrate};
use crate::quantity::Extended;
use crate::scale::ScaleFamily;

/// Outcome of the u_b equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UbEquation {
    /// infinite variation or infinite activity: u_b = inf and there is nothing to solve
    Infinite,
    Residual(f64),
}

#[derive(Debug, Clone)]
pub struct GainSpec {
    model: LevyModel,
    fam: ScaleFamily,
    p: MomentOrder,
    eg_pm1: f64,
    eg_p: f64,
}

impl GainSpec {
    pub fn new(model: LevyModel, p: f64) -> Result<Self> {
        let p = MomentOrder::new(p)?;
        validate(&model, p).map_err(Error::Rejected)?;
        let fam = ScaleFamily::new(model)?;
        let eg_pm1 = fam.exg_moment(0.0, p.value() - 1.0)?;
        let eg_p = fam.g_pth_moment(p.value())?.value;
        Ok(Self { model, fam, p, eg_pm1, eg_p })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn family(&self) -> &ScaleFamily {
        &self.fam
    }

    pub fn p(&self) -> f64 {
        self.p.value()
    }

    /// E(g^p) under P_0.
    pub fn eg_p(&self) -> f64 {
        self.eg_p
    }

    /// E_x(g^{p-1}).
    pub fn moment_pm1(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(self.eg_pm1);
        }
        self.fam.exg_moment(x, self.p() - 1.0)
    }

    /// G(u, x) = u^{p-1} psi'(0+) W(x) - E_x(g^{p-1}).
    pub fn gain(&self, u: f64, x: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("u must be nonnegative, got {u}")));
        }
        let m = self.moment_pm1(x)?;
        if x < 0.0 {
            return Ok(-m);
        }
        Ok(u.powf(self.p() - 1.0) * self.model.mean() * self.fam.scale_w(x) - m)
    }

    /// T(x) = E_x(g^{p-1}) / (psi'(0+) W(x)); infinite where W vanishes.
    pub fn threshold_t(&self, x: f64) -> Result<Extended> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("T needs x >= 0, got {x}")));
        }
        let w = self.fam.scale_w(x);
        if w == 0.0 {
            return Ok(Extended::Infinite);
        }
        Ok(Extended::Finite(self.moment_pm1(x)? / (self.model.mean() * w)))
    }

    pub fn u_h_star(&self) -> Extended {
        match self.model.variation() {
            Variation::Infinite => Extended::Infinite,
            Variation::Finite => Extended::Finite(self.eg_pm1 / (self.model.mean() * self.fam.w_at_zero())),
        }
    }

    /// h(u) = inf{x : G(u, x) >= 0}, restricted to x >= 0.
    pub fn h_curve(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::Domain(format!("h needs u > 0, got {u}")));
        }
        if !self.u_h_star().exceeds(u.powf(self.p() - 1.0)) {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.gain(u, hi)? < 0.0 {
            hi *= 2.0;
            if hi > 1e8 {
                return Err(Error::Bracket(format!("gain stays negative at u = {u}")));
            }
        }
        let mut err = None;
        let root = bisect(
            |x| match self.gain(u, x) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            },
            0.0,
            hi,
            1e-10,
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(root),
        }
    }

    /// V* = p V(0,0) + E(g^p).
    pub fn value_conversion(&self, v00: f64) -> Result<f64> {
        if !(v00 < 0.0) {
            return Err(Error::Domain(format!("V(0,0) must be negative, got {v00}")));
        }
        let v = self.p() * v00 + self.eg_p;
        if v < -1e-9 * self.eg_p {
            return Err(Error::Invariant(format!(
                "V(0,0) = {v00} lies below the bound -E(g^p)/p = {}",
                -self.eg_p / self.p()
            )));
        }
        Ok(v.max(0.0))
    }

    /// Coefficients (c1, c2) of V(0,x) = V(0,0) + c1 x - c2 x^2 on x <= 0, p = 2 only.
    pub fn quadratic_coefficients(&self) -> Option<(f64, f64)> {
        if !self.p.is_two() {
            return None;
        }
        let m = self.model.mean();
        let w = self.fam.w_terms();
        // int u W(du) over the negative-root part of W
        let first: f64 = w.rates[1..].iter().zip(&w.weights[1..]).map(|(b, c)| c / b).sum();
        Some(((self.eg_pm1 + first) / m, 0.5 / (m * m)))
    }

    /// d/dx V(0,x) = int_{[0,inf)} E_{x-u}(g^{p-1}) W(du), for x <= 0.
    pub fn v0_slope(&self, x: f64) -> Result<f64> {
        if !(x <= 0.0) {
            return Err(Error::Domain(format!("x must be nonpositive, got {x}")));
        }
        if let Some((c1, c2)) = self.quadratic_coefficients() {
            return Ok(c1 - 2.0 * c2 * x);
        }
        self.w_measure_integral(x)
    }

    /// V(0, x) for x <= 0.
    pub fn v0_on_negatives(&self, v00: f64, x: f64) -> Result<f64> {
        if !(x <= 0.0) {
            return Err(Error::Domain(format!("x must be nonpositive, got {x}")));
        }
        if x == 0.0 {
            return Ok(v00);
        }
        if let Some((c1, c2)) = self.quadratic_coefficients() {
            return Ok(v00 + c1 * x - c2 * x * x);
        }
        Ok(v00 - self.v0_integral(x)?)
    }

    /// int_0^{-x} int_{[0,inf)} E_{-u-z}(g^{p-1}) W(du) dz by nested quadrature; the general-p route.
    pub fn v0_integral(&self, x: f64) -> Result<f64> {
        let mut err = None;
        let q = integrate(
            |z| match self.w_measure_integral(-z) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            -x,
            1e-9,
            1e-8,
        );
        if let Some(e) = err {
            return Err(e);
        }
        if !q.converged {
            return Err(Error::NonConvergence("outer integral of V(0,x)".into()));
        }
        Ok(q.value)
    }

    /// int_{[0,inf)} E_{y-u}(g^{p-1}) W(du) with the atom W(0) at u = 0, y <= 0.
    fn w_measure_integral(&self, y: f64) -> Result<f64> {
        let mut err = None;
        let w = self.fam.w_terms();
        let decay = w.rates[1..].iter().fold(f64::INFINITY, |a, &b| a.min(-b));
        let upper = 40.0 / decay;
        let q = integrate(
            |u| {
                let d = self.fam.scale_w_prime(u.max(1e-300)).unwrap_or(0.0);
                match self.moment_pm1(y - u) {
                    Ok(m) => m * d,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                }
            },
            0.0,
            upper,
            1e-10,
            1e-9,
        );
        if let Some(e) = err {
            return Err(e);
        }
        let atom = self.fam.w_at_zero() * if self.fam.w_at_zero() > 0.0 { self.moment_pm1(y)? } else { 0.0 };
        Ok(q.value + atom)
    }

    /// kappa = int_{-inf}^0 V(0,y) rho e^{rho y} dy, so that int V(0, y) Pi(dy) = lambda kappa.
    pub fn jump_average_v0(&self, v00: f64) -> Result<f64> {
        let Some((_, rho)) = self.model.jumps() else {
            return Ok(0.0);
        };
        if let Some((c1, c2)) = self.quadratic_coefficients() {
            return Ok(v00 - c1 / rho - 2.0 * c2 / (rho * rho));
        }
        // y = -t / rho
        let mut err = None;
        let q = integrate(
            |t| match self.v0_on_negatives(v00, -t / rho) {
                Ok(v) => v * (-t).exp(),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            50.0,
            1e-9,
            1e-8,
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok(q.value)
    }

    fn has_finite_cutoff(&self) -> bool {
        self.model.variation() == Variation::Finite && self.model.jumps().is_some()
    }

    /// Residual of the u_b equation, G(u,0) + int V(0,y) Pi(dy).
    pub fn u_b_residual(&self, v00: f64, u: f64) -> Result<UbEquation> {
        if !self.has_finite_cutoff() {
            return Ok(UbEquation::Infinite);
        }
        if !(u > 0.0) {
            return Err(Error::Domain(format!("u must be positive, got {u}")));
        }
        let (lambda, _) = self.model.jumps().expect("finite cutoff needs jumps");
        Ok(UbEquation::Residual(self.gain(u, 0.0)? + lambda * self.jump_average_v0(v00)?))
    }

    /// Root of the u_b equation; linear in u^{p-1}, so solved directly.
    pub fn u_b(&self, v00: f64) -> Result<Extended> {
        if !self.has_finite_cutoff() {
            return Ok(Extended::Infinite);
        }
        let (lambda, _) = self.model.jumps().expect("finite cutoff needs jumps");
        let slope = self.model.mean() * self.fam.w_at_zero();
        let target = (self.eg_pm1 - lambda * self.jump_average_v0(v00)?) / slope;
        if !(target > 0.0) {
            return Err(Error::Invariant(format!("u_b equation has no positive root at V(0,0) = {v00}")));
        }
        Ok(Extended::Finite(target.powf(1.0 / (self.p() - 1.0))))
    }
}

impl From<Rejection> for Error {
    fn from(r: Rejection) -> Self {
        Error::Rejected(r)
    }
}
