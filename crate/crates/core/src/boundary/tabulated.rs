//! Jump families: Monte Carlo kernels F1/F2 tabulated on an (s, x) product grid, and the sweep.

use rayon::prelude::*;

use super::{Knots, SolverConfig};
use crate::error::{Error, Result};
use crate::sim::rng::{derive_key, purpose};
use crate::sim::{BridgeCtx, Walker};
use crate::stopping::GainSpec;

/// Exponential-sum form of the functions that appear inside F1 and F2:
/// psi'W(z) = 1 + sum a_i e^{beta_i z}, E_z(g) = sum (c_i + d_i z) e^{beta_i z}.
#[derive(Debug, Clone)]
pub(crate) struct Shapes {
    pub beta: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub rho: f64,
}

impl Shapes {
    pub(crate) fn new(spec: &GainSpec) -> Result<Self> {
        let (_, rho) = spec
            .model()
            .jumps()
            .ok_or_else(|| Error::Unsupported("tabulated kernels need a jump family".into()))?;
        let m = spec.model().mean();
        let w = spec.family().w_terms();
        let beta: Vec<f64> = w.rates[1..].to_vec();
        let wt: Vec<f64> = w.weights[1..].to_vec();
        let n = beta.len();
        let a = wt.iter().map(|w| m * w).collect();
        let c = (0..n)
            .map(|i| {
                let cross: f64 = (0..n).filter(|&j| j != i).map(|j| 2.0 * wt[i] * wt[j] / (beta[i] - beta[j])).sum();
                2.0 * wt[i] / beta[i] + m * cross
            })
            .collect();
        let d = wt.iter().map(|w| m * w * w).collect();
        Ok(Self { beta, a, c, d, rho })
    }

    #[cfg(test)]
    pub(crate) fn a_of(&self, z: f64) -> f64 {
        1.0 + self.beta.iter().zip(&self.a).map(|(b, a)| a * (b * z).exp()).sum::<f64>()
    }

    #[cfg(test)]
    pub(crate) fn b_of(&self, z: f64) -> f64 {
        (0..self.beta.len()).map(|i| (self.c[i] + self.d[i] * z) * (self.beta[i] * z).exp()).sum()
    }
}

/// One s-checkpoint: three bin tables and the per-start extra term.
type Checkpoint = (Vec<f32>, Vec<f32>, Vec<f32>, Vec<f64>);

/// Prefix sums over z-bins of psi'W(z), E_z(g) and e^{-rho z} restricted to surviving paths,
/// for each checkpoint s_j and each start x_m, plus the total of e^{-rho z} over survivors.
pub(crate) struct Tables {
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub delta: f64,
    nz: usize,
    ca: Vec<f32>,
    cb: Vec<f32>,
    ce: Vec<f32>,
    etot: Vec<f64>,
    pub n_paths: usize,
}

pub(crate) struct Lookup {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub e_total: f64,
}

impl Tables {
    /// x-grid on the lattice k * delta: every node up to `fine`, then every second one.
    fn lattice(nz: usize, fine: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..=fine.min(nz)).collect();
        let mut k = fine + 2;
        while k < nz {
            v.push(k);
            k += 2;
        }
        if *v.last().unwrap() != nz {
            v.push(nz);
        }
        v
    }

    pub(crate) fn build(spec: &GainSpec, shapes: &Shapes, cfg: &SolverConfig, s_max: f64, x_max: f64) -> Result<Self> {
        let model = *spec.model();
        let n_paths = cfg.mc_kernel_paths;
        if n_paths < 100 {
            return Err(Error::InvalidParameter("kernel tabulation needs at least 100 paths".into()));
        }
        let ns = cfg.n_s;
        let s: Vec<f64> = (0..=ns).map(|j| s_max * (j as f64 / ns as f64).powi(2)).collect();
        let mut w = vec![0.0; ns + 1];
        for j in 0..ns {
            let h = s[j + 1] - s[j];
            w[j] += 0.5 * h;
            w[j + 1] += 0.5 * h;
        }
        let nz = cfg.n_z;
        let delta = x_max / nz as f64;
        let lat = Self::lattice(nz, 12);
        let x: Vec<f64> = lat.iter().map(|&k| k as f64 * delta).collect();
        let nm = x.len();

        // (X_s, running infimum) at each checkpoint, path-major
        let master = derive_key(cfg.seed, 0, purpose::KERNEL);
        let stops = &s[1..];
        let raw: Vec<Vec<(f64, f64)>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|p| {
                let ctx = BridgeCtx {
                    key: derive_key(master, p, purpose::BRIDGE),
                    sigma: model.sigma(),
                    drift: model.drift(),
                };
                let mut walker = Walker::new(&model, 0.0, s_max, s_max, master, p).with_stops(stops);
                let mut out = Vec::with_capacity(ns);
                let mut low: f64 = 0.0;
                let mut j = 0;
                while let Some(seg) = walker.next_segment() {
                    low = low.min(seg.bridge_min(&ctx)).min(seg.x1);
                    while j < ns && seg.t1 >= stops[j] * (1.0 - 1e-12) {
                        out.push((seg.x1, low));
                        j += 1;
                    }
                }
                while out.len() < ns {
                    out.push((walker.value(), low));
                }
                out
            })
            .collect();

        let nb = nz + 1;
        let nr = shapes.beta.len();
        let inv_n = 1.0 / n_paths as f64;
        let rho = shapes.rho;
        // per start x_m: e^{beta_i x_m} and e^{-rho x_m}
        let ex: Vec<Vec<f64>> = x.iter().map(|&xm| shapes.beta.iter().map(|b| (b * xm).exp()).collect()).collect();
        let er: Vec<f64> = x.iter().map(|&xm| (-rho * xm).exp()).collect();

        let per_j: Vec<Checkpoint> = (0..=ns)
            .into_par_iter()
            .map(|j| {
                let mut ca = vec![0f32; nm * nb];
                let mut cb = vec![0f32; nm * nb];
                let mut ce = vec![0f32; nm * nb];
                let mut et = vec![0.0; nm];
                // bucket paths by the first start that keeps them above zero
                let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); nm];
                if j == 0 {
                    buckets[0] = vec![0.0; n_paths];
                } else {
                    for path in &raw {
                        let (xs, low) = path[j - 1];
                        let need = -low;
                        let m = x.partition_point(|&xm| xm < need);
                        if m < nm {
                            buckets[m].push(xs);
                        }
                    }
                }
                // X-bins indexed by floor(X / delta) + nz, covering [-x_max, x_max)
                let nxb = 2 * nz;
                let stride = 2 + 2 * nr;
                let mut feat = vec![0.0; nxb * stride];
                let mut q_all = 0.0;
                for m in 0..nm {
                    for &xs in &buckets[m] {
                        q_all += (-rho * xs).exp();
                        let kx = (xs / delta).floor() as i64 + nz as i64;
                        if kx < 0 || kx >= nxb as i64 {
                            continue;
                        }
                        let f = &mut feat[kx as usize * stride..(kx as usize + 1) * stride];
                        f[0] += 1.0;
                        f[1] += (-rho * xs).exp();
                        for r in 0..nr {
                            let e = (shapes.beta[r] * xs).exp();
                            f[2 + r] += e;
                            f[2 + nr + r] += xs * e;
                        }
                    }
                    et[m] = er[m] * q_all * inv_n;
                    let n_m = lat_index(x[m], delta);
                    let base = m * nb;
                    let (mut pa, mut pb, mut pe) = (0.0f64, 0.0f64, 0.0f64);
                    for k in 0..nz {
                        ca[base + k] = (pa * inv_n) as f32;
                        cb[base + k] = (pb * inv_n) as f32;
                        ce[base + k] = (pe * inv_n) as f32;
                        let kx = k + nz - n_m;
                        let f = &feat[kx * stride..(kx + 1) * stride];
                        if f[0] == 0.0 {
                            continue;
                        }
                        let mut sa = f[0];
                        let mut sb = 0.0;
                        for r in 0..nr {
                            let e = ex[m][r];
                            sa += shapes.a[r] * e * f[2 + r];
                            sb += shapes.c[r] * e * f[2 + r] + shapes.d[r] * e * (x[m] * f[2 + r] + f[2 + nr + r]);
                        }
                        pa += sa;
                        pb += sb;
                        pe += er[m] * f[1];
                    }
                    ca[base + nz] = (pa * inv_n) as f32;
                    cb[base + nz] = (pb * inv_n) as f32;
                    ce[base + nz] = (pe * inv_n) as f32;
                }
                (ca, cb, ce, et)
            })
            .collect();

        let mut ca = Vec::with_capacity((ns + 1) * nm * nb);
        let mut cb = Vec::with_capacity((ns + 1) * nm * nb);
        let mut ce = Vec::with_capacity((ns + 1) * nm * nb);
        let mut etot = Vec::with_capacity((ns + 1) * nm);
        for (a, b, e, t) in per_j {
            ca.extend(a);
            cb.extend(b);
            ce.extend(e);
            etot.extend(t);
        }
        Ok(Self { s, w, x, delta, nz, ca, cb, ce, etot, n_paths })
    }

    pub(crate) fn n_x(&self) -> usize {
        self.x.len()
    }

    /// Survivor sums below level b for start x_m at checkpoint j.
    #[inline]
    pub(crate) fn lookup(&self, j: usize, m: usize, b: f64) -> Lookup {
        let nb = self.nz + 1;
        let base = (j * self.x.len() + m) * nb;
        let e_total = self.etot[j * self.x.len() + m];
        if b <= 0.0 {
            return Lookup { a: 0.0, b: 0.0, e: 0.0, e_total };
        }
        let t = b / self.delta;
        let (k, frac) = if t >= self.nz as f64 { (self.nz, 0.0) } else { (t as usize, t.fract()) };
        let at = |arr: &[f32]| {
            let lo = arr[base + k] as f64;
            if frac == 0.0 {
                lo
            } else {
                lo + frac * (arr[base + k + 1] as f64 - lo)
            }
        };
        Lookup { a: at(&self.ca), b: at(&self.cb), e: at(&self.ce), e_total }
    }
}

fn lat_index(x: f64, delta: f64) -> usize {
    (x / delta).round() as usize
}

/// Everything a sweep needs that does not change with V(0,0).
pub(crate) struct TabSolver<'a> {
    pub spec: &'a GainSpec,
    pub cfg: &'a SolverConfig,
    pub t: &'a Tables,
    pub lambda: f64,
    pub rho: f64,
    /// (sigma^2/2) W'(x_m), the creeping probability
    pub creep: Vec<f64>,
    pub n_grid: usize,
    /// grid nodes at or beyond u_b carry b = 0 (finite-variation cutoff)
    pub u_b: Option<f64>,
}

/// b and the jump-average curve at the knots, plus the value rows at grid nodes.
#[derive(Debug, Clone)]
pub(crate) struct TabState {
    pub knots: Knots,
    pub sv: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl TabState {
    fn sv_at(&self, u: f64) -> f64 {
        self.knots.interp(&self.sv, u)
    }
}

impl TabSolver<'_> {
    /// int_0^b V(y) lambda rho e^{rho y} dy for a row on the x-grid that vanishes at b.
    pub(crate) fn jump_average(&self, row: &[f64], b: f64) -> f64 {
        let x = &self.t.x;
        let f = |m: usize| row[m] * self.lambda * self.rho * (self.rho * x[m]).exp();
        let mut acc = 0.0;
        for m in 0..x.len() - 1 {
            if x[m] >= b {
                break;
            }
            let hi = x[m + 1].min(b);
            let f1 = if x[m + 1] <= b { f(m + 1) } else { 0.0 };
            acc += 0.5 * (f(m) + f1) * (hi - x[m]);
        }
        acc
    }

    /// Smallest x >= h with G(u,x) + e^{-rho x}(lambda kappa + sv) >= 0. Stopping at x is
    /// only optimal where this jump-corrected gain is nonnegative, so b(u) cannot sit below it.
    pub(crate) fn lambda_root(&self, u: f64, h: f64, kappa_l: f64, sv: f64) -> Result<f64> {
        let f = |x: f64| -> Result<f64> { Ok(self.spec.gain(u, x)? + (-self.rho * x).exp() * (kappa_l + sv)) };
        if f(h)? >= 0.0 {
            return Ok(h);
        }
        let x_top = self.t.x[self.t.n_x() - 1];
        if f(x_top)? < 0.0 {
            return Ok(x_top);
        }
        let (mut a, mut b) = (h, x_top);
        while b - a > 1e-10 * (1.0 + b) {
            let m = 0.5 * (a + b);
            if f(m)? >= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        Ok(b)
    }

    #[inline]
    fn term(&self, j: usize, m: usize, u: f64, kappa_l: f64, b: f64, sv: f64) -> f64 {
        let l = self.t.lookup(j, m, b);
        (u + self.t.s[j]) * l.a - l.b + kappa_l * l.e - sv * (l.e_total - l.e)
    }

    /// Representation of V(u, x_m) with b(u+s) and sv(u+s) supplied per checkpoint.
    fn represent(&self, v00: f64, kappa_l: f64, u: f64, m: usize, bj: &[f64], vj: &[f64]) -> f64 {
        let mut acc = v00 * self.creep[m];
        for j in 0..self.t.s.len() {
            acc += self.t.w[j] * self.term(j, m, u, kappa_l, bj[j], vj[j]);
        }
        acc
    }

    /// Row at an arbitrary u from the current state.
    pub(crate) fn row_at(&self, st: &TabState, v00: f64, kappa_l: f64, u: f64) -> Vec<f64> {
        let bj: Vec<f64> = self.t.s.iter().map(|s| st.knots.at(u + s)).collect();
        let vj: Vec<f64> = self.t.s.iter().map(|s| st.sv_at(u + s)).collect();
        let b_here = st.knots.at(u);
        (0..self.t.n_x())
            .map(|m| {
                if self.t.x[m] >= b_here {
                    0.0
                } else {
                    self.represent(v00, kappa_l, u, m, &bj, &vj).min(0.0)
                }
            })
            .collect()
    }

    /// Backward sweep over the grid for fixed V(0,0). Tail knots (beyond the grid) are
    /// refreshed from the last grid row.
    pub(crate) fn sweep(&self, st: &mut TabState, h: &[f64], v00: f64) -> Result<usize> {
        let kappa_l = self.lambda * self.spec.jump_average_v0(v00)?;
        let ns = self.t.s.len();
        let nm = self.t.n_x();
        let n_knots = st.knots.u.len();
        let mut inner_total = 0;
        for i in (0..self.n_grid).rev() {
            let u = st.knots.u[i];
            if self.u_b.is_some_and(|ub| u >= ub) {
                st.knots.b[i] = 0.0;
                st.sv[i] = 0.0;
                st.rows[i] = vec![0.0; nm];
                continue;
            }
            let u_next = st.knots.u[i + 1];
            let gap = u_next - u;
            let lo_fixed = h[i].max(st.knots.b[i + 1]);
            let mut v_guess = st.sv[i + 1];
            let mut b_prev = f64::NAN;
            for it in 0..self.cfg.max_inner.max(1) {
                inner_total += 1;
                let lo = lo_fixed.max(self.lambda_root(u, h[i], kappa_l, v_guess)?);
                // off-panel checkpoints do not depend on the trial boundary
                let mut bj = vec![0.0; ns];
                let mut vj = vec![0.0; ns];
                let mut first = 0;
                for j in 0..ns {
                    let s = self.t.s[j];
                    if s < gap {
                        first = j + 1;
                        vj[j] = v_guess + (st.sv[i + 1] - v_guess) * s / gap;
                    } else {
                        bj[j] = st.knots.at(u + s);
                        vj[j] = st.sv_at(u + s);
                    }
                }
                // residual V(u, x_m) with b(u) = x_m
                let resid: Vec<f64> = (0..nm)
                    .map(|m| {
                        let xm = self.t.x[m];
                        let mut b = bj.clone();
                        for (j, bjv) in b.iter_mut().enumerate().take(first) {
                            *bjv = xm + (st.knots.b[i + 1] - xm) * self.t.s[j] / gap;
                        }
                        self.represent(v00, kappa_l, u, m, &b, &vj)
                    })
                    .collect();
                let mut b_new = None;
                for m in 0..nm - 1 {
                    if self.t.x[m + 1] <= lo {
                        continue;
                    }
                    if resid[m + 1] >= 0.0 {
                        let (x0, x1, r0, r1) = (self.t.x[m], self.t.x[m + 1], resid[m], resid[m + 1]);
                        let root = if r0 < 0.0 { x0 + (x1 - x0) * (-r0) / (r1 - r0) } else { x0 };
                        b_new = Some(root.max(lo));
                        break;
                    }
                }
                let b_new = match b_new {
                    Some(b) => b,
                    None => {
                        return Err(Error::NonConvergence(format!(
                            "no boundary crossing below x = {} at u = {u}",
                            self.t.x[nm - 1]
                        )))
                    }
                };
                let b_i = if it == 0 || b_prev.is_nan() {
                    b_new
                } else {
                    b_prev + self.cfg.damping * (b_new - b_prev)
                };
                st.knots.b[i] = b_i;
                for (j, bjv) in bj.iter_mut().enumerate().take(first) {
                    *bjv = b_i + (st.knots.b[i + 1] - b_i) * self.t.s[j] / gap;
                }
                let row: Vec<f64> = (0..nm)
                    .map(|m| {
                        if self.t.x[m] >= b_i {
                            0.0
                        } else {
                            self.represent(v00, kappa_l, u, m, &bj, &vj).min(0.0)
                        }
                    })
                    .collect();
                let v_new = self.jump_average(&row, b_i);
                st.rows[i] = row;
                st.sv[i] = v_new;
                if i + 1 == self.n_grid {
                    // tail: b = h beyond the grid, jump averages taken from the last row
                    for k in self.n_grid..n_knots {
                        let bk = st.knots.b[k];
                        st.sv[k] = self.jump_average(&st.rows[i], bk);
                    }
                }
                let done = (b_i - b_prev).abs() < self.cfg.tol_fixed_point * (1.0 + b_i)
                    && (v_new - v_guess).abs() < self.cfg.tol_fixed_point * (1.0 + v_new.abs());
                b_prev = b_i;
                v_guess = v_new;
                if done {
                    break;
                }
            }
        }
        Ok(inner_total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyModel;

    #[test]
    fn shapes_reproduce_scale_quantities() {
        for model in [
            LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap(),
            LevyModel::cramer_lundberg(1.5, 1.0, 1.0).unwrap(),
        ] {
            let spec = GainSpec::new(model, 2.0).unwrap();
            let sh = Shapes::new(&spec).unwrap();
            let fam = spec.family();
            for z in [0.0, 0.3, 1.0, 4.0, 12.0] {
                let a = model.mean() * fam.scale_w(z);
                assert!((sh.a_of(z) - a).abs() < 1e-12, "{z}");
                assert!((sh.b_of(z) - fam.mean_g(z)).abs() < 1e-11, "{z}: {} vs {}", sh.b_of(z), fam.mean_g(z));
            }
        }
    }
}
