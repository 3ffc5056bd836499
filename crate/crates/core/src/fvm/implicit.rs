//! Implicit Euler with entropy regularization.
//!
//! The equation is rewritten as `∂t r = ∇·[n(r) ∇ũ + g(r)]` with
//!
//! ```text
//! ũ = log r + ε1 r + ε3 b − τ ε1 log(1 − ε1 r − ε2 b)
//! n = r(1 − ε2 b) + ε1 ε2 r² b / (1 + ε1 r)
//! g = ε2 ε3 r b ∇b / (1 + ε1 r)
//! ```
//!
//! and each step solves
//! `(r_k − r_{k−1})/τ = ∇·[n ∇ũ_k + g] + τ(Δũ_k − ũ_k)` for `r_k` by damped
//! Newton with a tridiagonal Jacobian.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::ModelParams;

const MAX_ITERATIONS: usize = 50;
const MAX_HALVINGS: usize = 30;
/// Target for `τ ‖R‖∞`, the residual in units of the density.
const TOLERANCE: f64 = 1e-12;
/// Accepted if Newton stagnates below this.
const ACCEPTABLE: f64 = 1e-10;

fn slack(r: f64, b: f64, p: &ModelParams) -> f64 {
    1.0 - p.eps1 * r - p.eps2 * b
}

fn interior(r: f64, b: f64, p: &ModelParams) -> bool {
    r > 0.0 && slack(r, b, p) > 0.0
}

fn domain(r: f64, b: f64) -> Error {
    Error::Domain {
        quantity: "regularized entropy variable",
        r,
        b,
    }
}

/// `ũ(r; b)` for step size `tau`.
pub fn regularized_entropy_variable(r: f64, b: f64, p: &ModelParams, tau: f64) -> Result<f64> {
    if !interior(r, b, p) {
        return Err(domain(r, b));
    }
    Ok(r.ln() + p.eps1 * r + p.eps3 * b - tau * p.eps1 * slack(r, b, p).ln())
}

fn du_dr(r: f64, b: f64, p: &ModelParams, tau: f64) -> f64 {
    1.0 / r + p.eps1 + tau * p.eps1 * p.eps1 / slack(r, b, p)
}

fn entropy_density(r: f64, b: f64, p: &ModelParams, tau: f64) -> Result<f64> {
    if !interior(r, b, p) {
        return Err(domain(r, b));
    }
    let s = slack(r, b, p);
    Ok(r * (r.ln() - 1.0) + 0.5 * p.eps1 * r * r + p.eps3 * r * b + tau * s * (s.ln() - 1.0))
}

/// The regularized entropy `∫ r(log r − 1) + ε1 r²/2 + ε3 r b + τ S(log S − 1)`
/// with `S = 1 − ε1 r − ε2 b`.
pub fn regularized_entropy(r: &Field, b: &Field, p: &ModelParams, tau: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (&ri, &bi) in r.values().iter().zip(b.values()) {
        sum += entropy_density(ri, bi, p, tau)?;
    }
    Ok(sum * r.grid().h())
}

fn mobility(r: f64, b: f64, p: &ModelParams) -> f64 {
    r * (1.0 - p.eps2 * b) + p.eps1 * p.eps2 * r * r * b / (1.0 + p.eps1 * r)
}

fn mobility_dr(r: f64, b: f64, p: &ModelParams) -> f64 {
    let q = 1.0 + p.eps1 * r;
    (1.0 - p.eps2 * b) + p.eps1 * p.eps2 * b * r * (2.0 + p.eps1 * r) / (q * q)
}

/// Interface quantities of the discrete operator.
struct Faces<'a> {
    p: &'a ModelParams,
    h: f64,
    tau: f64,
    b: &'a [f64],
}

impl Faces<'_> {
    /// `(n̄, ḡ)` at the interface between cells `i` and `i + 1`.
    fn coefficients(&self, r: &[f64], i: usize) -> (f64, f64) {
        let p = self.p;
        let (bl, br) = (self.b[i], self.b[i + 1]);
        let n_bar = 0.5 * (mobility(r[i], bl, p) + mobility(r[i + 1], br, p));
        let r_bar = 0.5 * (r[i] + r[i + 1]);
        let b_bar = 0.5 * (bl + br);
        let g_bar = p.eps2 * p.eps3 * r_bar * b_bar * ((br - bl) / self.h) / (1.0 + p.eps1 * r_bar);
        (n_bar, g_bar)
    }

    fn u(&self, r: &[f64]) -> Result<Vec<f64>> {
        r.iter()
            .zip(self.b)
            .map(|(&ri, &bi)| regularized_entropy_variable(ri, bi, self.p, self.tau))
            .collect()
    }

    /// Residual of the step equation, scaled by `τ`.
    fn residual(&self, r: &[f64], prev: &[f64], u: &[f64], out: &mut [f64]) {
        let n = r.len();
        let (h, tau) = (self.h, self.tau);
        let mut flux_left = 0.0;
        for i in 0..n {
            let flux_right = if i + 1 < n {
                let (n_bar, g_bar) = self.coefficients(r, i);
                n_bar * (u[i + 1] - u[i]) / h + g_bar
            } else {
                0.0
            };
            let mut lap = 0.0;
            if i > 0 {
                lap += u[i - 1] - u[i];
            }
            if i + 1 < n {
                lap += u[i + 1] - u[i];
            }
            lap /= h * h;
            out[i] = (r[i] - prev[i]) - tau * (flux_right - flux_left) / h - tau * tau * (lap - u[i]);
            flux_left = flux_right;
        }
    }

    /// Tridiagonal Jacobian of [`Self::residual`].
    fn jacobian(&self, r: &[f64], u: &[f64], lower: &mut [f64], diag: &mut [f64], upper: &mut [f64]) {
        let n = r.len();
        let (h, tau) = (self.h, self.tau);
        let p = self.p;
        let du: Vec<f64> = r.iter().zip(self.b).map(|(&ri, &bi)| du_dr(ri, bi, p, tau)).collect();
        for i in 0..n {
            diag[i] = 1.0 + tau * tau * du[i];
            lower[i] = 0.0;
            upper[i] = 0.0;
        }
        for i in 0..n - 1 {
            let (l, rr) = (i, i + 1);
            let (n_bar, _) = self.coefficients(r, i);
            let jump = (u[rr] - u[l]) / h;
            let r_bar = 0.5 * (r[l] + r[rr]);
            let b_bar = 0.5 * (self.b[l] + self.b[rr]);
            let q = 1.0 + p.eps1 * r_bar;
            let dg = 0.5 * p.eps2 * p.eps3 * b_bar * ((self.b[rr] - self.b[l]) / h) / (q * q);
            // ∂G/∂r_l and ∂G/∂r_r for G = n̄ Δũ/h + ḡ
            let dg_l = 0.5 * mobility_dr(r[l], self.b[l], p) * jump - n_bar * du[l] / h + dg;
            let dg_r = 0.5 * mobility_dr(r[rr], self.b[rr], p) * jump + n_bar * du[rr] / h + dg;
            let c = tau / h;
            // G enters row l with + and row r with −
            diag[l] -= c * dg_l;
            upper[l] -= c * dg_r;
            diag[rr] += c * dg_r;
            lower[rr] += c * dg_l;
            // −τ² Δũ
            let k = tau * tau / (h * h);
            diag[l] += k * du[l];
            upper[l] -= k * du[rr];
            diag[rr] += k * du[rr];
            lower[rr] -= k * du[l];
        }
    }
}

/// Solves a tridiagonal system in place; `rhs` is overwritten by the
/// solution.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::invalid("jacobian", "singular"));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::invalid("jacobian", "singular"));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitStep {
    pub field: Field,
    pub iterations: usize,
    /// Final `τ ‖R‖∞`.
    pub residual: f64,
}

/// One regularized implicit Euler step of size `tau` from `prev`.
pub fn step_implicit_regularized(prev: &Field, b: &Field, params: &ModelParams, tau: f64) -> Result<ImplicitStep> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", "must be positive"));
    }
    if prev.grid() != b.grid() || prev.len() < 2 {
        return Err(Error::invalid("fields", "need matching grids with at least 2 cells"));
    }
    let (pv, bv) = (prev.values(), b.values());
    if let Some((&r, &bb)) = pv.iter().zip(bv).find(|(&r, &bb)| !interior(r, bb, params)) {
        return Err(domain(r, bb));
    }
    let n = pv.len();
    let faces = Faces {
        p: params,
        h: prev.grid().h(),
        tau,
        b: bv,
    };

    let mut r = pv.to_vec();
    let mut u = faces.u(&r)?;
    let mut res = vec![0.0; n];
    faces.residual(&r, pv, &u, &mut res);
    let mut norm = sup(&res);
    let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];

    let mut iterations = 0;
    while norm > TOLERANCE {
        if iterations == MAX_ITERATIONS {
            if norm <= ACCEPTABLE {
                break;
            }
            return Err(Error::NoConvergence {
                solver: "regularized implicit Newton",
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        faces.jacobian(&r, &u, &mut lower, &mut diag, &mut upper);
        let mut delta: Vec<f64> = res.iter().map(|v| -v).collect();
        thomas(&lower, &diag, &upper, &mut delta)?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..n {
                trial[i] = r[i] + lambda * delta[i];
            }
            if trial.iter().zip(bv).all(|(&t, &bb)| interior(t, bb, params)) {
                let tu = faces.u(&trial)?;
                faces.residual(&trial, pv, &tu, &mut trial_res);
                let tn = sup(&trial_res);
                if tn < norm {
                    r.copy_from_slice(&trial);
                    u = tu;
                    core::mem::swap(&mut res, &mut trial_res);
                    norm = tn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if norm <= ACCEPTABLE {
                break;
            }
            return Err(Error::NoConvergence {
                solver: "regularized implicit Newton",
                iterations,
                residual: norm,
            });
        }
    }
    Ok(ImplicitStep {
        field: Field::from_values(*prev.grid(), r)?,
        iterations,
        residual: norm,
    })
}

/// Discrete dissipation terms of one regularized step, evaluated at the new
/// state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedDissipation {
    /// `Σ h [n̄ (Δũ/h)² + ḡ Δũ/h]`.
    pub dissipation: f64,
    /// `Σ h (Δũ/h)² + Σ h ũ²`, multiplied by `τ²` in the entropy balance.
    pub regularization: f64,
    /// `Σ h [ε1/4 (Δr/h)² + τ²/2 · ε1³ r̄²/S̄² (ε1 Δr/h + ε2 Δb/h)²]`.
    pub lower_bound: f64,
}

pub fn regularized_dissipation(r: &Field, b: &Field, p: &ModelParams, tau: f64) -> Result<RegularizedDissipation> {
    let faces = Faces {
        p,
        h: r.grid().h(),
        tau,
        b: b.values(),
    };
    let rv = r.values();
    let u = faces.u(rv)?;
    let h = faces.h;
    let mut out = RegularizedDissipation {
        dissipation: 0.0,
        regularization: 0.0,
        lower_bound: 0.0,
    };
    for i in 0..rv.len() {
        out.regularization += h * u[i] * u[i];
        if i + 1 == rv.len() {
            continue;
        }
        let (n_bar, g_bar) = faces.coefficients(rv, i);
        let du = (u[i + 1] - u[i]) / h;
        out.dissipation += h * (n_bar * du * du + g_bar * du);
        out.regularization += h * du * du;

        let bv = b.values();
        let dr = (rv[i + 1] - rv[i]) / h;
        let db = (bv[i + 1] - bv[i]) / h;
        let r_bar = 0.5 * (rv[i] + rv[i + 1]);
        let s_bar = slack(r_bar, 0.5 * (bv[i] + bv[i + 1]), p);
        let w = p.eps1 * dr + p.eps2 * db;
        out.lower_bound +=
            h * (0.25 * p.eps1 * dr * dr + 0.5 * tau * tau * p.eps1.powi(3) * r_bar * r_bar / (s_bar * s_bar) * w * w);
    }
    Ok(out)
}
