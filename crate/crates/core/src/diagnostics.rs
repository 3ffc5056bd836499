//! Entropy functionals, relative entropy, dissipation and decay-rate fits.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{EntropyPair, ModelParams};

/// Densities below this value are evaluated at the floor.
pub const ENTROPY_FLOOR: f64 = 1e-12;

fn floored(r: f64, b: f64) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::Domain {
            quantity: "density",
            r,
            b,
        });
    }
    Ok(r.max(ENTROPY_FLOOR))
}

fn same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::invalid("fields", "fields live on different grids"));
    }
    Ok(())
}

/// Midpoint-rule quadrature of the entropy density.
pub fn entropy_of(pair: EntropyPair, r: &Field, b: &Field, params: &ModelParams) -> Result<f64> {
    same_grid(r, b)?;
    let mut sum = 0.0;
    for (&ri, &bi) in r.values().iter().zip(b.values()) {
        sum += pair.entropy_density(floored(ri, bi)?, bi, params)?;
    }
    Ok(sum * r.grid().h())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEntropy {
    /// `E(r) − E(r*) − γ`.
    pub value: f64,
    /// `γ = ∫ u(r*) (r − r*)`.
    pub gamma: f64,
}

/// Bregman distance of `r` from the reference `r_star`.
pub fn relative_entropy(
    pair: EntropyPair,
    r: &Field,
    r_star: &Field,
    b: &Field,
    params: &ModelParams,
) -> Result<RelativeEntropy> {
    same_grid(r, b)?;
    same_grid(r_star, b)?;
    let mut value = 0.0;
    let mut gamma = 0.0;
    for ((&ri, &si), &bi) in r.values().iter().zip(r_star.values()).zip(b.values()) {
        let (ri, si) = (floored(ri, bi)?, floored(si, bi)?);
        let us = pair.entropy_variable(si, bi, params)?;
        let g = us * (ri - si);
        value += pair.entropy_density(ri, bi, params)? - pair.entropy_density(si, bi, params)? - g;
        gamma += g;
    }
    let h = r.grid().h();
    Ok(RelativeEntropy {
        value: value * h,
        gamma: gamma * h,
    })
}

/// `I(r) = ∫ m |∇u|²` with two-point interface gradients and the mobility at
/// interface averages.
pub fn dissipation(pair: EntropyPair, r: &Field, b: &Field, params: &ModelParams) -> Result<f64> {
    same_grid(r, b)?;
    let h = r.grid().h();
    let (rv, bv) = (r.values(), b.values());
    let u = rv
        .iter()
        .zip(bv)
        .map(|(&ri, &bi)| pair.entropy_variable(floored(ri, bi)?, bi, params))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = 0.0;
    for i in 0..rv.len().saturating_sub(1) {
        let m = pair.mobility(0.5 * (rv[i] + rv[i + 1]), 0.5 * (bv[i] + bv[i + 1]), params);
        let g = (u[i + 1] - u[i]) / h;
        sum += m * g * g;
    }
    Ok(sum * h)
}

/// Weighted-`r` Fisher term `∫ r |∇u|²`, the quantity bounded by the
/// dissipation through `c1`.
pub fn density_weighted_dissipation(pair: EntropyPair, r: &Field, b: &Field, params: &ModelParams) -> Result<f64> {
    same_grid(r, b)?;
    let h = r.grid().h();
    let (rv, bv) = (r.values(), b.values());
    let mut sum = 0.0;
    for i in 0..rv.len().saturating_sub(1) {
        let ul = pair.entropy_variable(floored(rv[i], bv[i])?, bv[i], params)?;
        let ur = pair.entropy_variable(floored(rv[i + 1], bv[i + 1])?, bv[i + 1], params)?;
        let g = (ur - ul) / h;
        sum += 0.5 * (rv[i] + rv[i + 1]) * g * g;
    }
    Ok(sum * h)
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("least_squares", "length mismatch"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::EmptyWindow);
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::invalid("least_squares", "abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("log_log_slope", "values must be positive"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    least_squares(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Lower and upper fit-window bounds relative to the initial value.
pub const FIT_WINDOW: (f64, f64) = (1e-8, 0.5);

/// Exponential rate of a decaying positive series, from the least-squares
/// slope of `log E` over the samples with `E ∈ [1e-8 E(0), 0.5 E(0)]`.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::invalid("series", "times and values differ in length"));
    }
    let e0 = *values.first().ok_or(Error::EmptyWindow)?;
    if !(e0 > 0.0) {
        return Err(Error::invalid("series", "initial value must be positive"));
    }
    let (lo, hi) = (FIT_WINDOW.0 * e0, FIT_WINDOW.1 * e0);
    let (ts, ls): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|&(_, &v)| v >= lo && v <= hi)
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    if ts.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    let fit = least_squares(&ts, &ls)?;
    Ok(DecayFit {
        rate: -fit.slope,
        r_squared: fit.r_squared,
        points: ts.len(),
    })
}

/// Entropy quantities along a sequence of states.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySeries {
    pub pair: EntropyPair,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub relative: Vec<f64>,
    pub gamma: Vec<f64>,
    pub dissipation: Vec<f64>,
}

impl EntropySeries {
    pub fn from_states(
        pair: EntropyPair,
        times: &[f64],
        states: &[Field],
        r_star: &Field,
        b: &Field,
        params: &ModelParams,
    ) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::invalid("series", "times and states differ in length"));
        }
        let mut s = EntropySeries {
            pair,
            times: times.to_vec(),
            values: Vec::with_capacity(times.len()),
            relative: Vec::with_capacity(times.len()),
            gamma: Vec::with_capacity(times.len()),
            dissipation: Vec::with_capacity(times.len()),
        };
        for r in states {
            let rel = relative_entropy(pair, r, r_star, b, params)?;
            s.values.push(entropy_of(pair, r, b, params)?);
            s.relative.push(rel.value);
            s.gamma.push(rel.gamma);
            s.dissipation.push(dissipation(pair, r, b, params)?);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `E − γ`, which differs from the relative entropy by a constant.
    pub fn modified(&self) -> Vec<f64> {
        self.values.iter().zip(&self.gamma).map(|(e, g)| e - g).collect()
    }

    pub fn fit_decay_rate(&self) -> Result<DecayFit> {
        fit_decay_rate(&self.times, &self.relative)
    }
}

/// Largest increase between consecutive entries (negative when strictly
/// decreasing).
pub fn max_increase(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}
