//! Equilibria of the gradient flows, the stationary state of the original
//! equation, and the study of their distance as the ε's shrink.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::diagnostics::{log_log_slope, LinearFit};
use crate::error::{Error, Result};
use crate::fvm::{suggest_dt, Mode, RkStepper, STATIONARY_TOLERANCE};
use crate::grid::Field;
use crate::model::{EntropyPair, ModelParams};

const NEWTON_MAX_ITERATIONS: usize = 100;
const NEWTON_TOLERANCE: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub r_inf: Field,
    /// Lagrange multiplier: the constant value of the entropy variable.
    pub chi: f64,
    pub newton_iters: usize,
    /// `max(‖u(r) − χ‖∞, |mass − 1|)`.
    pub residual: f64,
}

fn equilibrium_residual(
    pair: EntropyPair,
    r: &[f64],
    chi: f64,
    b: &[f64],
    h: f64,
    p: &ModelParams,
    f: &mut [f64],
) -> Result<(f64, f64)> {
    let mut norm = 0.0f64;
    for ((fi, &ri), &bi) in f.iter_mut().zip(r).zip(b) {
        *fi = pair.entropy_variable(ri, bi, p)? - chi;
        norm = norm.max(fi.abs());
    }
    let g = r.iter().sum::<f64>() * h - 1.0;
    Ok((norm.max(g.abs()), g))
}

/// Unit-mass minimizer of the pair's entropy: solves `u(r_i, b_i) = χ` in
/// every cell together with `Σ r_i h = 1`, by Newton from `r ≡ 1`.
pub fn equilibrium_newton(pair: EntropyPair, b: &Field, params: &ModelParams) -> Result<EquilibriumResult> {
    let n = b.len();
    let h = b.grid().h();
    let bv = b.values();
    let start = 1.0 / b.grid().length();
    let mut r = vec![start; n];
    let mut chi = pair.entropy_variable(start, b.mean(), params)?;
    let mut f = vec![0.0; n];
    let (mut norm, mut g) = equilibrium_residual(pair, &r, chi, bv, h, params, &mut f)?;
    let mut a = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut f_trial = vec![0.0; n];

    let mut iters = 0;
    while norm > NEWTON_TOLERANCE {
        if iters == NEWTON_MAX_ITERATIONS {
            return Err(Error::NoConvergence {
                solver: "equilibrium Newton",
                iterations: iters,
                residual: norm,
            });
        }
        iters += 1;
        for ((ai, &ri), &bi) in a.iter_mut().zip(&r).zip(bv) {
            *ai = pair.entropy_variable_dr(ri, bi, params)?;
        }
        // block elimination of the bordered system
        let (mut num, mut den) = (-g, 0.0);
        for (&fi, &ai) in f.iter().zip(&a) {
            num += h * fi / ai;
            den += h / ai;
        }
        let d_chi = num / den;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..n {
                trial[i] = r[i] + lambda * (d_chi - f[i]) / a[i];
            }
            let c = chi + lambda * d_chi;
            if trial.iter().zip(bv).all(|(&t, &bi)| pair.in_domain(t, bi, params)) {
                let (tn, tg) = equilibrium_residual(pair, &trial, c, bv, h, params, &mut f_trial)?;
                if tn < norm || lambda == 1.0 {
                    r.copy_from_slice(&trial);
                    core::mem::swap(&mut f, &mut f_trial);
                    chi = c;
                    norm = tn;
                    g = tg;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                solver: "equilibrium Newton (damping exhausted)",
                iterations: iters,
                residual: norm,
            });
        }
    }
    Ok(EquilibriumResult {
        r_inf: Field::from_values(*b.grid(), r)?,
        chi,
        newton_iters: iters,
        residual: norm,
    })
}

/// Budget and stopping rule for long-time integration.
#[derive(Debug, Clone, PartialEq)]
pub struct LongtimeConfig {
    /// Explicit step; `None` picks [`suggest_dt`] of the initial state.
    pub dt: Option<f64>,
    pub max_time: f64,
    /// Stop once `‖dr/dt‖∞` falls below this.
    pub tolerance: f64,
    /// Steps between residual checks.
    pub check_every: usize,
    pub positivity_floor: f64,
    /// Initial density; uniform when `None`.
    pub initial: Option<Field>,
}

impl Default for LongtimeConfig {
    fn default() -> Self {
        LongtimeConfig {
            dt: None,
            max_time: 50.0,
            tolerance: STATIONARY_TOLERANCE,
            check_every: 100,
            positivity_floor: 1e-12,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongtimeResult {
    pub r_star: Field,
    pub t: f64,
    pub steps: usize,
    pub residual: f64,
}

/// Long-time limit of the original equation from uniform (or configured)
/// initial data.
pub fn stationary_longtime(b: &Field, params: &ModelParams, config: &LongtimeConfig) -> Result<LongtimeResult> {
    stationary_longtime_mode(b, params, Mode::Agf, config)
}

/// As [`stationary_longtime`] for any mode.
pub fn stationary_longtime_mode(
    b: &Field,
    params: &ModelParams,
    mode: Mode,
    config: &LongtimeConfig,
) -> Result<LongtimeResult> {
    if config.check_every == 0 {
        return Err(Error::invalid("check_every", "must be at least 1"));
    }
    let r0 = match &config.initial {
        Some(f) => {
            if f.grid() != b.grid() {
                return Err(Error::invalid("initial", "grid differs from obstacle field"));
            }
            f.clone()
        }
        None => Field::constant(*b.grid(), 1.0 / b.grid().length()),
    };
    let dt = match config.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(_) => return Err(Error::invalid("dt", "must be positive")),
        None => suggest_dt(&r0, b, params),
    };
    let mut stepper = RkStepper::new(b, params, mode, config.positivity_floor);
    let mut r = r0.into_values();
    let mut t = 0.0;
    let mut steps = 0;
    let mut residual = stepper.rhs_norm(&r)?;
    while residual >= config.tolerance {
        if t >= config.max_time {
            return Err(Error::NotStationary { t, residual });
        }
        for _ in 0..config.check_every {
            stepper.step(&mut r, dt).map_err(|e| Error::StepFailed {
                t,
                source: alloc::boxed::Box::new(e),
            })?;
            t += dt;
            steps += 1;
        }
        residual = stepper.rhs_norm(&r)?;
    }
    Ok(LongtimeResult {
        r_star: Field::from_values(*b.grid(), r)?,
        t,
        steps,
        residual,
    })
}

/// How `(ε1, ε2)` follow the sweep parameter ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RatioMode {
    /// `ε1/ε2 = 0.1`, `ε2 = ε`.
    Tenth,
    /// `ε1 = ε2 = ε`.
    One,
    /// `ε1/ε2 = 10`, `ε1 = ε`.
    Ten,
}

impl RatioMode {
    pub const ALL: [RatioMode; 3] = [RatioMode::Tenth, RatioMode::One, RatioMode::Ten];

    pub fn params(&self, eps: f64) -> Result<ModelParams> {
        let (e1, e2) = match self {
            RatioMode::Tenth => (0.1 * eps, eps),
            RatioMode::One => (eps, eps),
            RatioMode::Ten => (eps, 0.1 * eps),
        };
        ModelParams::from_eps(e1, e2, 2)
    }

    pub fn ratio(&self) -> f64 {
        match self {
            RatioMode::Tenth => 0.1,
            RatioMode::One => 1.0,
            RatioMode::Ten => 10.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RatioMode::Tenth => "ratio0.1",
            RatioMode::One => "ratio1",
            RatioMode::Ten => "ratio10",
        }
    }
}

/// Default sweep: five halvings from 0.16.
pub const DEFAULT_EPS_VALUES: [f64; 5] = [0.16, 0.08, 0.04, 0.02, 0.01];

/// The pairs compared in the study, in column order.
pub fn study_pairs() -> [EntropyPair; 3] {
    [EntropyPair::Pair1, EntropyPair::Pair2, EntropyPair::pair3_default()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub eps: f64,
    /// `‖r* − r_{i,∞}‖₂` for the study pairs, or the error that stopped the
    /// row.
    pub errors: Result<[f64; 3]>,
}

/// One ε of the sweep.
pub fn study_row(ratio: RatioMode, eps: f64, b: &Field, config: &LongtimeConfig) -> StudyRow {
    let errors = (|| {
        let p = ratio.params(eps)?;
        let star = stationary_longtime(b, &p, config)?.r_star;
        let mut out = [0.0; 3];
        for (o, pair) in out.iter_mut().zip(study_pairs()) {
            let eq = equilibrium_newton(pair, b, &p)?;
            *o = star.l2_distance(&eq.r_inf)?;
        }
        Ok(out)
    })();
    StudyRow { eps, errors }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub ratio: RatioMode,
    pub rows: Vec<StudyRow>,
    /// Log-log fits per pair over the successful rows.
    pub slopes: [Option<LinearFit>; 3],
}

impl ScalingStudy {
    pub fn from_rows(ratio: RatioMode, rows: Vec<StudyRow>) -> Self {
        let mut slopes = [None; 3];
        for (k, s) in slopes.iter_mut().enumerate() {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|row| row.errors.as_ref().ok().map(|e| (row.eps, e[k])))
                .unzip();
            *s = log_log_slope(&xs, &ys).ok();
        }
        ScalingStudy { ratio, rows, slopes }
    }
}

/// Distance between the stationary state and the three equilibria for each
/// ε, with the fitted convergence slopes. Rows that fail keep their error
/// and are skipped in the fits.
pub fn error_scaling_study(
    ratio: RatioMode,
    eps_values: &[f64],
    b: &Field,
    config: &LongtimeConfig,
) -> Result<ScalingStudy> {
    if eps_values.is_empty() || eps_values.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("eps_values", "need positive values"));
    }
    if eps_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("eps_values", "must be decreasing"));
    }
    let rows = eps_values.iter().map(|&eps| study_row(ratio, eps, b, config)).collect();
    Ok(ScalingStudy::from_rows(ratio, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::model::asymptotic_equilibrium;

    fn convex(n: usize) -> Field {
        Field::cell_averages(Grid1D::unit(n).unwrap(), &|x: f64| 0.3 * (4.0 * x * x + 3.0)).unwrap()
    }

    #[test]
    fn uniform_obstacles_give_uniform_equilibrium() {
        let g = Grid1D::unit(30).unwrap();
        let b = Field::constant(g, 1.0);
        let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
        for pair in study_pairs() {
            let eq = equilibrium_newton(pair, &b, &p).unwrap();
            assert!(eq.r_inf.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
            let u = pair.entropy_variable(1.0, 1.0, &p).unwrap();
            assert!((eq.chi - u).abs() < 1e-12);
        }
    }

    #[test]
    fn boltzmann_equilibrium_without_red_interaction() {
        let b = convex(80);
        let p = ModelParams::from_eps(0.0, 0.3, 2).unwrap();
        let eq = equilibrium_newton(EntropyPair::Pair1, &b, &p).unwrap();
        let w = b.map(|bi| (-0.3 * bi).exp());
        let exact = w.normalized().unwrap();
        assert!(eq.r_inf.linf_distance(&exact).unwrap() < 1e-8);
        assert!((eq.r_inf.mass() - 1.0).abs() < 1e-12);
        assert!(eq.residual < 1e-10);
    }

    #[test]
    fn pair1_equilibrium_is_close_to_first_order_asymptotics() {
        let b = convex(200);
        let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
        let eq = equilibrium_newton(EntropyPair::Pair1, &b, &p).unwrap();
        let first = asymptotic_equilibrium(&b, &p);
        let d = eq.r_inf.linf_distance(&first).unwrap();
        assert!(d <= 2.0 * p.eps3 * p.eps3, "{d}");
        assert!(eq.newton_iters <= 15);
    }

    #[test]
    fn longtime_heat_equation_is_flat() {
        let b = convex(50);
        let p = ModelParams::from_eps(0.0, 0.0, 2).unwrap();
        let start = Field::sample(*b.grid(), &|x: f64| 1.0 + 0.5 * x).unwrap();
        let out = stationary_longtime(
            &b,
            &p,
            &LongtimeConfig {
                initial: Some(start),
                ..LongtimeConfig::default()
            },
        )
        .unwrap();
        assert!(out.r_star.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn longtime_budget_exhaustion_is_reported() {
        let b = convex(50);
        let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
        let cfg = LongtimeConfig {
            max_time: 1e-3,
            ..LongtimeConfig::default()
        };
        assert!(matches!(
            stationary_longtime(&b, &p, &cfg),
            Err(Error::NotStationary { .. })
        ));
    }

    #[test]
    fn gradient_flow_steady_state_is_the_equilibrium() {
        let b = convex(40);
        let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
        for pair in [EntropyPair::Pair1, EntropyPair::Pair2] {
            let eq = equilibrium_newton(pair, &b, &p).unwrap();
            let lt = stationary_longtime_mode(
                &b,
                &p,
                Mode::Gradient(pair),
                &LongtimeConfig {
                    tolerance: 1e-10,
                    ..LongtimeConfig::default()
                },
            )
            .unwrap();
            assert!(lt.r_star.linf_distance(&eq.r_inf).unwrap() < 1e-9);
        }
    }

    #[test]
    fn sweep_validates_input() {
        let b = convex(20);
        let cfg = LongtimeConfig::default();
        assert!(error_scaling_study(RatioMode::One, &[], &b, &cfg).is_err());
        assert!(error_scaling_study(RatioMode::One, &[0.01, 0.02], &b, &cfg).is_err());
        assert!(error_scaling_study(RatioMode::One, &[0.1, -0.1], &b, &cfg).is_err());
    }

    #[test]
    fn failing_rows_do_not_stop_the_sweep() {
        let b = convex(20);
        // ε = 2 leaves the feasible set of the second pair
        let study = error_scaling_study(RatioMode::One, &[2.0, 0.02, 0.01], &b, &LongtimeConfig::default()).unwrap();
        assert!(study.rows[0].errors.is_err());
        assert!(study.rows[1].errors.is_ok() && study.rows[2].errors.is_ok());
        assert!(study.slopes.iter().all(|s| s.is_some()));
    }
}
