//! Finite-volume discretization on a uniform mesh with no-flux boundaries.
//!
//! Unknowns are cell averages. Interface fluxes split into a two-point
//! diffusive part and an upwinded transport part whose transported
//! quantity (density or mobility) is reconstructed at the interface from
//! minmod-limited slopes, which keeps the scheme second order away from
//! extrema and non-negative under the usual CFL restriction. Time stepping
//! is SSP-RK2 with a positivity floor, or the regularized implicit Euler
//! scheme in [`implicit`].

mod implicit;

use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::entropy_of;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{EntropyPair, ModelParams};

pub use implicit::{
    regularized_dissipation, regularized_entropy, regularized_entropy_variable, step_implicit_regularized,
    ImplicitStep, RegularizedDissipation,
};

/// Which flux drives the evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// The original Fokker-Planck flux.
    Agf,
    /// The full gradient flow `∂t r = ∇·[m ∇u]` of one entropy-mobility pair.
    Gradient(EntropyPair),
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Agf => "AGF",
            Mode::Gradient(EntropyPair::Pair1) => "GF1",
            Mode::Gradient(EntropyPair::Pair2) => "GF2",
            Mode::Gradient(EntropyPair::Pair3 { .. }) => "GF3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    ExplicitRk,
    /// Implicit Euler with entropy regularization; the time step is `tau`.
    ImplicitRegularized {
        tau: f64,
    },
}

/// Relative threshold on `‖rhs‖∞` below which a state counts as stationary.
pub const STATIONARY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FvmConfig {
    pub n_cells: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Snapshot times in `[0, t_end]`, increasing.
    pub output_times: Vec<f64>,
    pub scheme: Scheme,
    pub positivity_floor: f64,
    /// Entropies evaluated at every recorded step.
    pub tracked: Vec<EntropyPair>,
    /// Record step diagnostics every this many steps (the final step is
    /// always recorded).
    pub diagnostics_every: usize,
}

impl Default for FvmConfig {
    fn default() -> Self {
        FvmConfig {
            n_cells: 1000,
            dt: 1e-6,
            t_end: 0.2,
            output_times: Vec::new(),
            scheme: Scheme::ExplicitRk,
            positivity_floor: 1e-12,
            tracked: Vec::new(),
            diagnostics_every: 1,
        }
    }
}

impl FvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.n_cells < 4 {
            return Err(Error::invalid("n_cells", "need at least 4 cells"));
        }
        if !(self.positivity_floor > 0.0) {
            return Err(Error::invalid("positivity_floor", "must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", "must be finite and non-negative"));
        }
        if self.diagnostics_every == 0 {
            return Err(Error::invalid("diagnostics_every", "must be at least 1"));
        }
        if let Scheme::ImplicitRegularized { tau } = self.scheme {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::invalid("tau", "must be positive"));
            }
        }
        let mut last = f64::NEG_INFINITY;
        for &t in &self.output_times {
            if !(t > last) || t < 0.0 || t > self.t_end * (1.0 + 1e-12) {
                return Err(Error::invalid(
                    "output_times",
                    "must be strictly increasing within [0, t_end]",
                ));
            }
            last = t;
        }
        Ok(())
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Semi-discrete operator `r ↦ dr/dt` for one mode with fixed obstacles,
/// holding its scratch buffers.
#[derive(Debug, Clone)]
pub struct Discretization {
    params: ModelParams,
    mode: Mode,
    h: f64,
    b: Vec<f64>,
    b_face: Vec<f64>,
    slope: Vec<f64>,
    u: Vec<f64>,
    flux: Vec<f64>,
}

impl Discretization {
    pub fn new(b: &Field, params: &ModelParams, mode: Mode) -> Self {
        let n = b.len();
        let bv = b.values().to_vec();
        let b_face = (0..n.saturating_sub(1)).map(|i| 0.5 * (bv[i] + bv[i + 1])).collect();
        Discretization {
            params: *params,
            mode,
            h: b.grid().h(),
            b: bv,
            b_face,
            slope: vec![0.0; n],
            u: vec![0.0; n],
            flux: vec![0.0; n + 1],
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n_cells(&self) -> usize {
        self.b.len()
    }

    /// Interface fluxes `G_{i+1/2}` with `dr_i/dt = (G_{i+1/2} − G_{i−1/2})/h`;
    /// entries `0` and `n` are the boundary faces and are exactly zero.
    pub fn fluxes(&mut self, r: &[f64]) -> Result<&[f64]> {
        let n = self.b.len();
        let h = self.h;
        let p = self.params;

        self.slope[0] = 0.0;
        self.slope[n - 1] = 0.0;
        for i in 1..n - 1 {
            self.slope[i] = minmod(r[i + 1] - r[i], r[i] - r[i - 1]);
        }
        self.flux[0] = 0.0;
        self.flux[n] = 0.0;

        match self.mode {
            Mode::Agf => {
                for i in 0..n - 1 {
                    let r_bar = 0.5 * (r[i] + r[i + 1]);
                    let diffusivity = 1.0 + p.eps1 * r_bar - p.eps2 * self.b_face[i];
                    // transport velocity of the drift term
                    let v = -p.eps3 * (self.b[i + 1] - self.b[i]) / h;
                    let r_up = if v >= 0.0 {
                        r[i] + 0.5 * self.slope[i]
                    } else {
                        r[i + 1] - 0.5 * self.slope[i + 1]
                    };
                    self.flux[i + 1] = diffusivity * (r[i + 1] - r[i]) / h - v * r_up;
                }
            }
            Mode::Gradient(pair) => {
                for i in 0..n {
                    self.u[i] = pair.entropy_variable(r[i], self.b[i], &p)?;
                }
                for i in 0..n - 1 {
                    let v = -(self.u[i + 1] - self.u[i]) / h;
                    let bf = self.b_face[i];
                    let m_up = if v >= 0.0 {
                        pair.mobility(r[i] + 0.5 * self.slope[i], bf, &p)
                    } else {
                        pair.mobility(r[i + 1] - 0.5 * self.slope[i + 1], bf, &p)
                    };
                    self.flux[i + 1] = -v * m_up.max(0.0);
                }
            }
        }
        Ok(&self.flux)
    }

    /// Writes `dr/dt` into `out`.
    pub fn eval_into(&mut self, r: &[f64], out: &mut [f64]) -> Result<()> {
        let h = self.h;
        self.fluxes(r)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.flux[i + 1] - self.flux[i]) / h;
        }
        Ok(())
    }
}

/// Divergence of the interface fluxes, i.e. the semi-discrete `∂t r`.
///
/// In gradient-flow mode the entropy variable must exist in every cell,
/// otherwise a domain error reports the escaping state.
pub fn rhs(r: &Field, b: &Field, params: &ModelParams, mode: Mode) -> Result<Field> {
    check_pair(r, b)?;
    let mut disc = Discretization::new(b, params, mode);
    let mut out = vec![0.0; r.len()];
    disc.eval_into(r.values(), &mut out)?;
    Field::from_values(*r.grid(), out)
}

fn check_pair(r: &Field, b: &Field) -> Result<()> {
    if r.grid() != b.grid() {
        return Err(Error::invalid("fields", "density and obstacles on different grids"));
    }
    if r.len() < 3 {
        return Err(Error::invalid("n_cells", "need at least 3 cells"));
    }
    Ok(())
}

/// Outcome of one explicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct RkStep {
    pub field: Field,
    /// Cells raised to the positivity floor.
    pub floored: usize,
}

/// Reusable SSP-RK2 stepper.
#[derive(Debug, Clone)]
pub struct RkStepper {
    disc: Discretization,
    floor: f64,
    k: Vec<f64>,
    stage: Vec<f64>,
}

impl RkStepper {
    pub fn new(b: &Field, params: &ModelParams, mode: Mode, positivity_floor: f64) -> Self {
        let n = b.len();
        RkStepper {
            disc: Discretization::new(b, params, mode),
            floor: positivity_floor,
            k: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    /// Advances `r` in place by `dt`; returns the number of floored cells.
    pub fn step(&mut self, r: &mut [f64], dt: f64) -> Result<usize> {
        self.disc.eval_into(r, &mut self.k)?;
        for ((s, &ri), &ki) in self.stage.iter_mut().zip(r.iter()).zip(&self.k) {
            *s = ri + dt * ki;
        }
        self.disc.eval_into(&self.stage, &mut self.k)?;
        let mass_before: f64 = r.iter().sum();
        let mut floored = 0;
        for ((ri, &si), &ki) in r.iter_mut().zip(&self.stage).zip(&self.k) {
            let next = 0.5 * *ri + 0.5 * (si + dt * ki);
            if !next.is_finite() {
                return Err(Error::Unstable { t: f64::NAN });
            }
            if next < self.floor {
                floored += 1;
                *ri = self.floor;
            } else {
                *ri = next;
            }
        }
        if floored > 0 {
            let scale = mass_before / r.iter().sum::<f64>();
            r.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(floored)
    }

    /// `‖dr/dt‖∞` at `r`.
    pub fn rhs_norm(&mut self, r: &[f64]) -> Result<f64> {
        self.disc.eval_into(r, &mut self.k)?;
        Ok(self.k.iter().fold(0.0, |m, v| m.max(v.abs())))
    }
}

/// One SSP-RK2 step, floored at `positivity_floor` and renormalized to the
/// incoming mass whenever the floor was hit.
pub fn step_rk(
    r: &Field,
    b: &Field,
    params: &ModelParams,
    mode: Mode,
    dt: f64,
    positivity_floor: f64,
) -> Result<RkStep> {
    check_pair(r, b)?;
    let mut stepper = RkStepper::new(b, params, mode, positivity_floor);
    let mut values = r.values().to_vec();
    let floored = stepper.step(&mut values, dt)?;
    Ok(RkStep {
        field: Field::from_values(*r.grid(), values)?,
        floored,
    })
}

/// Largest effective diffusivity `m ∂u/∂r` (or the AGF diffusivity) over
/// the cells.
fn max_diffusivity(r: &Field, b: &Field, params: &ModelParams, mode: Mode) -> Result<f64> {
    let p = params;
    let mut d_max = 0.0f64;
    for (&ri, &bi) in r.values().iter().zip(b.values()) {
        let d = match mode {
            Mode::Agf => 1.0 + p.eps1 * ri - p.eps2 * bi,
            Mode::Gradient(pair) => {
                let rr = ri.max(1e-300);
                pair.mobility(rr, bi, p) * pair.entropy_variable_dr(rr, bi, p)?
            }
        };
        d_max = d_max.max(d);
    }
    Ok(d_max)
}

/// Stable explicit step for the AGF: `0.9 h² / (2 max(1 + ε1 r − ε2 b))`.
pub fn suggest_dt(r: &Field, b: &Field, params: &ModelParams) -> f64 {
    // AGF diffusivity is defined everywhere
    let d = max_diffusivity(r, b, params, Mode::Agf).unwrap_or(1.0);
    let h = r.grid().h();
    0.9 * h * h / (2.0 * d.max(f64::MIN_POSITIVE))
}

/// As [`suggest_dt`], using the linearized diffusivity of the given mode.
pub fn suggest_dt_for(r: &Field, b: &Field, params: &ModelParams, mode: Mode) -> Result<f64> {
    let d = max_diffusivity(r, b, params, mode)?;
    let h = r.grid().h();
    Ok(0.9 * h * h / (2.0 * d.max(f64::MIN_POSITIVE)))
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub min_r: f64,
    /// Entropies of the tracked pairs, in tracking order.
    pub entropies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mode: Mode,
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub tracked: Vec<EntropyPair>,
    pub steps: Vec<StepDiagnostics>,
    pub floor_events: usize,
    pub step_count: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&Field> {
        self.states.last()
    }

    /// Series of one tracked entropy, paired with the step times.
    pub fn entropy_series(&self, pair: EntropyPair) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = self.tracked.iter().position(|&q| q == pair)?;
        Some(self.steps.iter().map(|s| (s.t, s.entropies[k])).unzip())
    }
}

fn diagnostics_at(
    t: f64,
    r: &Field,
    b: &Field,
    params: &ModelParams,
    tracked: &[EntropyPair],
) -> Result<StepDiagnostics> {
    let entropies = tracked
        .iter()
        .map(|&pair| entropy_of(pair, r, b, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepDiagnostics {
        t,
        mass: r.mass(),
        min_r: r.min(),
        entropies,
    })
}

/// Integrates from `r0` to `config.t_end`, recording snapshots at the
/// configured output times (the final state is always recorded).
pub fn solve(r0: &Field, b: &Field, params: &ModelParams, mode: Mode, config: &FvmConfig) -> Result<Trajectory> {
    config.validate()?;
    check_pair(r0, b)?;
    if r0.len() != config.n_cells {
        return Err(Error::invalid(
            "n_cells",
            alloc::format!("config has {} cells, initial data {}", config.n_cells, r0.len()),
        ));
    }
    let grid = *r0.grid();
    let dt = match config.scheme {
        Scheme::ExplicitRk => config.dt,
        Scheme::ImplicitRegularized { tau } => tau,
    };
    if let (Scheme::ImplicitRegularized { .. }, Mode::Gradient(_)) = (config.scheme, mode) {
        return Err(Error::invalid(
            "scheme",
            "the regularized implicit scheme integrates the original equation only",
        ));
    }

    let mut traj = Trajectory {
        mode,
        times: Vec::new(),
        states: Vec::new(),
        tracked: config.tracked.clone(),
        steps: Vec::new(),
        floor_events: 0,
        step_count: 0,
    };
    let mut stepper = RkStepper::new(b, params, mode, config.positivity_floor);
    let mut r = r0.values().to_vec();
    let mut t = 0.0;
    let mut outputs = config.output_times.iter().copied().peekable();

    let current = |r: &[f64]| Field::from_values(grid, r.to_vec());
    traj.steps.push(diagnostics_at(0.0, r0, b, params, &config.tracked)?);
    while outputs.peek().is_some_and(|&to| to <= 0.0) {
        outputs.next();
        traj.times.push(0.0);
        traj.states.push(r0.clone());
    }

    let eps_t = 1e-12 * config.t_end.max(dt);
    while t < config.t_end - eps_t {
        let target = outputs.peek().copied().unwrap_or(config.t_end).min(config.t_end);
        let mut step = dt;
        let remaining = target - t;
        // land exactly on output times; absorb slivers into the last step
        if remaining <= dt * (1.0 + 1e-9) {
            step = remaining;
        } else if remaining < 2.0 * dt {
            step = 0.5 * remaining;
        }
        let t_next = if step == remaining { target } else { t + step };

        match config.scheme {
            Scheme::ExplicitRk => {
                let floored = stepper.step(&mut r, step).map_err(|e| step_error(e, t_next))?;
                traj.floor_events += floored;
            }
            Scheme::ImplicitRegularized { .. } => {
                let prev = current(&r)?;
                let out = step_implicit_regularized(&prev, b, params, step).map_err(|e| step_error(e, t_next))?;
                r.copy_from_slice(out.field.values());
            }
        }
        t = t_next;
        traj.step_count += 1;

        let at_output = outputs.peek().is_some_and(|&to| (to - t).abs() <= eps_t);
        let is_last = t >= config.t_end - eps_t;
        if at_output || is_last || traj.step_count.is_multiple_of(config.diagnostics_every) {
            let field = current(&r).map_err(|_| Error::Unstable { t })?;
            traj.steps.push(diagnostics_at(t, &field, b, params, &config.tracked)?);
            if at_output {
                outputs.next();
                traj.times.push(t);
                traj.states.push(field);
            } else if is_last {
                traj.times.push(t);
                traj.states.push(field);
            }
        }
    }
    if traj.states.is_empty() || traj.times.last().is_some_and(|&tl| tl < t - eps_t) {
        traj.times.push(t);
        traj.states.push(current(&r)?);
    }
    Ok(traj)
}

fn step_error(e: Error, t: f64) -> Error {
    match e {
        Error::Unstable { .. } => Error::Unstable { t },
        other => Error::StepFailed {
            t,
            source: alloc::boxed::Box::new(other),
        },
    }
}
