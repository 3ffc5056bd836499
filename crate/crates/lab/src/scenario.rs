//! Scenario files: parsing, defaults, validation, presets and hashing.

use std::path::Path;

use agf_core::fvm::Mode;
use agf_core::grid::integrate;
use agf_core::stationary::{RatioMode, DEFAULT_EPS_VALUES};
use agf_core::{EntropyPair, Field, Grid1D, ModelParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LabError;
use crate::expr::Expr;

pub const CONVEX: &str = "0.3*(4*x^2+3)";
pub const NONCONVEX: &str = "1.2*(1+0.1*sin(20*x))*(x^2+0.75)";
pub const DEFAULT_CELLS: usize = 1000;

// ---------------------------------------------------------------- raw file

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    seed: Option<u64>,
    model: Option<RawModel>,
    obstacles: Option<RawDensity>,
    initial: Option<RawDensity>,
    solver: Option<RawSolver>,
    stationary: Option<RawStationary>,
    study: Option<RawStudy>,
    particles: Option<RawParticles>,
    metropolis: Option<RawMetropolis>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    n_red: Option<usize>,
    n_blue: Option<usize>,
    diam_red: Option<f64>,
    diam_blue: Option<f64>,
    eps1: Option<f64>,
    eps2: Option<f64>,
    dim: Option<u32>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawDensity {
    density: Option<String>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    n_cells: Option<usize>,
    dt: Option<f64>,
    t_end: Option<f64>,
    output_times: Option<Vec<f64>>,
    output_every: Option<f64>,
    modes: Option<Vec<String>>,
    positivity_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawStationary {
    tolerance: Option<f64>,
    max_time: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    ratios: Option<Vec<f64>>,
    eps: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawParticles {
    realizations: Option<usize>,
    bins: Option<usize>,
    output_times: Option<Vec<f64>>,
    dt: Option<f64>,
    redraw_obstacles: Option<bool>,
    avoid_obstacle_overlap: Option<bool>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMetropolis {
    realizations: Option<usize>,
    bins: Option<usize>,
    burn_in_moves: Option<usize>,
    moves: Option<usize>,
    target_acceptance: Option<f64>,
    avoid_obstacle_overlap: Option<bool>,
}

// -------------------------------------------------------- normalized form

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Particles {
        n_red: usize,
        n_blue: usize,
        diam_red: f64,
        diam_blue: f64,
        dim: u32,
    },
    Coefficients {
        eps1: f64,
        eps2: f64,
        dim: u32,
    },
}

impl ModelSpec {
    pub fn params(&self) -> agf_core::Result<ModelParams> {
        match *self {
            ModelSpec::Particles {
                n_red,
                n_blue,
                diam_red,
                diam_blue,
                dim,
            } => ModelParams::derive(n_red, n_blue, diam_red, diam_blue, dim),
            ModelSpec::Coefficients { eps1, eps2, dim } => ModelParams::from_eps(eps1, eps2, dim),
        }
    }

    pub fn figure_one() -> Self {
        ModelSpec::Particles {
            n_red: 100,
            n_blue: 500,
            diam_red: 0.01,
            diam_blue: 0.015,
            dim: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub n_cells: usize,
    /// Requested step; `None` uses the stability bound.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    pub modes: Vec<String>,
    pub positivity_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySpec {
    pub tolerance: f64,
    pub max_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub ratios: Vec<f64>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    pub realizations: usize,
    pub bins: usize,
    pub output_times: Vec<f64>,
    pub dt: Option<f64>,
    pub redraw_obstacles: bool,
    pub avoid_obstacle_overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetropolisSection {
    pub realizations: usize,
    pub bins: usize,
    pub burn_in_moves: usize,
    pub moves: usize,
    pub target_acceptance: f64,
    pub avoid_obstacle_overlap: bool,
}

/// A fully defaulted and validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub model: ModelSpec,
    /// `convex`, `nonconvex` or an expression in `x`.
    pub obstacles: String,
    /// `uniform` or an expression in `x`.
    pub initial: String,
    pub solver: SolverSpec,
    pub stationary: Option<StationarySpec>,
    pub study: Option<StudySpec>,
    pub particles: Option<ParticleSpec>,
    pub metropolis: Option<MetropolisSection>,
}

/// A scenario together with the notices raised while normalizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub scenario: Scenario,
    pub notices: Vec<String>,
}

fn key_err(key: &str, reason: impl Into<String>) -> LabError {
    LabError::Key {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64, LabError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(key_err(key, format!("must be positive and finite, got {v}")))
    }
}

fn increasing_times(key: &str, ts: &[f64], t_end: Option<f64>) -> Result<(), LabError> {
    if ts.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(key_err(key, "times must be finite and non-negative"));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(key_err(key, "times must be strictly increasing"));
    }
    if let (Some(&last), Some(end)) = (ts.last(), t_end) {
        if last > end * (1.0 + 1e-12) {
            return Err(key_err(key, format!("time {last} lies beyond solver.t_end = {end}")));
        }
    }
    Ok(())
}

/// The uniform time grid `0, step, 2 step, …` up to `t_end`.
pub fn time_grid(step: f64, t_end: f64) -> Vec<f64> {
    let n = (t_end / step * (1.0 + 1e-12)).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// Parses a mode label: `AGF`, `GF1`, `GF2` or `GF3`.
pub fn parse_mode(label: &str) -> Option<Mode> {
    match label {
        "AGF" => Some(Mode::Agf),
        "GF1" => Some(Mode::Gradient(EntropyPair::Pair1)),
        "GF2" => Some(Mode::Gradient(EntropyPair::Pair2)),
        "GF3" => Some(Mode::Gradient(EntropyPair::pair3_default())),
        _ => None,
    }
}

pub fn parse_ratio(r: f64) -> Option<RatioMode> {
    RatioMode::ALL
        .into_iter()
        .find(|m| (m.ratio() - r).abs() <= 1e-12 * r.abs().max(1.0))
}

/// Parses a density description into an expression.
pub fn density_expr(spec: &str, key: &str) -> Result<Expr, LabError> {
    let text = match spec.trim() {
        "convex" => CONVEX,
        "nonconvex" => NONCONVEX,
        "uniform" => "1",
        other => other,
    };
    Expr::parse(text).map_err(|e| key_err(key, e.to_string()))
}

/// Mass of a density on `[-1/2, 1/2]`, after checking non-negativity on a
/// fine sample.
pub fn density_mass(expr: &Expr, key: &str) -> Result<f64, LabError> {
    for k in 0..=4000 {
        let x = -0.5 + k as f64 / 4000.0;
        let v = expr.eval(x);
        if !(v >= 0.0 && v.is_finite()) {
            return Err(key_err(key, format!("density `{expr}` is {v} at x = {x}")));
        }
    }
    let mass = integrate(expr, -0.5, 0.5, 2000);
    if mass.is_nan() || mass <= 0.0 {
        return Err(key_err(key, format!("density `{expr}` has no mass")));
    }
    Ok(mass)
}

/// Cell averages of a density on `grid`, divided by its mass on the domain.
pub fn density_field(spec: &str, key: &str, grid: Grid1D) -> Result<(Field, f64), LabError> {
    let expr = density_expr(spec, key)?;
    let mass = density_mass(&expr, key)?;
    let f = Field::cell_averages(grid, &expr).map_err(|e| key_err(key, e.to_string()))?;
    Ok((f.map(|v| v / mass), mass))
}

fn normalize(raw: RawScenario, notices: &mut Vec<String>) -> Result<Scenario, LabError> {
    let name = raw.name.unwrap_or_else(|| "scenario".to_string());
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(key_err("name", "use letters, digits, `_` or `-`"));
    }

    let m = raw.model.unwrap_or_default();
    let dim = m.dim.unwrap_or(2);
    if !(2..=3).contains(&dim) {
        return Err(key_err("model.dim", format!("must be 2 or 3, got {dim}")));
    }
    let micro = m.n_red.is_some() || m.n_blue.is_some() || m.diam_red.is_some() || m.diam_blue.is_some();
    let coeff = m.eps1.is_some() || m.eps2.is_some();
    let model = match (micro, coeff) {
        (true, true) => {
            return Err(key_err(
                "model",
                "give either particle counts and diameters or eps1/eps2, not both",
            ))
        }
        (false, true) => {
            let eps1 = m.eps1.unwrap_or(0.0);
            let eps2 = m.eps2.unwrap_or(0.0);
            if !(eps1 >= 0.0 && eps1.is_finite()) {
                return Err(key_err("model.eps1", "must be finite and non-negative"));
            }
            if !(eps2 >= 0.0 && eps2.is_finite()) {
                return Err(key_err("model.eps2", "must be finite and non-negative"));
            }
            ModelSpec::Coefficients { eps1, eps2, dim }
        }
        _ => {
            let ModelSpec::Particles {
                n_red,
                n_blue,
                diam_red,
                diam_blue,
                ..
            } = ModelSpec::figure_one()
            else {
                unreachable!()
            };
            let n_red = m.n_red.unwrap_or(n_red);
            if n_red == 0 {
                return Err(key_err("model.n_red", "need at least one red particle"));
            }
            ModelSpec::Particles {
                n_red,
                n_blue: m.n_blue.unwrap_or(n_blue),
                diam_red: positive("model.diam_red", m.diam_red.unwrap_or(diam_red))?,
                diam_blue: positive("model.diam_blue", m.diam_blue.unwrap_or(diam_blue))?,
                dim,
            }
        }
    };
    let params = model.params().map_err(|e| key_err("model", e.to_string()))?;

    let obstacles = raw
        .obstacles
        .and_then(|o| o.density)
        .unwrap_or_else(|| "convex".to_string());
    let b_expr = density_expr(&obstacles, "obstacles.density")?;
    let b_mass = density_mass(&b_expr, "obstacles.density")?;
    if (b_mass - 1.0).abs() > 1e-12 {
        notices.push(format!(
            "obstacles.density `{b_expr}` has mass {b_mass}; dividing by this factor"
        ));
    }

    let initial = raw
        .initial
        .and_then(|o| o.density)
        .unwrap_or_else(|| "uniform".to_string());
    let r_expr = density_expr(&initial, "initial.density")?;
    let r_mass = density_mass(&r_expr, "initial.density")?;
    if (r_mass - 1.0).abs() > 1e-12 {
        notices.push(format!(
            "initial.density `{r_expr}` has mass {r_mass}; dividing by this factor"
        ));
    }

    let s = raw.solver.unwrap_or_default();
    let n_cells = match s.n_cells {
        Some(n) => n,
        None => {
            notices.push(format!("solver.n_cells not given; using {DEFAULT_CELLS}"));
            DEFAULT_CELLS
        }
    };
    if n_cells < 4 {
        return Err(key_err(
            "solver.n_cells",
            format!("need at least 4 cells, got {n_cells}"),
        ));
    }
    let dt = s.dt.map(|v| positive("solver.dt", v)).transpose()?;
    let t_end = positive("solver.t_end", s.t_end.unwrap_or(0.2))?;
    let output_times = match (s.output_times, s.output_every) {
        (Some(_), Some(_)) => {
            return Err(key_err(
                "solver.output_every",
                "give output_times or output_every, not both",
            ))
        }
        (Some(ts), None) => ts,
        (None, Some(step)) => time_grid(positive("solver.output_every", step)?, t_end),
        (None, None) => time_grid(0.025, t_end),
    };
    increasing_times("solver.output_times", &output_times, Some(t_end))?;
    let modes = s
        .modes
        .unwrap_or_else(|| vec!["AGF".into(), "GF1".into(), "GF2".into()]);
    for (i, mode) in modes.iter().enumerate() {
        if parse_mode(mode).is_none() {
            return Err(key_err(
                "solver.modes",
                format!("unknown mode `{mode}`; use AGF, GF1, GF2 or GF3"),
            ));
        }
        if modes[..i].contains(mode) {
            return Err(key_err("solver.modes", format!("mode `{mode}` listed twice")));
        }
    }
    let positivity_floor = positive("solver.positivity_floor", s.positivity_floor.unwrap_or(1e-12))?;

    let stationary = raw
        .stationary
        .map(|st| -> Result<_, LabError> {
            Ok(StationarySpec {
                tolerance: positive("stationary.tolerance", st.tolerance.unwrap_or(1e-8))?,
                max_time: positive("stationary.max_time", st.max_time.unwrap_or(50.0))?,
            })
        })
        .transpose()?;

    let study = raw
        .study
        .map(|st| -> Result<_, LabError> {
            let ratios = st
                .ratios
                .unwrap_or_else(|| RatioMode::ALL.iter().map(|m| m.ratio()).collect());
            if ratios.is_empty() {
                return Err(key_err("study.ratios", "need at least one ratio"));
            }
            for &r in &ratios {
                if parse_ratio(r).is_none() {
                    return Err(key_err("study.ratios", format!("ratio {r} is not one of 0.1, 1, 10")));
                }
            }
            let eps = st.eps.unwrap_or_else(|| DEFAULT_EPS_VALUES.to_vec());
            if eps.len() < 2 || eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                return Err(key_err("study.eps", "need at least two positive values"));
            }
            if eps.windows(2).any(|w| w[1] >= w[0]) {
                return Err(key_err("study.eps", "values must be decreasing"));
            }
            Ok(StudySpec { ratios, eps })
        })
        .transpose()?;

    let particles = raw
        .particles
        .map(|p| -> Result<_, LabError> {
            let times = p.output_times.unwrap_or_else(|| vec![0.2]);
            increasing_times("particles.output_times", &times, None)?;
            let out = ParticleSpec {
                realizations: p.realizations.unwrap_or(1000),
                bins: p.bins.unwrap_or(50),
                output_times: times,
                dt: p.dt.map(|v| positive("particles.dt", v)).transpose()?,
                redraw_obstacles: p.redraw_obstacles.unwrap_or(true),
                avoid_obstacle_overlap: p.avoid_obstacle_overlap.unwrap_or(true),
            };
            if out.realizations == 0 {
                return Err(key_err("particles.realizations", "must be at least 1"));
            }
            if out.bins == 0 {
                return Err(key_err("particles.bins", "must be at least 1"));
            }
            Ok(out)
        })
        .transpose()?;

    let metropolis = raw
        .metropolis
        .map(|m| -> Result<_, LabError> {
            let out = MetropolisSection {
                realizations: m.realizations.unwrap_or(100),
                bins: m.bins.unwrap_or(50),
                burn_in_moves: m.burn_in_moves.unwrap_or(20_000),
                moves: m.moves.unwrap_or(100_000),
                target_acceptance: m.target_acceptance.unwrap_or(0.23),
                avoid_obstacle_overlap: m.avoid_obstacle_overlap.unwrap_or(true),
            };
            if out.realizations == 0 {
                return Err(key_err("metropolis.realizations", "must be at least 1"));
            }
            if out.bins == 0 {
                return Err(key_err("metropolis.bins", "must be at least 1"));
            }
            if out.moves == 0 {
                return Err(key_err("metropolis.moves", "must be at least 1"));
            }
            if !(out.target_acceptance > 0.0 && out.target_acceptance < 1.0) {
                return Err(key_err("metropolis.target_acceptance", "must lie in (0, 1)"));
            }
            Ok(out)
        })
        .transpose()?;

    if (particles.is_some() || metropolis.is_some()) && params.n_red == 0 {
        return Err(key_err("model", "particle runs need particle counts and diameters"));
    }

    Ok(Scenario {
        name,
        seed: raw.seed.unwrap_or(0),
        model,
        obstacles,
        initial,
        solver: SolverSpec {
            n_cells,
            dt,
            t_end,
            output_times,
            modes,
            positivity_floor,
        },
        stationary,
        study,
        particles,
        metropolis,
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parses and normalizes scenario text.
pub fn parse_scenario(text: &str) -> Result<Validated, LabError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        LabError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut notices = Vec::new();
    let scenario = normalize(raw, &mut notices)?;
    Ok(Validated { scenario, notices })
}

/// Reads and normalizes a scenario file.
pub fn validate_config(path: &Path) -> Result<Validated, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_scenario(&text)
}

impl Scenario {
    /// SHA-256 of the normalized content, excluding the name.
    pub fn hash(&self) -> String {
        let mut unnamed = self.clone();
        unnamed.name.clear();
        let text = toml::to_string(&unnamed).expect("scenario serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// The scenario as a fully explicit scenario file.
    pub fn to_toml(&self) -> String {
        let model = match self.model {
            ModelSpec::Particles {
                n_red,
                n_blue,
                diam_red,
                diam_blue,
                dim,
            } => RawModel {
                n_red: Some(n_red),
                n_blue: Some(n_blue),
                diam_red: Some(diam_red),
                diam_blue: Some(diam_blue),
                dim: Some(dim),
                ..RawModel::default()
            },
            ModelSpec::Coefficients { eps1, eps2, dim } => RawModel {
                eps1: Some(eps1),
                eps2: Some(eps2),
                dim: Some(dim),
                ..RawModel::default()
            },
        };
        let s = &self.solver;
        let raw = RawScenario {
            name: Some(self.name.clone()),
            seed: Some(self.seed),
            model: Some(model),
            obstacles: Some(RawDensity {
                density: Some(self.obstacles.clone()),
            }),
            initial: Some(RawDensity {
                density: Some(self.initial.clone()),
            }),
            solver: Some(RawSolver {
                n_cells: Some(s.n_cells),
                dt: s.dt,
                t_end: Some(s.t_end),
                output_times: Some(s.output_times.clone()),
                output_every: None,
                modes: Some(s.modes.clone()),
                positivity_floor: Some(s.positivity_floor),
            }),
            stationary: self.stationary.as_ref().map(|st| RawStationary {
                tolerance: Some(st.tolerance),
                max_time: Some(st.max_time),
            }),
            study: self.study.as_ref().map(|st| RawStudy {
                ratios: Some(st.ratios.clone()),
                eps: Some(st.eps.clone()),
            }),
            particles: self.particles.as_ref().map(|p| RawParticles {
                realizations: Some(p.realizations),
                bins: Some(p.bins),
                output_times: Some(p.output_times.clone()),
                dt: p.dt,
                redraw_obstacles: Some(p.redraw_obstacles),
                avoid_obstacle_overlap: Some(p.avoid_obstacle_overlap),
            }),
            metropolis: self.metropolis.as_ref().map(|m| RawMetropolis {
                realizations: Some(m.realizations),
                bins: Some(m.bins),
                burn_in_moves: Some(m.burn_in_moves),
                moves: Some(m.moves),
                target_acceptance: Some(m.target_acceptance),
                avoid_obstacle_overlap: Some(m.avoid_obstacle_overlap),
            }),
        };
        toml::to_string(&raw).expect("scenario serializes")
    }

    pub fn params(&self) -> Result<ModelParams, LabError> {
        self.model.params().map_err(|e| key_err("model", e.to_string()))
    }

    pub fn modes(&self) -> Vec<Mode> {
        self.solver.modes.iter().filter_map(|m| parse_mode(m)).collect()
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D::unit(self.solver.n_cells).expect("validated cell count")
    }

    /// Switches to the sizes used for the published figures.
    pub fn paper_scale(mut self) -> Self {
        self.solver.n_cells = 1000;
        self.solver.dt = Some(1e-6);
        if let Some(p) = &mut self.particles {
            p.realizations = 100_000;
        }
        if let Some(m) = &mut self.metropolis {
            m.realizations = 20_000;
        }
        self
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 3] = ["figure1", "figure2", "figure3"];

fn density_preset(name: &str, obstacles: &str) -> Scenario {
    Scenario {
        name: name.to_string(),
        seed: 0,
        model: ModelSpec::figure_one(),
        obstacles: obstacles.to_string(),
        initial: "uniform".to_string(),
        solver: SolverSpec {
            n_cells: 200,
            dt: None,
            t_end: 0.5,
            output_times: time_grid(0.025, 0.5),
            modes: ["AGF", "GF1", "GF2", "GF3"].map(String::from).to_vec(),
            positivity_floor: 1e-12,
        },
        stationary: Some(StationarySpec {
            tolerance: 1e-8,
            max_time: 50.0,
        }),
        study: None,
        particles: Some(ParticleSpec {
            realizations: 1000,
            bins: 50,
            output_times: vec![0.05, 0.1, 0.2],
            dt: None,
            redraw_obstacles: true,
            avoid_obstacle_overlap: true,
        }),
        metropolis: Some(MetropolisSection {
            realizations: 100,
            bins: 50,
            burn_in_moves: 20_000,
            moves: 100_000,
            target_acceptance: 0.23,
            avoid_obstacle_overlap: true,
        }),
    }
}

/// Desk-scale versions of the three published experiments.
pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "figure1" => Some(density_preset("figure1", "convex")),
        "figure2" => Some(density_preset("figure2", "nonconvex")),
        "figure3" => {
            let mut s = density_preset("figure3", "convex");
            s.solver.modes.clear();
            s.solver.output_times = vec![0.0];
            s.solver.t_end = 0.025;
            s.particles = None;
            s.metropolis = None;
            s.stationary = None;
            s.study = Some(StudySpec {
                ratios: RatioMode::ALL.iter().map(|m| m.ratio()).collect(),
                eps: DEFAULT_EPS_VALUES.to_vec(),
            });
            Some(s)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gets_defaults_with_notice() {
        let v = parse_scenario("").unwrap();
        assert_eq!(v.scenario.solver.n_cells, 1000);
        assert!(v.notices.iter().any(|n| n.contains("solver.n_cells")));
        assert_eq!(v.scenario.solver.output_times.len(), 9);
    }

    #[test]
    fn negative_dt_names_key() {
        let e = parse_scenario("[solver]\nn_cells = 100\ndt = -1e-6\n").unwrap_err();
        match e {
            LabError::Key { key, .. } => assert_eq!(key, "solver.dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse_scenario("name = \"a\"\n\n[solver]\nn_cels = 100\n").unwrap_err();
        match e {
            LabError::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("n_cels"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let e = parse_scenario("seed = 1\nname = \n").unwrap_err();
        assert!(matches!(e, LabError::Parse { line: 2, .. }), "{e:?}");
    }

    #[test]
    fn unnormalized_density_is_rescaled_with_notice() {
        let v = parse_scenario("[obstacles]\ndensity = \"2\"\n[solver]\nn_cells = 10\n").unwrap();
        assert!(v.notices.iter().any(|n| n.contains("mass 2")));
        let (f, mass) = density_field(&v.scenario.obstacles, "obstacles.density", Grid1D::unit(10).unwrap()).unwrap();
        assert!((mass - 2.0).abs() < 1e-12);
        assert!((f.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preset_density_masses() {
        let convex = density_mass(&density_expr("convex", "b").unwrap(), "b").unwrap();
        assert!((convex - 1.0).abs() < 1e-14);
        let nonconvex = density_mass(&density_expr("nonconvex", "b").unwrap(), "b").unwrap();
        // ∫1.2(x²+3/4) = 1, plus 0.12 ∫ sin(20x)(x²+3/4), which is odd and vanishes
        assert!((nonconvex - 1.0).abs() < 1e-12, "{nonconvex}");
    }

    #[test]
    fn negative_density_rejected() {
        let e = parse_scenario("[obstacles]\ndensity = \"x\"\n").unwrap_err();
        assert!(matches!(e, LabError::Key { ref key, .. } if key == "obstacles.density"));
    }

    #[test]
    fn hash_tracks_semantic_content() {
        let a = parse_scenario("name = \"a\"\n[solver]\nn_cells = 100\noutput_every = 0.05\nt_end = 0.1\n").unwrap();
        let b = parse_scenario("name = \"b\"\n[solver]\nn_cells = 100\noutput_times = [0.0, 0.05, 0.1]\nt_end = 0.1\n")
            .unwrap();
        assert_eq!(a.scenario.hash(), b.scenario.hash());
        let c = parse_scenario("[solver]\nn_cells = 101\noutput_every = 0.05\nt_end = 0.1\n").unwrap();
        assert_ne!(a.scenario.hash(), c.scenario.hash());
        let d = parse_scenario("seed = 3\n[solver]\nn_cells = 100\noutput_every = 0.05\nt_end = 0.1\n").unwrap();
        assert_ne!(a.scenario.hash(), d.scenario.hash());
    }

    #[test]
    fn written_scenario_round_trips() {
        for name in PRESETS {
            let s = preset(name).unwrap();
            let back = parse_scenario(&s.to_toml()).unwrap();
            assert_eq!(back.scenario, s);
            assert!(back.notices.is_empty());
        }
    }

    #[test]
    fn mode_and_ratio_labels() {
        assert_eq!(parse_mode("GF2"), Some(Mode::Gradient(EntropyPair::Pair2)));
        assert!(parse_mode("GF4").is_none());
        assert_eq!(parse_ratio(0.1), Some(RatioMode::Tenth));
        assert!(parse_ratio(2.0).is_none());
        assert!(parse_scenario("[solver]\nmodes = [\"AGF\", \"AGF\"]\n").is_err());
    }
}
