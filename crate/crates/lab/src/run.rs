//! End-to-end execution of a scenario into an artifact directory.

use std::path::{Path, PathBuf};

use agf_core::diagnostics::{entropy_of, relative_entropy, EntropySeries};
use agf_core::fvm::{solve, suggest_dt_for, FvmConfig, Mode, Scheme, Trajectory};
use agf_core::model::asymptotic_equilibrium;
use agf_core::particles::{HistogramSpec, MetropolisSpec};
use agf_core::stationary::{equilibrium_newton, stationary_longtime, study_pairs, EquilibriumResult, LongtimeConfig};
use agf_core::{EntropyPair, Field, ModelParams};
use rayon::prelude::*;

use crate::error::LabError;
use crate::output::{num, time_label, Artifacts};
use crate::parallel;
use crate::scenario::{density_field, parse_ratio, Scenario};

/// Command-line adjustments applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
    /// Forces this PDE step even above the stability bound.
    pub override_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub run: String,
    pub pair: &'static str,
    pub lambda_fit: f64,
    pub r_squared: f64,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: Scenario,
    pub hash: String,
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
    pub rates: Vec<RateRow>,
    pub metropolis_acceptance: Option<f64>,
}

fn mode_pair(mode: Mode) -> EntropyPair {
    match mode {
        Mode::Agf => EntropyPair::Pair1,
        Mode::Gradient(p) => p,
    }
}

/// Step for `mode`: the override if given, else the configured step capped
/// by the stability bound.
fn pde_step(
    scenario: &Scenario,
    opts: &RunOptions,
    r0: &Field,
    b: &Field,
    p: &ModelParams,
    mode: Mode,
    notices: &mut Vec<String>,
) -> Result<f64, LabError> {
    let bound = suggest_dt_for(r0, b, p, mode).map_err(LabError::stage("setup"))?;
    Ok(match (opts.override_dt, scenario.solver.dt) {
        (Some(dt), _) => {
            if dt > bound {
                notices.push(format!(
                    "{}: override dt {dt} exceeds the stability bound {bound}",
                    mode.label()
                ));
            }
            dt
        }
        (None, Some(dt)) if dt > bound => {
            notices.push(format!(
                "{}: solver.dt = {dt} exceeds the stability bound {bound}; using {bound} (pass --override-dt to force)",
                mode.label()
            ));
            bound
        }
        (None, Some(dt)) => dt,
        (None, None) => bound,
    })
}

struct References {
    r_star: Option<Field>,
    equilibria: Vec<(EntropyPair, EquilibriumResult)>,
}

impl References {
    fn for_mode(&self, mode: Mode) -> Option<&Field> {
        match mode {
            Mode::Agf => self.r_star.as_ref(),
            Mode::Gradient(p) => self.equilibria.iter().find(|(q, _)| *q == p).map(|(_, e)| &e.r_inf),
        }
    }
}

fn entropy_rows(
    traj: &Trajectory,
    reference: &Field,
    b: &Field,
    p: &ModelParams,
) -> agf_core::Result<Vec<Vec<String>>> {
    let mut rows = Vec::with_capacity(traj.times.len());
    for (&t, r) in traj.times.iter().zip(&traj.states) {
        let e1 = entropy_of(EntropyPair::Pair1, r, b, p)?;
        let e2 = entropy_of(EntropyPair::Pair2, r, b, p)?;
        let s1 = relative_entropy(EntropyPair::Pair1, r, reference, b, p)?.value;
        let s2 = relative_entropy(EntropyPair::Pair2, r, reference, b, p)?.value;
        rows.push(vec![
            num(t),
            num(e1),
            num(e2),
            num(s1),
            num(s2),
            num(r.mass()),
            num(r.min()),
        ]);
    }
    Ok(rows)
}

fn histogram_rows(centers: &[f64], mean: &[f64], stderr: &[f64]) -> Vec<Vec<String>> {
    centers
        .iter()
        .zip(mean)
        .zip(stderr)
        .map(|((&x, &m), &s)| vec![num(x), num(m), num(s)])
        .collect()
}

fn kv(key: &str, value: impl ToString) -> Vec<String> {
    vec![key.to_string(), value.to_string()]
}

/// Runs every stage the scenario enables and writes its artifacts into
/// `out`. All files are written from the calling thread.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions, out: &Path) -> Result<RunReport, LabError> {
    let mut scenario = scenario.clone();
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    let hash = scenario.hash();
    let name = scenario.name.clone();
    let mut notices = Vec::new();
    let mut art = Artifacts::create(out, &name, &hash)?;
    art.text("scenario.toml", &scenario.to_toml())?;

    // setup
    let p = scenario.params()?;
    let grid = scenario.grid();
    let (b, b_mass) = density_field(&scenario.obstacles, "obstacles.density", grid)?;
    let (r0, r_mass) = density_field(&scenario.initial, "initial.density", grid)?;
    for (what, m) in [("obstacle", b_mass), ("initial", r_mass)] {
        if (m - 1.0).abs() > 1e-12 {
            notices.push(format!("{what} density normalized by factor {m}"));
        }
    }
    let modes = scenario.modes();

    // stationary states and equilibria
    let need_star = scenario.stationary.is_some() || modes.contains(&Mode::Agf);
    let refs = if need_star || !modes.is_empty() {
        let lt = scenario
            .stationary
            .as_ref()
            .map_or_else(LongtimeConfig::default, |s| LongtimeConfig {
                tolerance: s.tolerance,
                max_time: s.max_time,
                positivity_floor: scenario.solver.positivity_floor,
                ..Default::default()
            });
        let r_star = if need_star {
            let res = stationary_longtime(&b, &p, &lt).map_err(LabError::stage("stationary"))?;
            log::info!("stationary state reached at t = {} ({} steps)", res.t, res.steps);
            Some(res.r_star)
        } else {
            None
        };
        let equilibria = study_pairs()
            .into_iter()
            .map(|pair| equilibrium_newton(pair, &b, &p).map(|e| (pair, e)))
            .collect::<agf_core::Result<Vec<_>>>()
            .map_err(LabError::stage("equilibrium"))?;
        References { r_star, equilibria }
    } else {
        References {
            r_star: None,
            equilibria: Vec::new(),
        }
    };
    if !refs.equilibria.is_empty() {
        let x: Vec<f64> = grid.centers().collect();
        let asym = asymptotic_equilibrium(&b, &p);
        let mut header = vec!["x", "b", "r_asymptotic", "r_inf_1", "r_inf_2", "r_inf_3"];
        let mut cols: Vec<&[f64]> = vec![&x, b.values(), asym.values()];
        cols.extend(refs.equilibria.iter().map(|(_, e)| e.r_inf.values()));
        if let Some(s) = &refs.r_star {
            header.push("r_star");
            cols.push(s.values());
        }
        art.columns(&format!("{name}_equilibria.csv"), &header, &cols)?;
        let rows: Vec<Vec<String>> = refs
            .equilibria
            .iter()
            .map(|(pair, e)| {
                vec![
                    pair.label().to_string(),
                    num(e.chi),
                    e.newton_iters.to_string(),
                    num(e.residual),
                ]
            })
            .collect();
        art.table(
            &format!("{name}_newton.csv"),
            &["pair", "chi", "iterations", "residual"],
            &rows,
        )?;
    }

    // time-dependent PDE runs
    let mut steps = Vec::with_capacity(modes.len());
    for &mode in &modes {
        steps.push(pde_step(&scenario, opts, &r0, &b, &p, mode, &mut notices)?);
    }
    let runs: Vec<Trajectory> = modes
        .par_iter()
        .zip(&steps)
        .map(|(&mode, &dt)| {
            let cfg = FvmConfig {
                n_cells: grid.n_cells(),
                dt,
                t_end: scenario.solver.t_end,
                output_times: scenario.solver.output_times.clone(),
                scheme: Scheme::ExplicitRk,
                positivity_floor: scenario.solver.positivity_floor,
                tracked: Vec::new(),
                diagnostics_every: 1000,
            };
            solve(&r0, &b, &p, mode, &cfg)
        })
        .collect::<agf_core::Result<_>>()
        .map_err(LabError::stage("pde"))?;

    let x: Vec<f64> = grid.centers().collect();
    let mut rates = Vec::new();
    for (traj, dt) in runs.iter().zip(&steps) {
        let label = format!("{name}_{}", traj.mode.label());
        log::info!(
            "{label}: {} steps of {dt}, {} floor events",
            traj.step_count,
            traj.floor_events
        );
        if traj.floor_events > 0 {
            notices.push(format!("{label}: {} positivity floor events", traj.floor_events));
        }
        for (&t, r) in traj.times.iter().zip(&traj.states) {
            art.columns(
                &format!("{label}_t{}.csv", time_label(t)),
                &["x", "r"],
                &[&x, r.values()],
            )?;
        }
        let Some(reference) = refs.for_mode(traj.mode) else {
            continue;
        };
        let rows = entropy_rows(traj, reference, &b, &p).map_err(LabError::stage("diagnostics"))?;
        art.table(
            &format!("{label}_entropy.csv"),
            &["t", "E1", "E2", "E_star_1", "E_star_2", "mass", "min_r"],
            &rows,
        )?;
        let pair = mode_pair(traj.mode);
        let series = EntropySeries::from_states(pair, &traj.times, &traj.states, reference, &b, &p)
            .map_err(LabError::stage("diagnostics"))?;
        let (lambda_fit, r_squared) = match series.fit_decay_rate() {
            Ok(fit) => (fit.rate, fit.r_squared),
            Err(e) => {
                notices.push(format!("{label}: no decay rate ({e})"));
                (f64::NAN, f64::NAN)
            }
        };
        rates.push(RateRow {
            run: label,
            pair: pair.label(),
            lambda_fit,
            r_squared,
        });
    }
    if !rates.is_empty() {
        let rows: Vec<Vec<String>> = rates
            .iter()
            .map(|r| vec![r.run.clone(), r.pair.to_string(), num(r.lambda_fit), num(r.r_squared)])
            .collect();
        art.table(
            &format!("{name}_rates.csv"),
            &["scenario", "pair", "lambda_fit", "r2"],
            &rows,
        )?;
    }

    // error scaling study
    if let Some(study) = &scenario.study {
        let lt = LongtimeConfig {
            tolerance: scenario.stationary.as_ref().map_or(1e-10, |s| s.tolerance),
            ..Default::default()
        };
        let mut slope_rows = Vec::new();
        for &ratio in &study.ratios {
            let mode = parse_ratio(ratio).expect("validated ratio");
            let res = parallel::error_scaling_study(mode, &study.eps, &b, &lt);
            let mut rows = Vec::new();
            for row in &res.rows {
                match &row.errors {
                    Ok(e) => rows.push(vec![num(row.eps), num(e[0]), num(e[1]), num(e[2])]),
                    Err(err) => notices.push(format!("study {} eps={}: {err}", mode.label(), row.eps)),
                }
            }
            art.table(
                &format!("{name}_study_{}.csv", mode.label()),
                &["eps", "err_pair1", "err_pair2", "err_pair3"],
                &rows,
            )?;
            for (pair, fit) in study_pairs().iter().zip(&res.slopes) {
                let (s, r2) = fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r_squared));
                slope_rows.push(vec![
                    mode.label().to_string(),
                    pair.label().to_string(),
                    num(s),
                    num(r2),
                ]);
            }
        }
        art.table(
            &format!("{name}_slopes.csv"),
            &["ratio", "pair", "slope", "r2"],
            &slope_rows,
        )?;
    }

    // stochastic particle dynamics
    if let Some(ps) = &scenario.particles {
        let spec = HistogramSpec {
            n_bins: ps.bins,
            realizations: ps.realizations,
            output_times: ps.output_times.clone(),
            dt: ps.dt,
            redraw_obstacles: ps.redraw_obstacles,
            avoid_obstacle_overlap: ps.avoid_obstacle_overlap,
        };
        let h = parallel::simulate_ensemble(&p, &b, &spec, &r0, scenario.seed).map_err(LabError::stage("particles"))?;
        for (k, &t) in h.times.iter().enumerate() {
            art.table(
                &format!("{name}_sde_t{}.csv", time_label(t)),
                &["x", "mean_density", "stderr"],
                &histogram_rows(&h.bin_centers, &h.mean[k], &h.stderr[k]),
            )?;
        }
        let meta = vec![
            kv("master_seed", scenario.seed),
            kv("realizations", h.realizations),
            kv("dt", num(spec.step(&p))),
            kv("bins", ps.bins),
            kv("redraw_obstacles", ps.redraw_obstacles),
            kv("avoid_obstacle_overlap", ps.avoid_obstacle_overlap),
        ];
        art.table(&format!("{name}_sde_meta.csv"), &["key", "value"], &meta)?;
    }

    let mut metropolis_acceptance = None;
    if let Some(ms) = &scenario.metropolis {
        let spec = MetropolisSpec {
            n_bins: ms.bins,
            realizations: ms.realizations,
            burn_in_moves: ms.burn_in_moves,
            moves: ms.moves,
            target_acceptance: ms.target_acceptance,
            avoid_obstacle_overlap: ms.avoid_obstacle_overlap,
            ..Default::default()
        };
        let res =
            parallel::metropolis_stationary(&p, &b, &spec, scenario.seed).map_err(LabError::stage("metropolis"))?;
        let h = &res.histogram;
        art.table(
            &format!("{name}_mh.csv"),
            &["x", "mean_density", "stderr"],
            &histogram_rows(&h.bin_centers, &h.mean[0], &h.stderr[0]),
        )?;
        let meta = vec![
            kv("master_seed", scenario.seed),
            kv("realizations", h.realizations),
            kv("burn_in_moves", ms.burn_in_moves),
            kv("moves", ms.moves),
            kv("target_acceptance", num(ms.target_acceptance)),
            kv("acceptance", num(res.acceptance)),
            kv("proposal_std", num(res.proposal_std)),
        ];
        art.table(&format!("{name}_mh_meta.csv"), &["key", "value"], &meta)?;
        metropolis_acceptance = Some(res.acceptance);
    }

    if !notices.is_empty() {
        let rows: Vec<Vec<String>> = notices.iter().map(|n| vec![n.clone()]).collect();
        art.table(&format!("{name}_notices.csv"), &["notice"], &rows)?;
    }
    for n in &notices {
        log::warn!("{n}");
    }
    Ok(RunReport {
        scenario,
        hash,
        files: art.into_files(),
        notices,
        rates,
        metropolis_acceptance,
    })
}
