//! Hard-core red disks diffusing among fixed obstacle disks in the square
//! `[-0.5, 0.5]²`: obstacle placement, Euler-Maruyama dynamics with
//! whole-move rejection, ensemble histograms and a Metropolis-Hastings
//! sampler of the stationary state.
//!
//! Random streams: realization `k` of a run with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` on stream `k`. Obstacles shared across
//! realizations come from stream [`SHARED_OBSTACLE_STREAM`].

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};
use crate::model::{asymptotic_equilibrium, ModelParams};

pub type Point = [f64; 2];

const LO: f64 = -0.5;
const HI: f64 = 0.5;

/// Stream used for obstacles when they are not redrawn per realization.
pub const SHARED_OBSTACLE_STREAM: u64 = u64::MAX;

/// Rejection draws allowed per placed particle.
const ATTEMPTS_PER_PARTICLE: usize = 100_000;

/// Random stream of realization `index`.
pub fn realization_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn inside(p: Point) -> bool {
    (LO..=HI).contains(&p[0]) && (LO..=HI).contains(&p[1])
}

fn dist2(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

fn cells_per_side(size: f64) -> usize {
    if size > 0.0 {
        ((HI - LO) / size).floor().clamp(1.0, 256.0) as usize
    } else {
        256
    }
}

fn coord(n_side: usize, v: f64) -> usize {
    // truncation is floor for the positive branch
    let s = (v - LO) * n_side as f64;
    if s <= 0.0 {
        0
    } else {
        (s as usize).min(n_side - 1)
    }
}

/// Cell ranges covering the disk of radius `reach` around `p`.
fn cover(n_side: usize, p: Point, reach: f64) -> (usize, usize, usize, usize) {
    (
        coord(n_side, p[0] - reach),
        coord(n_side, p[0] + reach),
        coord(n_side, p[1] - reach),
        coord(n_side, p[1] + reach),
    )
}

/// Uniform bucket grid over the domain holding indices of movable points.
#[derive(Debug, Clone)]
struct Buckets {
    n_side: usize,
    cells: Vec<Vec<u32>>,
}

impl Buckets {
    fn new(cell_size: f64) -> Self {
        let n_side = cells_per_side(cell_size);
        Buckets {
            n_side,
            cells: vec![Vec::new(); n_side * n_side],
        }
    }

    fn cell(&self, p: Point) -> usize {
        coord(self.n_side, p[1]) * self.n_side + coord(self.n_side, p[0])
    }

    fn insert(&mut self, index: usize, p: Point) {
        let c = self.cell(p);
        self.cells[c].push(index as u32);
    }

    fn relocate(&mut self, index: usize, from: Point, to: Point) {
        let (a, b) = (self.cell(from), self.cell(to));
        if a != b {
            let bucket = &mut self.cells[a];
            if let Some(k) = bucket.iter().position(|&j| j as usize == index) {
                bucket.swap_remove(k);
            }
            self.cells[b].push(index as u32);
        }
    }

    /// Whether any indexed point other than `skip` lies closer than `reach`
    /// to `p`.
    fn any_within(&self, p: Point, points: &[Point], reach: f64, skip: Option<usize>) -> bool {
        let r2 = reach * reach;
        let (x0, x1, y0, y1) = cover(self.n_side, p, reach);
        for y in y0..=y1 {
            for cell in &self.cells[y * self.n_side + x0..=y * self.n_side + x1] {
                for &j in cell {
                    let j = j as usize;
                    if Some(j) != skip && dist2(p, points[j]) < r2 {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Immutable points stored contiguously cell by cell.
#[derive(Debug, Clone)]
struct PackedCells {
    n_side: usize,
    start: Vec<u32>,
    points: Vec<Point>,
}

impl PackedCells {
    fn new(points: &[Point], cell_size: f64) -> Self {
        let n_side = cells_per_side(cell_size);
        let cell = |p: Point| coord(n_side, p[1]) * n_side + coord(n_side, p[0]);
        let mut start = vec![0u32; n_side * n_side + 1];
        for &p in points {
            start[cell(p) + 1] += 1;
        }
        for k in 1..start.len() {
            start[k] += start[k - 1];
        }
        let mut fill = start.clone();
        let mut packed = vec![[0.0; 2]; points.len()];
        for &p in points {
            let c = cell(p);
            packed[fill[c] as usize] = p;
            fill[c] += 1;
        }
        PackedCells {
            n_side,
            start,
            points: packed,
        }
    }

    fn any_within(&self, p: Point, reach: f64) -> bool {
        if self.points.is_empty() {
            return false;
        }
        let r2 = reach * reach;
        let (x0, x1, y0, y1) = cover(self.n_side, p, reach);
        for y in y0..=y1 {
            let row = y * self.n_side;
            let (a, b) = (self.start[row + x0] as usize, self.start[row + x1 + 1] as usize);
            if self.points[a..b].iter().any(|&q| dist2(p, q) < r2) {
                return true;
            }
        }
        false
    }
}

/// Red and obstacle positions with their hard-core diameters.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    red: Vec<Point>,
    obstacles: Vec<Point>,
    diam_red: f64,
    diam_blue: f64,
    pub seed: u64,
    red_cells: Buckets,
    obstacle_cells: PackedCells,
}

impl ParticleEnsemble {
    /// Builds an ensemble, checking every hard-core and wall constraint.
    pub fn new(red: Vec<Point>, obstacles: Vec<Point>, diam_red: f64, diam_blue: f64, seed: u64) -> Result<Self> {
        if !(diam_red >= 0.0 && diam_blue >= 0.0 && diam_red.is_finite() && diam_blue.is_finite()) {
            return Err(Error::invalid("diameters", "must be finite and non-negative"));
        }
        if obstacles.iter().any(|&p| !inside(p)) {
            return Err(Error::invalid("obstacles", "center outside the domain"));
        }
        // two reaches per cell keeps most queries within 2×2 cells
        let size = 2.0 * diam_red.max(0.5 * (diam_red + diam_blue));
        let mut e = ParticleEnsemble {
            red: Vec::new(),
            obstacle_cells: PackedCells::new(&obstacles, size),
            obstacles,
            diam_red,
            diam_blue,
            seed,
            red_cells: Buckets::new(size),
        };
        for p in red {
            if !e.red_position_ok(p, None) {
                return Err(Error::invalid("red", "configuration violates a hard-core constraint"));
            }
            e.push_red(p);
        }
        Ok(e)
    }

    fn push_red(&mut self, p: Point) {
        self.red_cells.insert(self.red.len(), p);
        self.red.push(p);
    }

    pub fn red_positions(&self) -> &[Point] {
        &self.red
    }

    pub fn obstacle_positions(&self) -> &[Point] {
        &self.obstacles
    }

    pub fn diam_red(&self) -> f64 {
        self.diam_red
    }

    pub fn diam_blue(&self) -> f64 {
        self.diam_blue
    }

    /// Red-obstacle contact distance.
    pub fn contact(&self) -> f64 {
        0.5 * (self.diam_red + self.diam_blue)
    }

    /// Whether red particle `skip` (or a new red particle) may sit at `p`.
    pub fn red_position_ok(&self, p: Point, skip: Option<usize>) -> bool {
        let c = self.contact();
        inside(p)
            && !self.obstacle_cells.any_within(p, c)
            && !self.red_cells.any_within(p, &self.red, self.diam_red, skip)
    }

    /// Checks all ensemble invariants by brute force.
    pub fn check_invariants(&self) -> bool {
        let (dr2, c) = (self.diam_red * self.diam_red, self.contact());
        let c2 = c * c;
        self.red.iter().chain(&self.obstacles).all(|&p| inside(p))
            && self.red.iter().enumerate().all(|(i, &p)| {
                self.red[i + 1..].iter().all(|&q| dist2(p, q) >= dr2)
                    && self.obstacles.iter().all(|&o| dist2(p, o) >= c2)
            })
    }

    /// Moves red particle `i` to `to` if allowed; returns whether it moved.
    pub fn try_move(&mut self, i: usize, to: Point) -> bool {
        if !self.red_position_ok(to, Some(i)) {
            return false;
        }
        let from = self.red[i];
        self.red_cells.relocate(i, from, to);
        self.red[i] = to;
        true
    }

    /// One Euler-Maruyama step: every red particle in turn proposes
    /// `X + sqrt(2 dt) ξ` and keeps its position if the proposal violates a
    /// constraint. Returns the number of accepted moves.
    pub fn brownian_step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> usize {
        let s = (2.0 * dt).sqrt();
        let mut accepted = 0;
        for i in 0..self.red.len() {
            let p = self.red[i];
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            if self.try_move(i, [p[0] + s * dx, p[1] + s * dy]) {
                accepted += 1;
            }
        }
        accepted
    }

    /// Density of red particles in `n_bins` bins along `x`, with unit mass.
    pub fn histogram(&self, n_bins: usize) -> Vec<f64> {
        let mut counts = vec![0.0; n_bins];
        self.add_counts(&mut counts);
        let w = (HI - LO) / n_bins as f64;
        let norm = 1.0 / (self.red.len().max(1) as f64 * w);
        counts.iter_mut().for_each(|c| *c *= norm);
        counts
    }

    fn add_counts(&self, counts: &mut [f64]) {
        let n = counts.len();
        for p in &self.red {
            let k = (((p[0] - LO) / (HI - LO)) * n as f64).floor();
            let k = if k <= 0.0 { 0 } else { (k as usize).min(n - 1) };
            counts[k] += 1.0;
        }
    }
}

/// Largest cell value, the rejection envelope of a piecewise-constant
/// density.
fn envelope(density: &Field, name: &'static str) -> Result<f64> {
    if density.values().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid(name, "density must be non-negative"));
    }
    let m = density.max();
    if !(m > 0.0) {
        return Err(Error::invalid(name, "density vanishes identically"));
    }
    Ok(m)
}

/// Draws `x` from the piecewise-constant density by rejection and `y`
/// uniformly.
fn draw_point<R: Rng + ?Sized>(density: &Field, bound: f64, rng: &mut R) -> Point {
    let g = density.grid();
    loop {
        let x = g.x_min() + rng.random::<f64>() * g.length();
        if rng.random::<f64>() * bound < density.values()[g.locate(x)] {
            return [x, LO + rng.random::<f64>() * (HI - LO)];
        }
    }
}

/// I.i.d. obstacle centers with `x` distributed by `b` and `y` uniform.
/// With `avoid_overlap`, draws closer than `diam_blue` to a placed
/// obstacle are redrawn.
pub fn place_obstacles<R: Rng + ?Sized>(
    b: &Field,
    n_blue: usize,
    diam_blue: f64,
    avoid_overlap: bool,
    rng: &mut R,
) -> Result<Vec<Point>> {
    if n_blue == 0 {
        return Ok(Vec::new());
    }
    check_domain(b.grid())?;
    let bound = envelope(b, "b")?;
    let mut placed = Vec::with_capacity(n_blue);
    let mut cells = Buckets::new(diam_blue);
    let budget = ATTEMPTS_PER_PARTICLE * n_blue;
    let mut attempts = 0;
    while placed.len() < n_blue {
        attempts += 1;
        if attempts > budget {
            return Err(Error::RejectionBudget { attempts: budget });
        }
        let p = draw_point(b, bound, rng);
        if avoid_overlap && cells.any_within(p, &placed, diam_blue, None) {
            continue;
        }
        cells.insert(placed.len(), p);
        placed.push(p);
    }
    Ok(placed)
}

fn check_domain(g: &Grid1D) -> Result<()> {
    if (g.x_min() - LO).abs() > 1e-12 || (g.x_max() - HI).abs() > 1e-12 {
        return Err(Error::invalid("grid", "particle densities must live on [-0.5, 0.5]"));
    }
    Ok(())
}

/// Adds `n_red` red particles drawn from `density` (in `x`, uniform in `y`)
/// subject to all hard-core constraints.
pub fn add_reds<R: Rng + ?Sized>(
    ensemble: &mut ParticleEnsemble,
    density: &Field,
    n_red: usize,
    rng: &mut R,
) -> Result<()> {
    if n_red == 0 {
        return Ok(());
    }
    check_domain(density.grid())?;
    let bound = envelope(density, "initial density")?;
    let budget = ATTEMPTS_PER_PARTICLE * n_red;
    let mut attempts = 0;
    let target = ensemble.red.len() + n_red;
    while ensemble.red.len() < target {
        attempts += 1;
        if attempts > budget {
            return Err(Error::RejectionBudget { attempts: budget });
        }
        let p = draw_point(density, bound, rng);
        if ensemble.red_position_ok(p, None) {
            ensemble.push_red(p);
        }
    }
    Ok(())
}

/// Red positions drawn from the first-order stationary density
/// `1 + ε3 (1 − b)` among the given obstacles.
pub fn sample_initial_first_order<R: Rng + ?Sized>(
    b: &Field,
    params: &ModelParams,
    n_red: usize,
    obstacles: Vec<Point>,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let density = asymptotic_equilibrium(b, params);
    let mut e = ParticleEnsemble::new(Vec::new(), obstacles, params.diam_red, params.diam_blue, 0)?;
    add_reds(&mut e, &density, n_red, rng)?;
    Ok(e)
}

/// Histogramming of time-dependent ensemble runs.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSpec {
    pub n_bins: usize,
    pub realizations: usize,
    pub output_times: Vec<f64>,
    /// Euler-Maruyama step; `None` gives `(ϵ_r/2)²/2`.
    pub dt: Option<f64>,
    pub redraw_obstacles: bool,
    pub avoid_obstacle_overlap: bool,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            n_bins: 50,
            realizations: 1000,
            output_times: vec![0.2],
            dt: None,
            redraw_obstacles: true,
            avoid_obstacle_overlap: true,
        }
    }
}

impl HistogramSpec {
    pub fn step(&self, params: &ModelParams) -> f64 {
        self.dt.unwrap_or(0.125 * params.diam_red * params.diam_red)
    }

    fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::invalid("n_bins", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be at least 1"));
        }
        let dt = self.step(params);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.output_times.windows(2).any(|w| w[1] <= w[0])
            || self.output_times.iter().any(|&t| !(t >= 0.0 && t.is_finite()))
        {
            return Err(Error::invalid("output_times", "must be non-negative and increasing"));
        }
        Ok(())
    }
}

/// Mean and standard error of binned densities over realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleHistograms {
    pub times: Vec<f64>,
    pub bin_centers: Vec<f64>,
    /// `mean[k][j]`: output time `k`, bin `j`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub realizations: usize,
}

impl EnsembleHistograms {
    /// Mean histogram at output `k` as a field on the bin grid.
    pub fn field(&self, k: usize) -> Result<Field> {
        Field::from_values(Grid1D::unit(self.bin_centers.len())?, self.mean[k].clone())
    }
}

/// Order-sensitive running sums; adding realizations in index order makes
/// the result independent of how they were computed.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramAccumulator {
    n_bins: usize,
    count: usize,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
}

impl HistogramAccumulator {
    pub fn new(n_times: usize, n_bins: usize) -> Self {
        HistogramAccumulator {
            n_bins,
            count: 0,
            sum: vec![vec![0.0; n_bins]; n_times],
            sum_sq: vec![vec![0.0; n_bins]; n_times],
        }
    }

    pub fn add(&mut self, sample: &[Vec<f64>]) {
        for ((s, q), h) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(sample) {
            for ((sj, qj), &v) in s.iter_mut().zip(q.iter_mut()).zip(h) {
                *sj += v;
                *qj += v * v;
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self, times: Vec<f64>) -> EnsembleHistograms {
        let n = self.count.max(1) as f64;
        let mut mean = Vec::with_capacity(self.sum.len());
        let mut stderr = Vec::with_capacity(self.sum.len());
        for (s, q) in self.sum.iter().zip(&self.sum_sq) {
            let m: Vec<f64> = s.iter().map(|v| v / n).collect();
            let e = q
                .iter()
                .zip(&m)
                .map(|(qj, mj)| {
                    if self.count < 2 {
                        0.0
                    } else {
                        ((qj - n * mj * mj).max(0.0) / (n - 1.0) / n).sqrt()
                    }
                })
                .collect();
            mean.push(m);
            stderr.push(e);
        }
        let w = (HI - LO) / self.n_bins as f64;
        EnsembleHistograms {
            times,
            bin_centers: (0..self.n_bins).map(|j| LO + (j as f64 + 0.5) * w).collect(),
            mean,
            stderr,
            realizations: self.count,
        }
    }
}

fn shared_obstacles(params: &ModelParams, b: &Field, avoid_overlap: bool, master_seed: u64) -> Result<Vec<Point>> {
    let mut rng = realization_rng(master_seed, SHARED_OBSTACLE_STREAM);
    place_obstacles(b, params.n_blue, params.diam_blue, avoid_overlap, &mut rng)
}

/// Context for running single time-dependent realizations.
#[derive(Debug, Clone)]
pub struct EnsembleRun<'a> {
    params: ModelParams,
    b: &'a Field,
    initial: &'a Field,
    spec: &'a HistogramSpec,
    master_seed: u64,
    shared: Option<Vec<Point>>,
    steps: Vec<usize>,
    dt: f64,
}

impl<'a> EnsembleRun<'a> {
    pub fn new(
        params: &ModelParams,
        b: &'a Field,
        initial: &'a Field,
        spec: &'a HistogramSpec,
        master_seed: u64,
    ) -> Result<Self> {
        spec.validate(params)?;
        let dt = spec.step(params);
        let shared = if spec.redraw_obstacles {
            None
        } else {
            Some(shared_obstacles(params, b, spec.avoid_obstacle_overlap, master_seed)?)
        };
        let steps = spec.output_times.iter().map(|t| (t / dt).round() as usize).collect();
        Ok(EnsembleRun {
            params: *params,
            b,
            initial,
            spec,
            master_seed,
            shared,
            steps,
            dt,
        })
    }

    pub fn realizations(&self) -> usize {
        self.spec.realizations
    }

    /// Histograms of realization `index` at every output time.
    pub fn realization(&self, index: usize) -> Result<Vec<Vec<f64>>> {
        let wrap = |e| Error::Realization {
            index,
            source: alloc::boxed::Box::new(e),
        };
        let mut rng = realization_rng(self.master_seed, index as u64);
        let p = &self.params;
        let obstacles = match &self.shared {
            Some(o) => o.clone(),
            None => place_obstacles(
                self.b,
                p.n_blue,
                p.diam_blue,
                self.spec.avoid_obstacle_overlap,
                &mut rng,
            )
            .map_err(wrap)?,
        };
        let mut e =
            ParticleEnsemble::new(Vec::new(), obstacles, p.diam_red, p.diam_blue, self.master_seed).map_err(wrap)?;
        add_reds(&mut e, self.initial, p.n_red, &mut rng).map_err(wrap)?;
        let mut out = Vec::with_capacity(self.steps.len());
        let mut done = 0;
        for &target in &self.steps {
            while done < target {
                e.brownian_step(self.dt, &mut rng);
                done += 1;
            }
            out.push(e.histogram(self.spec.n_bins));
        }
        Ok(out)
    }

    pub fn accumulator(&self) -> HistogramAccumulator {
        HistogramAccumulator::new(self.steps.len(), self.spec.n_bins)
    }

    /// Recorded times, i.e. output times rounded to whole steps.
    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|&s| s as f64 * self.dt).collect()
    }
}

/// Independent realizations of the particle dynamics, each with fresh
/// obstacles (unless shared) and reds drawn from `initial`.
pub fn simulate_ensemble(
    params: &ModelParams,
    b: &Field,
    spec: &HistogramSpec,
    initial: &Field,
    master_seed: u64,
) -> Result<EnsembleHistograms> {
    let run = EnsembleRun::new(params, b, initial, spec, master_seed)?;
    let mut acc = run.accumulator();
    for k in 0..spec.realizations {
        acc.add(&run.realization(k)?);
    }
    Ok(acc.finish(run.times()))
}

/// Settings of the Metropolis-Hastings sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct MetropolisSpec {
    pub n_bins: usize,
    /// Obstacle realizations.
    pub realizations: usize,
    pub burn_in_moves: usize,
    pub moves: usize,
    /// Moves between histogram samples; `None` samples once per sweep.
    pub sample_every: Option<usize>,
    pub target_acceptance: f64,
    pub tune_block: usize,
    pub initial_std: Option<f64>,
    pub avoid_obstacle_overlap: bool,
}

impl Default for MetropolisSpec {
    fn default() -> Self {
        MetropolisSpec {
            n_bins: 50,
            realizations: 100,
            burn_in_moves: 20_000,
            moves: 100_000,
            sample_every: None,
            target_acceptance: 0.23,
            tune_block: 500,
            initial_std: None,
            avoid_obstacle_overlap: true,
        }
    }
}

const MIN_STD: f64 = 1e-9;
const MAX_STD: f64 = 2.0;

/// Output of one Metropolis realization.
#[derive(Debug, Clone, PartialEq)]
pub struct MetropolisSample {
    pub density: Vec<f64>,
    /// Acceptance over the production moves.
    pub acceptance: f64,
    pub proposal_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetropolisResult {
    pub histogram: EnsembleHistograms,
    pub acceptance: f64,
    pub proposal_std: f64,
}

/// Single-particle random-walk Metropolis for the hard-core target: the
/// proposal is symmetric, so a move is accepted exactly when it is feasible.
pub struct Metropolis<'a, R: Rng> {
    ensemble: &'a mut ParticleEnsemble,
    rng: &'a mut R,
    pub std: f64,
}

impl<'a, R: Rng> Metropolis<'a, R> {
    pub fn new(ensemble: &'a mut ParticleEnsemble, rng: &'a mut R, std: f64) -> Self {
        Metropolis { ensemble, rng, std }
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        self.ensemble
    }

    /// One move; returns `Some((particle, old position))` when accepted.
    pub fn step(&mut self) -> Option<(usize, Point)> {
        let n = self.ensemble.red.len();
        if n == 0 {
            return None;
        }
        let i = self.rng.random_range(0..n);
        let p = self.ensemble.red[i];
        let dx: f64 = self.rng.sample(StandardNormal);
        let dy: f64 = self.rng.sample(StandardNormal);
        let to = [p[0] + self.std * dx, p[1] + self.std * dy];
        self.ensemble.try_move(i, to).then_some((i, p))
    }

    /// Stochastic-approximation tuning of the proposal scale: after each
    /// block of moves `log σ += γ_k (a_k − target)` with `γ_k = (k+1)^-0.6`.
    pub fn tune(&mut self, moves: usize, block: usize, target: f64) -> Result<()> {
        let block = block.max(1);
        let mut k = 0;
        let mut done = 0;
        while done < moves {
            let len = block.min(moves - done);
            let accepted = (0..len).filter(|_| self.step().is_some()).count();
            done += len;
            let a = accepted as f64 / len as f64;
            let gain = 1.0 / ((k + 1) as f64).powf(0.6);
            self.std = (self.std.ln() + 2.0 * gain * (a - target)).exp();
            k += 1;
            let stuck_low = self.std <= MIN_STD && a < target;
            let stuck_high = self.std >= MAX_STD && a > target;
            if stuck_low || stuck_high || !self.std.is_finite() {
                return Err(Error::TunerDiverged {
                    acceptance: a,
                    std: self.std,
                });
            }
            self.std = self.std.clamp(MIN_STD, MAX_STD);
        }
        Ok(())
    }
}

/// One obstacle realization of the stationary sampler.
pub fn metropolis_realization(
    params: &ModelParams,
    b: &Field,
    spec: &MetropolisSpec,
    master_seed: u64,
    index: usize,
) -> Result<MetropolisSample> {
    let wrap = |e| Error::Realization {
        index,
        source: alloc::boxed::Box::new(e),
    };
    let mut rng = realization_rng(master_seed, index as u64);
    let obstacles = place_obstacles(
        b,
        params.n_blue,
        params.diam_blue,
        spec.avoid_obstacle_overlap,
        &mut rng,
    )
    .map_err(wrap)?;
    let mut e = sample_initial_first_order(b, params, params.n_red, obstacles, &mut rng).map_err(wrap)?;
    e.seed = master_seed;
    let std0 = spec.initial_std.unwrap_or(params.diam_red.max(1e-3));
    let mut mh = Metropolis::new(&mut e, &mut rng, std0);
    mh.tune(spec.burn_in_moves, spec.tune_block, spec.target_acceptance)
        .map_err(wrap)?;

    let every = spec.sample_every.unwrap_or(params.n_red.max(1)).max(1);
    let mut counts = vec![0.0; spec.n_bins];
    let mut samples = 0usize;
    let mut accepted = 0usize;
    for m in 1..=spec.moves {
        if mh.step().is_some() {
            accepted += 1;
        }
        if m % every == 0 {
            mh.ensemble().add_counts(&mut counts);
            samples += 1;
        }
    }
    if samples == 0 {
        mh.ensemble().add_counts(&mut counts);
        samples = 1;
    }
    let w = (HI - LO) / spec.n_bins as f64;
    let norm = 1.0 / (samples as f64 * params.n_red.max(1) as f64 * w);
    counts.iter_mut().for_each(|c| *c *= norm);
    Ok(MetropolisSample {
        density: counts,
        acceptance: accepted as f64 / spec.moves.max(1) as f64,
        proposal_std: mh.std,
    })
}

/// Collects realization samples in index order.
pub fn combine_metropolis(spec: &MetropolisSpec, samples: &[MetropolisSample]) -> MetropolisResult {
    let mut acc = HistogramAccumulator::new(1, spec.n_bins);
    let (mut a, mut s) = (0.0, 0.0);
    for smp in samples {
        acc.add(core::slice::from_ref(&smp.density));
        a += smp.acceptance;
        s += smp.proposal_std;
    }
    let n = samples.len().max(1) as f64;
    MetropolisResult {
        histogram: acc.finish(vec![f64::INFINITY]),
        acceptance: a / n,
        proposal_std: s / n,
    }
}

/// Stationary histogram by Metropolis-Hastings, averaged over obstacle
/// realizations.
pub fn metropolis_stationary(
    params: &ModelParams,
    b: &Field,
    spec: &MetropolisSpec,
    master_seed: u64,
) -> Result<MetropolisResult> {
    if spec.realizations == 0 || spec.n_bins == 0 {
        return Err(Error::invalid(
            "metropolis",
            "need at least one realization and one bin",
        ));
    }
    let samples = (0..spec.realizations)
        .map(|k| metropolis_realization(params, b, spec, master_seed, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_metropolis(spec, &samples))
}
