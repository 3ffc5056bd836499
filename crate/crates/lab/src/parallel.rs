//! Data-parallel drivers. Realizations and study rows run concurrently;
//! results are always reduced in index order, so output does not depend
//! on the thread count.

use agf_core::particles::{
    combine_metropolis, metropolis_realization, EnsembleHistograms, EnsembleRun, HistogramSpec, MetropolisResult,
    MetropolisSpec,
};
use agf_core::stationary::{study_row, LongtimeConfig, RatioMode, ScalingStudy};
use agf_core::{Field, ModelParams, Result};
use rayon::prelude::*;

const CHUNK: usize = 1024;

/// Parallel counterpart of `simulate_ensemble` with identical output.
pub fn simulate_ensemble(
    params: &ModelParams,
    b: &Field,
    spec: &HistogramSpec,
    initial: &Field,
    master_seed: u64,
) -> Result<EnsembleHistograms> {
    let run = EnsembleRun::new(params, b, initial, spec, master_seed)?;
    let mut acc = run.accumulator();
    let n = run.realizations();
    for start in (0..n).step_by(CHUNK) {
        let batch: Vec<_> = (start..(start + CHUNK).min(n))
            .into_par_iter()
            .map(|k| run.realization(k))
            .collect();
        for sample in batch {
            acc.add(&sample?);
        }
    }
    Ok(acc.finish(run.times()))
}

/// Parallel counterpart of `metropolis_stationary` with identical output.
pub fn metropolis_stationary(
    params: &ModelParams,
    b: &Field,
    spec: &MetropolisSpec,
    master_seed: u64,
) -> Result<MetropolisResult> {
    if spec.realizations == 0 || spec.n_bins == 0 {
        return Err(agf_core::Error::InvalidParameter {
            name: "metropolis",
            reason: "need at least one realization and one bin".into(),
        });
    }
    let samples = (0..spec.realizations)
        .into_par_iter()
        .map(|k| metropolis_realization(params, b, spec, master_seed, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_metropolis(spec, &samples))
}

/// Parallel counterpart of `error_scaling_study`.
pub fn error_scaling_study(ratio: RatioMode, eps_values: &[f64], b: &Field, config: &LongtimeConfig) -> ScalingStudy {
    let rows = eps_values
        .par_iter()
        .map(|&eps| study_row(ratio, eps, b, config))
        .collect();
    ScalingStudy::from_rows(ratio, rows)
}
