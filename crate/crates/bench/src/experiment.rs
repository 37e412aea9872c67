//! Running one experiment: target construction, replicates, aggregation.

use std::path::Path;
use std::time::Instant;

use lambda_family::divergence::renyi_divergence_closed;
use lambda_family::inference::{em_init, em_run, log_likelihood, vi_exact_escort, vi_plain_mala, vi_scaled_mala, MixtureModel, OnlineMle, VIIterate};
use lambda_family::numerics::{spd_with_condition, uniform_box, SeededRng};
use lambda_family::samplers::StudentTarget;
use lambda_family::student::{sample, sample_one, StudentParams};
use lambda_family::Error as CoreError;
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Scenario};
use crate::error::{io_err, BenchError, Result};
use crate::fig1;
use crate::record::{write_records, RunRecord};
use crate::summary::{Abort, Summary};

/// Stream index reserved for the experiment's fixed target; replicates use `0..n`.
const TARGET_STREAM: u32 = u32::MAX;

/// Held-out sample size for the online-MLE metric.
pub const HOLDOUT_SIZE: usize = 1000;

/// Mixture weights and centres of the synthetic EM setting.
pub const MIXTURE_WEIGHTS: [f64; 4] = [0.4, 0.1, 0.2, 0.3];
pub const MIXTURE_CENTRES: [[f64; 2]; 4] = [[10.0, 10.0], [-10.0, 10.0], [-10.0, -10.0], [10.0, -10.0]];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Fill `wall_ns`; off by default so outputs are byte-identical across runs.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Target of the VI and MLE scenarios: `μ ~ U[-1,1]^d`, `Σ` with condition `κ`.
///
/// Drawn once per experiment from the seed, so every family and algorithm
/// run with the same seed and `(d, κ)` sees the same location and scale.
pub fn experiment_target(config: &ExperimentConfig) -> Result<StudentParams> {
    let mut rng = SeededRng::new(config.seed).stream(TARGET_STREAM, 0);
    let mu = uniform_box(config.d, -1.0, 1.0, &mut rng);
    let sigma = spd_with_condition(config.d, config.kappa, &mut rng)?;
    Ok(StudentParams::new(config.nu_target, mu, sigma)?)
}

/// Data-generating mixture of the EM scenario.
pub fn experiment_mixture(config: &ExperimentConfig) -> Result<MixtureModel> {
    let mut rng = SeededRng::new(config.seed).stream(TARGET_STREAM, 0);
    let components = MIXTURE_CENTRES
        .iter()
        .map(|c| StudentParams::new(config.nu_target, DVector::from_row_slice(c), spd_with_condition(2, config.kappa, &mut rng)?))
        .collect::<lambda_family::Result<Vec<_>>>()?;
    Ok(MixtureModel::new(MIXTURE_WEIGHTS.to_vec(), components)?)
}

/// Short reason code for a replicate abort.
pub fn reason_code(e: &CoreError) -> &'static str {
    match e {
        CoreError::DimensionMismatch { .. } => "dimension_mismatch",
        CoreError::NotPositiveDefinite { .. } => "not_positive_definite",
        CoreError::NonPdMoments { .. } => "non_pd_moments",
        CoreError::DomainViolation { .. } => "domain_violation",
        CoreError::Incompatible { .. } => "incompatible",
        CoreError::EntropyDivergent { .. } => "entropy_divergent",
        CoreError::DivergentIntegral(_) => "divergent_integral",
        CoreError::DegenerateWeights { .. } => "degenerate_weights",
        CoreError::GaussianChart => "gaussian_chart",
        CoreError::InvalidArgument(_) => "invalid_argument",
    }
}

enum Problem {
    Student(StudentParams),
    Mixture(MixtureModel),
}

fn vi_records(target: &StudentParams, iterates: &[VIIterate], rep: u32) -> lambda_family::Result<Vec<RunRecord>> {
    iterates
        .iter()
        .enumerate()
        .map(|(k, it)| {
            Ok(RunRecord {
                replicate: rep,
                iteration: k as u32,
                metric: renyi_divergence_closed(target, &it.params)?.value,
                acceptance: it.acceptance_rate,
                wall_ns: 0,
            })
        })
        .collect()
}

fn mean_log_likelihood(q: &StudentParams, data: &[DVector<f64>]) -> lambda_family::Result<f64> {
    Ok(log_likelihood(q, data)? / data.len() as f64)
}

fn run_replicate(config: &ExperimentConfig, problem: &Problem, rep: u32) -> lambda_family::Result<Vec<RunRecord>> {
    let mut rng = SeededRng::new(config.seed).replicate(rep);
    let n = config.samples_per_iter();
    let iters = config.n_iters;
    match (config.scenario, problem) {
        (Scenario::ViExact, Problem::Student(target)) => {
            let its = vi_exact_escort(target, config.nu_family, n, iters, &mut rng)?;
            vi_records(target, &its, rep)
        }
        (Scenario::ViMala, Problem::Student(target)) => {
            let its = vi_plain_mala(&StudentTarget::new(target.clone()), config.nu_family, n, iters, &mut rng)?;
            vi_records(target, &its, rep)
        }
        (Scenario::ViScaledMala, Problem::Student(target)) => {
            let its = vi_scaled_mala(&StudentTarget::new(target.clone()), config.nu_family, n, iters, &mut rng)?;
            vi_records(target, &its, rep)
        }
        (Scenario::MleOnline, Problem::Student(target)) => {
            let holdout = sample(target, HOLDOUT_SIZE, &mut rng)?;
            let mut mle = OnlineMle::new(config.nu_family, StudentParams::standard(config.nu_family, config.d)?)?;
            let mut out = Vec::with_capacity(iters + 1);
            let record = |k: usize, q: &StudentParams| -> lambda_family::Result<RunRecord> {
                Ok(RunRecord { replicate: rep, iteration: k as u32, metric: mean_log_likelihood(q, &holdout)?, acceptance: None, wall_ns: 0 })
            };
            out.push(record(0, mle.params())?);
            for k in 1..=iters {
                for _ in 0..n {
                    mle.push(&sample_one(target, &mut rng))?;
                }
                out.push(record(k, mle.params())?);
            }
            Ok(out)
        }
        (Scenario::EmMixture, Problem::Mixture(truth)) => {
            let data = truth.sample(n, &mut rng);
            let init = em_init(config.nu_family, 2, truth.n_components(), &mut rng)?;
            let (_, lls) = em_run(&init, &data, iters)?;
            Ok(lls
                .into_iter()
                .enumerate()
                .map(|(k, ll)| RunRecord { replicate: rep, iteration: k as u32, metric: ll, acceptance: None, wall_ns: 0 })
                .collect())
        }
        _ => unreachable!("problem built for a different scenario"),
    }
}

/// Runs every replicate in parallel and aggregates; nothing is written.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    config.validate()?;
    let problem = match config.scenario {
        Scenario::Fig1 => return Err(BenchError::Config("fig1 produces curves, not run records".into())),
        Scenario::EmMixture => Problem::Mixture(experiment_mixture(config)?),
        _ => Problem::Student(experiment_target(config)?),
    };
    let results: Vec<(u32, lambda_family::Result<Vec<RunRecord>>, u64)> = (0..config.n_replicates as u32)
        .into_par_iter()
        .map(|rep| {
            let start = Instant::now();
            let r = run_replicate(config, &problem, rep);
            (rep, r, start.elapsed().as_nanos() as u64)
        })
        .collect();
    let mut records = Vec::new();
    let mut aborts = Vec::new();
    for (rep, r, ns) in results {
        match r {
            Ok(mut recs) => {
                if opts.timing {
                    recs.iter_mut().for_each(|rec| rec.wall_ns = ns);
                }
                records.extend(recs);
            }
            Err(e) => aborts.push(Abort { replicate: rep, reason: reason_code(&e).into(), message: e.to_string() }),
        }
    }
    let summary = Summary::build(config, &records, aborts);
    Ok(RunOutput { records, summary })
}

/// Runs a config and writes its outputs into `out_dir`.
pub fn execute(config: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<Option<Summary>> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if config.scenario == Scenario::Fig1 {
        fig1::write_curves(out_dir, fig1::DEFAULT_POINTS)?;
        return Ok(None);
    }
    let out = run_experiment(config, opts)?;
    write_records(&out_dir.join("records.csv"), &out.records)?;
    out.summary.write(&out_dir.join("summary.json"))?;
    Ok(Some(out.summary))
}
