//! The `sample`, `verify` and `compare` commands.

use std::path::PathBuf;

use serde::Serialize;

use super::bundle::{self, BundleWriter};
use super::config::{ExperimentConfig, Manifest};
use crate::error::{Result, SlipsError};
use crate::localization::{Discretization, GridKind};
use crate::metrics::{mode_weights, moment_error, random_directions, reference_samples, sliced_tv_with_directions, Bins, MetricRecord, Samples};
use crate::rng::{labelled_seed, seeded};
use crate::sampler::{run_batch, DenoiserMode, SlipsConfig};
use crate::target::GaussianMixture;
use crate::verify::{self, CheckReport, ScalingSettings};

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub grid: Option<GridKind>,
    pub denoiser: Option<DenoiserMode>,
    pub trace: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.output.directory = o.display().to_string();
        }
        if let Some(g) = self.grid {
            cfg.slips.grid = g;
        }
        if let Some(d) = self.denoiser {
            cfg.slips.denoiser = d;
        }
        if self.trace {
            cfg.output.trace = true;
        }
    }
}

/// How a command ended; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Success,
    ChecksFailed,
    PartialFailure,
    TotalFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ChecksFailed => 2,
            Outcome::PartialFailure => 3,
            Outcome::TotalFailure => 4,
        }
    }
}

/// Exit code for an error raised before or while running a command.
pub fn error_exit_code(_err: &SlipsError) -> i32 {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub directory: PathBuf,
    pub files: Vec<String>,
    pub outcome: Outcome,
    pub reports: Vec<CheckReport>,
}

struct Prepared {
    target: GaussianMixture,
    slips: SlipsConfig,
    sigma: f64,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let target = cfg.target()?;
    let slips = cfg.slips_config(&target)?;
    let sigma = slips.resolve_sigma(&target)?;
    Ok(Prepared { target, slips, sigma })
}

fn finish(
    mut writer: BundleWriter,
    command: &str,
    cfg: &ExperimentConfig,
    prep: &Prepared,
    checks: Vec<String>,
    failures: Vec<crate::sampler::RunFailure>,
    outcome: Outcome,
    reports: Vec<CheckReport>,
) -> Result<CommandOutput> {
    let mut files = writer.files().to_vec();
    files.push(bundle::MANIFEST.to_string());
    let manifest = Manifest {
        command: command.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.run.seed,
        sigma: prep.sigma,
        t_final: prep.slips.t_final,
        config: cfg.clone(),
        files: files.clone(),
        checks,
        failures,
    };
    writer.write_json(bundle::MANIFEST, &manifest)?;
    Ok(CommandOutput {
        directory: writer.dir().to_path_buf(),
        files,
        outcome,
        reports,
    })
}

/// Sample metrics: sliced TV against exact draws, mode weights (for mixtures with
/// several components) and moment errors.
pub fn sample_metrics(cfg: &ExperimentConfig, target: &GaussianMixture, samples: &Samples) -> Result<Vec<MetricRecord>> {
    let seed = cfg.run.seed;
    let reference = reference_samples(target, target.dim(), cfg.metrics.n_reference, labelled_seed(seed, "reference"));
    let dirs = random_directions(target.dim(), cfg.metrics.n_projections, &mut seeded(labelled_seed(seed, "projections")));
    let mut out = vec![sliced_tv_with_directions(samples, &reference, &dirs, Bins::FreedmanDiaconis)?];
    if target.means().len() >= 2 {
        out.push(mode_weights(samples, target.means())?);
    }
    out.push(moment_error(samples, target)?);
    Ok(out)
}

/// Runs the batch and writes samples, optional trace, metrics and manifest.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let prep = prepare(cfg)?;
    let d = prep.target.dim();
    let batch = run_batch(&prep.target, &prep.slips, cfg.run.n_runs, cfg.run.workers, cfg.output.trace)?;
    let mut writer = BundleWriter::create(&PathBuf::from(&cfg.output.directory))?;
    writer.write_text(bundle::SAMPLES, &bundle::samples_csv(&batch.runs, d))?;
    if cfg.output.trace {
        writer.write_text(bundle::TRACE, &bundle::trace_csv(&batch.runs, d))?;
    }
    let outcome = if batch.runs.is_empty() {
        Outcome::TotalFailure
    } else if batch.failures.is_empty() {
        Outcome::Success
    } else {
        Outcome::PartialFailure
    };
    if !batch.runs.is_empty() {
        let samples = Samples::from_rows(&batch.samples())?;
        writer.write_json(bundle::METRICS, &sample_metrics(cfg, &prep.target, &samples)?)?;
    }
    finish(writer, "sample", cfg, &prep, Vec::new(), batch.failures, outcome, Vec::new())
}

/// Names accepted by [`cmd_verify`], in suite order.
pub const CHECK_NAMES: [&str; 8] = [
    "martingale",
    "covariance-identity",
    "trace-decreasing",
    "grid-optimality",
    "information-bound",
    "tweedie",
    "schedule-comparison",
    "dimension-scaling",
];

/// Selected check names: the arguments, else `verify.checks`, else the whole suite.
pub fn resolve_checks(cfg: &ExperimentConfig, names: &[String]) -> Result<Vec<String>> {
    let chosen: Vec<String> = if !names.is_empty() {
        names.to_vec()
    } else if !cfg.verify.checks.is_empty() {
        cfg.verify.checks.clone()
    } else {
        CHECK_NAMES.iter().map(|s| s.to_string()).collect()
    };
    for n in &chosen {
        if !CHECK_NAMES.contains(&n.as_str()) {
            return Err(SlipsError::Config(format!(
                "unknown check \"{n}\"; available: {}",
                CHECK_NAMES.join(", ")
            )));
        }
    }
    Ok(chosen)
}

fn run_check(name: &str, cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<CheckReport>> {
    let v = &cfg.verify;
    let seed = labelled_seed(cfg.run.seed, name);
    let (g, sigma) = (&prep.target, prep.sigma);
    Ok(match name {
        "martingale" => vec![verify::check_martingale(g, sigma, &v.times, v.n_paths, seed)?],
        "covariance-identity" => v
            .pairs
            .iter()
            .enumerate()
            .map(|(i, [s, t])| verify::check_covariance_identity(g, sigma, *s, *t, v.n_paths, labelled_seed(seed, &i.to_string())))
            .collect::<Result<_>>()?,
        "trace-decreasing" => vec![verify::check_trace_decreasing(g, sigma, &v.times, v.n_paths, seed)?],
        "grid-optimality" => vec![verify::check_grid_optimality(v.grid_t0, v.grid_t_final, v.grid_k, v.grid_restarts, seed)?],
        "information-bound" => vec![verify::check_information_bound(&g.marginal(0)?, sigma, &v.info_t_values, crate::quadrature::TV_NODES)?],
        "tweedie" => vec![verify::check_tweedie(&g.marginal(0)?, sigma, &v.tweedie_t_values, v.tweedie_points, 1e-4)?],
        "schedule-comparison" => {
            let ks = if cfg.compare.ks.is_empty() { vec![prep.slips.k] } else { cfg.compare.ks.clone() };
            let n_runs = cfg.compare.n_runs.unwrap_or(cfg.run.n_runs);
            vec![verify::compare_schedules(g, &prep.slips, &ks, n_runs, cfg.compare.n_reference, cfg.run.workers)?.report]
        }
        "dimension-scaling" => {
            let settings = ScalingSettings {
                t0: prep.slips.t0,
                k_base: v.scaling_k_base,
                n_runs: v.scaling_n_runs,
                n_reference: v.scaling_n_reference,
                workers: cfg.run.workers,
                seed,
                ..ScalingSettings::default()
            };
            vec![verify::check_dimension_scaling(v.scaling_eps, &v.scaling_dims, &settings)?.0]
        }
        other => return Err(SlipsError::Config(format!("unknown check \"{other}\""))),
    })
}

/// Runs the selected checks and writes their reports; fails the outcome if any check fails.
pub fn cmd_verify(cfg: &ExperimentConfig, names: &[String]) -> Result<CommandOutput> {
    let prep = prepare(cfg)?;
    let chosen = resolve_checks(cfg, names)?;
    let mut reports = Vec::new();
    for name in &chosen {
        reports.extend(run_check(name, cfg, &prep)?);
    }
    let mut writer = BundleWriter::create(&PathBuf::from(&cfg.output.directory))?;
    writer.write_json(bundle::CHECKS, &reports)?;
    let outcome = if reports.iter().all(|r| r.passed) { Outcome::Success } else { Outcome::ChecksFailed };
    finish(writer, "verify", cfg, &prep, chosen, Vec::new(), outcome, reports)
}

/// Log-SNR against uniform grids: ensemble sliced TV per `K`, plus discretization
/// constants over a sweep of `T / t0`.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let prep = prepare(cfg)?;
    let ks = if cfg.compare.ks.is_empty() { vec![prep.slips.k] } else { cfg.compare.ks.clone() };
    let n_runs = cfg.compare.n_runs.unwrap_or(cfg.run.n_runs);
    let cmp = verify::compare_schedules(&prep.target, &prep.slips, &ks, n_runs, cfg.compare.n_reference, cfg.run.workers)?;

    let mut table = String::from("grid,k,t0,t_final,c_disc,sliced_tv,std_error,n_runs\n");
    for r in &cmp.rows {
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.grid, r.k, r.t0, r.t_final, r.c_disc, r.sliced_tv, r.std_error, r.n_runs
        ));
    }
    let mut sweep = String::from("t_ratio,k,c_disc_log_snr,c_disc_uniform,uniform_over_log_snr\n");
    for &ratio in &cfg.compare.c_disc_ratios {
        for &k in &ks {
            let t0 = prep.slips.t0;
            let log = Discretization::log_snr(t0, t0 * ratio, k)?.c_disc();
            let uni = Discretization::uniform(t0, t0 * ratio, k)?.c_disc();
            sweep.push_str(&format!("{ratio},{k},{log},{uni},{}\n", uni / log));
        }
    }
    let mut writer = BundleWriter::create(&PathBuf::from(&cfg.output.directory))?;
    writer.write_text(bundle::COMPARE, &table)?;
    writer.write_text(bundle::C_DISC, &sweep)?;
    writer.write_json(bundle::CHECKS, &[&cmp.report])?;
    let outcome = if cmp.report.passed { Outcome::Success } else { Outcome::ChecksFailed };
    finish(writer, "compare", cfg, &prep, vec!["schedule-comparison".into()], Vec::new(), outcome, vec![cmp.report])
}
