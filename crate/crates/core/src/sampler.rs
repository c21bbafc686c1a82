//! The SLIPS driver: Langevin-within-Langevin initialization followed by the
//! Euler-Maruyama recursion
//! `Y_{k+1} = Y_k + delta_k u_hat_{t_k}(Y_k) + sigma sqrt(delta_k) G_k`.
//!
//! Generator draws happen in a fixed order: the initial Gaussian, then per ULA step
//! the inner-chain block followed by the ULA noise, then per main-loop step the
//! inner-chain block followed by `G_k`.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result, SlipsError};
use crate::localization::{sigma_default, tweedie_score, Discretization, GridKind};
use crate::mcmc::{estimate_denoiser, ula_step, ChainStart, MalaSettings};
use crate::rng::stream_rng;
use crate::target::TargetModel;

/// How the denoiser `u_t(y)` is obtained at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserMode {
    /// Ergodic average of a warm-started MALA chain on the posterior.
    Mala,
    /// Closed-form posterior mean supplied by the target.
    Oracle,
}

impl fmt::Display for DenoiserMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenoiserMode::Mala => "mala",
            DenoiserMode::Oracle => "oracle",
        })
    }
}

impl std::str::FromStr for DenoiserMode {
    type Err = SlipsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mala" => Ok(DenoiserMode::Mala),
            "oracle" => Ok(DenoiserMode::Oracle),
            other => Err(SlipsError::Config(format!(
                "unknown denoiser mode `{other}` (expected mala or oracle)"
            ))),
        }
    }
}

/// Noise level: fixed, or `sqrt(R^2 / d)` from the target's variance proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SigmaRepr", into = "SigmaRepr")]
pub enum SigmaSpec {
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SigmaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<SigmaRepr> for SigmaSpec {
    type Error = String;
    fn try_from(r: SigmaRepr) -> std::result::Result<Self, String> {
        match r {
            SigmaRepr::Number(v) => Ok(SigmaSpec::Value(v)),
            SigmaRepr::Text(s) if s == "auto" => Ok(SigmaSpec::Auto),
            SigmaRepr::Text(s) => Err(format!("sigma must be a number or \"auto\", got \"{s}\"")),
        }
    }
}

impl From<SigmaSpec> for SigmaRepr {
    fn from(s: SigmaSpec) -> Self {
        match s {
            SigmaSpec::Auto => SigmaRepr::Text("auto".into()),
            SigmaSpec::Value(v) => SigmaRepr::Number(v),
        }
    }
}

/// Parameters of a SLIPS run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlipsConfig {
    pub t0: f64,
    /// Final time `T`.
    pub t_final: f64,
    /// Number of grid intervals `K`.
    pub k: usize,
    /// Recorded MALA steps per denoiser estimate.
    pub m: usize,
    /// Number of ULA steps in the initialization. They remove the offset between the
    /// centred Gaussian start and the mean of `p_{t0}`.
    pub n_init: usize,
    pub sigma: SigmaSpec,
    pub mala: MalaSettings,
    pub seed: u64,
    pub denoiser_mode: DenoiserMode,
    pub grid: GridKind,
    /// Continue the initialization's inner chain at the first main-loop step
    /// (both target the posterior at `t0`); otherwise start that chain fresh.
    pub warm_start_init: bool,
}

impl Default for SlipsConfig {
    fn default() -> Self {
        Self {
            t0: 0.02,
            t_final: 1000.0,
            k: 200,
            m: 200,
            n_init: 20,
            sigma: SigmaSpec::Auto,
            mala: MalaSettings::default(),
            seed: 0,
            denoiser_mode: DenoiserMode::Mala,
            grid: GridKind::LogSnr,
            warm_start_init: true,
        }
    }
}

impl SlipsConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("t0", self.t0)?;
        if !(self.t_final.is_finite() && self.t_final > self.t0) {
            return Err(SlipsError::Domain(format!(
                "T must exceed t0 ({} <= {})",
                self.t_final, self.t0
            )));
        }
        if self.k == 0 {
            return Err(SlipsError::Domain("K must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(SlipsError::Domain("M must be >= 1".into()));
        }
        if let SigmaSpec::Value(s) = self.sigma {
            ensure_positive("sigma", s)?;
        }
        if self.grid == GridKind::Custom {
            return Err(SlipsError::Domain("SLIPS runs need a log-snr or uniform grid".into()));
        }
        self.mala.validate()
    }

    pub fn discretization(&self) -> Result<Discretization> {
        Discretization::build(self.grid, self.t0, self.t_final, self.k)
    }

    /// Resolves `sigma`; `auto` needs the target's variance proxy.
    pub fn resolve_sigma(&self, target: &dyn TargetModel) -> Result<f64> {
        match self.sigma {
            SigmaSpec::Value(s) => {
                ensure_positive("sigma", s)?;
                Ok(s)
            }
            SigmaSpec::Auto => {
                let r2 = target.variance_proxy().ok_or_else(|| {
                    SlipsError::Unsupported(
                        "sigma = \"auto\" needs a target with a known variance proxy; set sigma explicitly"
                            .into(),
                    )
                })?;
                sigma_default(r2, target.dim())
            }
        }
    }
}

/// Final time reaching signal-to-noise ratio `snr`: `SNR_t = t R^2 / (d sigma^2)`.
pub fn t_final_for_snr(snr: f64, variance_proxy: f64, dim: usize, sigma: f64) -> Result<f64> {
    ensure_positive("snr_target", snr)?;
    ensure_positive("R^2", variance_proxy)?;
    ensure_positive("sigma", sigma)?;
    Ok(snr * dim as f64 * sigma * sigma / variance_proxy)
}

/// One main-loop step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub u_hat: Vec<f64>,
    /// Inner-chain acceptance rate; `None` in oracle mode.
    pub acceptance: Option<f64>,
    /// The standard normal vector `G_k`.
    pub noise: Vec<f64>,
}

/// Output of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: u64,
    /// `Y_{t_K} / t_K`.
    pub sample: Vec<f64>,
    pub sigma: f64,
    pub grid: Vec<f64>,
    /// `Y_{t_0}, ..., Y_{t_K}`; empty when the trace was dropped.
    pub states: Vec<Vec<f64>>,
    /// One record per step; empty when the trace was dropped.
    pub steps: Vec<StepRecord>,
    /// Steps (initialization included) whose inner chain accepted nothing.
    pub all_rejected_steps: usize,
    pub config: SlipsConfig,
}

impl RunResult {
    pub fn drop_trace(&mut self) {
        self.states = Vec::new();
        self.steps = Vec::new();
    }
}

/// Denoiser at `(t, y)` in the configured mode; returns the estimate and the next chain start.
#[allow(clippy::too_many_arguments)]
fn denoise<R: Rng + ?Sized>(
    target: &dyn TargetModel,
    config: &SlipsConfig,
    t: f64,
    sigma: f64,
    y: &[f64],
    start: ChainStart,
    rng: &mut R,
    rejected: &mut usize,
) -> Result<(Vec<f64>, Option<f64>, ChainStart)> {
    match config.denoiser_mode {
        DenoiserMode::Oracle => {
            let oracle = target.oracle().ok_or_else(|| {
                SlipsError::Unsupported("oracle mode needs a target with a closed-form denoiser".into())
            })?;
            Ok((oracle.denoiser(t, sigma, y)?, None, start))
        }
        DenoiserMode::Mala => {
            let est = estimate_denoiser(target, t, sigma, y, config.m, start, &config.mala, rng)?;
            if est.all_rejected {
                *rejected += 1;
            }
            let acc = est.acceptance_rate;
            let u = est.u_hat.clone();
            Ok((u, Some(acc), est.into_warm_start()))
        }
    }
}

/// Langevin-within-Langevin initialization: `Y ~ N(0, sigma^2 t0 I)` followed by
/// `n_init` ULA steps of size `lambda = sigma^2 t0 / 2` on `p_{t0}`, whose score is
/// `(t0 U - Y) / (sigma^2 t0)` with `U` the denoiser estimate at `Y`.
///
/// Returns the state and the inner chain to continue from.
pub fn initialize<R: Rng + ?Sized>(
    target: &dyn TargetModel,
    config: &SlipsConfig,
    sigma: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, ChainStart)> {
    let (y, start, _) = initialize_counted(target, config, sigma, rng)?;
    Ok((y, start))
}

fn initialize_counted<R: Rng + ?Sized>(
    target: &dyn TargetModel,
    config: &SlipsConfig,
    sigma: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, ChainStart, usize)> {
    let t0 = config.t0;
    ensure_positive("t0", t0)?;
    ensure_positive("sigma", sigma)?;
    let sd = sigma * t0.sqrt();
    let mut y: Vec<f64> = (0..target.dim())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lambda = sigma * sigma * t0 / 2.0;
    let mut start = ChainStart::Fresh;
    let mut rejected = 0;
    for _ in 0..config.n_init {
        let (u, _, next) = denoise(target, config, t0, sigma, &y, start, rng, &mut rejected)?;
        start = next;
        let score = tweedie_score(t0, sigma, &y, &u)?;
        y = ula_step(|_| Ok(score), &y, lambda, rng)?;
    }
    Ok((y, start, rejected))
}

/// One full SLIPS run with the given generator.
pub fn run_slips<R: Rng + ?Sized>(
    target: &dyn TargetModel,
    config: &SlipsConfig,
    rng: &mut R,
) -> Result<RunResult> {
    config.validate()?;
    let sigma = config.resolve_sigma(target)?;
    if config.denoiser_mode == DenoiserMode::Oracle && target.oracle().is_none() {
        return Err(SlipsError::Unsupported(
            "oracle mode needs a target with a closed-form denoiser".into(),
        ));
    }
    let disc = config.discretization()?;
    let times = disc.times();

    let (mut y, init_chain, mut rejected) = initialize_counted(target, config, sigma, rng)?;
    let mut start = if config.warm_start_init {
        init_chain
    } else {
        ChainStart::Fresh
    };

    let d = target.dim();
    let mut states = Vec::with_capacity(times.len());
    let mut steps = Vec::with_capacity(disc.steps());
    states.push(y.clone());
    for k in 0..disc.steps() {
        let t = times[k];
        let delta = times[k + 1] - t;
        let (u, acceptance, next) = denoise(target, config, t, sigma, &y, start, rng, &mut rejected)
            .map_err(|e| e.at_step(k))?;
        start = next;
        let noise: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        y = em_update(&y, &u, &noise, delta, sigma);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SlipsError::NonFinite(format!("state after step {k}")).at_step(k));
        }
        states.push(y.clone());
        steps.push(StepRecord {
            k,
            t,
            u_hat: u,
            acceptance,
            noise,
        });
    }
    let t_final = disc.t_final();
    Ok(RunResult {
        run_index: 0,
        sample: y.iter().map(|v| v / t_final).collect(),
        sigma,
        grid: times.to_vec(),
        states,
        steps,
        all_rejected_steps: rejected,
        config: config.clone(),
    })
}

/// `y + delta u + sigma sqrt(delta) g`, evaluated coordinatewise in that order.
pub fn em_update(y: &[f64], u: &[f64], g: &[f64], delta: f64, sigma: f64) -> Vec<f64> {
    let scale = sigma * delta.sqrt();
    y.iter()
        .zip(u)
        .zip(g)
        .map(|((y, u), g)| y + delta * u + scale * g)
        .collect()
}

/// A run of a batch that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_index: u64,
    pub error: String,
}

/// Ordered successful runs plus the failures, by run index.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl BatchOutcome {
    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.runs.iter().map(|r| r.sample.clone()).collect()
    }
}

/// `n_runs` independent runs; run `i` uses generator stream `i` of `config.seed`, so the
/// outcome does not depend on `workers` (0 means one thread per core). Configuration problems fail the whole batch
/// up front; per-run failures are collected.
pub fn run_batch(
    target: &dyn TargetModel,
    config: &SlipsConfig,
    n_runs: usize,
    workers: usize,
    keep_trace: bool,
) -> Result<BatchOutcome> {
    if n_runs == 0 {
        return Err(SlipsError::Domain("n_runs must be >= 1".into()));
    }
    config.validate()?;
    config.resolve_sigma(target)?;
    if config.denoiser_mode == DenoiserMode::Oracle && target.oracle().is_none() {
        return Err(SlipsError::Unsupported(
            "oracle mode needs a target with a closed-form denoiser".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SlipsError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<RunResult>> = pool.install(|| {
        (0..n_runs as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(config.seed, i);
                let mut r = run_slips(target, config, &mut rng)?;
                r.run_index = i;
                if !keep_trace {
                    r.drop_trace();
                }
                Ok(r)
            })
            .collect()
    });
    let mut runs = Vec::with_capacity(n_runs);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(RunFailure {
                run_index: i as u64,
                error: e.to_string(),
            }),
        }
    }
    Ok(BatchOutcome { runs, failures })
}
