//! Experiment configuration files.
//!
//! TOML with fixed sections; unknown keys are rejected with their location.
//!
//! ```toml
//! [target]
//! weights = [0.5, 0.5]
//! means = "+-1"        # or an explicit list such as [[1.0, 1.0], [-1.0, -1.0]]
//! dim = 2              # needed with the "+-c" shorthand
//! variance = 1.0
//!
//! [slips]
//! t0 = 0.02
//! t_final = 1000.0     # or snr_target = ...
//! k = 200
//! m = 200
//! n_init = 20
//! sigma = "auto"
//! grid = "log-snr"
//! denoiser = "oracle"
//!
//! [run]
//! n_runs = 5000
//! seed = 42
//!
//! [output]
//! directory = "results"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipsError};
use crate::localization::GridKind;
use crate::mcmc::MalaSettings;
use crate::sampler::{t_final_for_snr, DenoiserMode, SigmaSpec, SlipsConfig};
use crate::target::GaussianMixture;

/// Means given explicitly or as the `+-c` shorthand for the two components `+c 1` and `-c 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeansSpec {
    Explicit(Vec<Vec<f64>>),
    Shorthand(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    #[serde(default = "default_family")]
    pub family: String,
    pub weights: Vec<f64>,
    pub means: MeansSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub variance: f64,
}

fn default_family() -> String {
    "gmm".into()
}

/// Parses `"+-c"`, `"±c"` into `c`.
fn parse_shorthand(s: &str) -> Result<f64> {
    let body = s
        .trim()
        .strip_prefix("+-")
        .or_else(|| s.trim().strip_prefix('±'))
        .ok_or_else(|| SlipsError::Config(format!("target.means: expected a list or \"+-c\", got \"{s}\"")))?;
    body.trim()
        .parse::<f64>()
        .map_err(|_| SlipsError::Config(format!("target.means: cannot read the number in \"{s}\"")))
}

impl TargetSection {
    pub fn build(&self) -> Result<GaussianMixture> {
        if self.family != "gmm" {
            return Err(SlipsError::Config(format!(
                "target.family: unknown family \"{}\" (only \"gmm\" is available)",
                self.family
            )));
        }
        let means = match &self.means {
            MeansSpec::Explicit(m) => {
                if let Some(d) = self.dim {
                    if m.iter().any(|v| v.len() != d) {
                        return Err(SlipsError::Config(format!("target.means: every mean needs length dim = {d}")));
                    }
                }
                m.clone()
            }
            MeansSpec::Shorthand(s) => {
                let c = parse_shorthand(s)?;
                let d = self
                    .dim
                    .ok_or_else(|| SlipsError::Config("target.dim is required with the \"+-c\" shorthand".into()))?;
                vec![vec![c; d], vec![-c; d]]
            }
        };
        if self.weights.len() != means.len() {
            return Err(SlipsError::Config(format!(
                "target.weights has {} entries but there are {} means",
                self.weights.len(),
                means.len()
            )));
        }
        GaussianMixture::new(self.weights.clone(), means, self.variance)
            .map_err(|e| SlipsError::Config(format!("target: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipsSection {
    pub t0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_target: Option<f64>,
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaSpec,
    #[serde(default = "default_grid")]
    pub grid: GridKind,
    #[serde(default = "default_denoiser")]
    pub denoiser: DenoiserMode,
    #[serde(default = "default_mala_step")]
    pub mala_step: f64,
    #[serde(default = "default_true")]
    pub mala_adapt: bool,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_true")]
    pub warm_start_init: bool,
}

fn default_m() -> usize {
    200
}
fn default_n_init() -> usize {
    SlipsConfig::default().n_init
}
fn default_sigma() -> SigmaSpec {
    SigmaSpec::Auto
}
fn default_grid() -> GridKind {
    GridKind::LogSnr
}
fn default_denoiser() -> DenoiserMode {
    DenoiserMode::Mala
}
fn default_mala_step() -> f64 {
    MalaSettings::default().step_size
}
fn default_burn_in() -> f64 {
    MalaSettings::default().burn_in_fraction
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_runs: usize,
    /// Thread count; 0 uses all cores. Not part of the manifest: results do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Not part of the manifest, so bundles written to different places stay identical.
    #[serde(default = "default_out", skip_serializing)]
    pub directory: String,
    #[serde(default)]
    pub trace: bool,
}

fn default_out() -> String {
    "results".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_out(),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// Exact draws the sliced TV compares against.
    #[serde(default = "default_reference")]
    pub n_reference: usize,
    #[serde(default = "default_projections")]
    pub n_projections: usize,
}

fn default_reference() -> usize {
    100_000
}
fn default_projections() -> usize {
    crate::metrics::DEFAULT_PROJECTIONS
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            n_reference: default_reference(),
            n_projections: default_projections(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Checks run when none are named on the command line; empty means all.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_pairs")]
    pub pairs: Vec<[f64; 2]>,
    #[serde(default = "default_grid_t0")]
    pub grid_t0: f64,
    #[serde(default = "default_grid_t_final")]
    pub grid_t_final: f64,
    #[serde(default = "default_grid_k")]
    pub grid_k: usize,
    #[serde(default = "default_restarts")]
    pub grid_restarts: usize,
    #[serde(default = "default_info_t")]
    pub info_t_values: Vec<f64>,
    #[serde(default = "default_tweedie_t")]
    pub tweedie_t_values: Vec<f64>,
    #[serde(default = "default_tweedie_points")]
    pub tweedie_points: usize,
    #[serde(default = "default_scaling_eps")]
    pub scaling_eps: f64,
    #[serde(default = "default_scaling_dims")]
    pub scaling_dims: Vec<usize>,
    #[serde(default = "default_scaling_k_base")]
    pub scaling_k_base: usize,
    #[serde(default = "default_scaling_runs")]
    pub scaling_n_runs: usize,
    #[serde(default = "default_scaling_reference")]
    pub scaling_n_reference: usize,
}

fn default_paths() -> usize {
    100_000
}
fn default_times() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn default_pairs() -> Vec<[f64; 2]> {
    vec![[1.0, 2.0], [1.0, 4.0], [2.0, 8.0]]
}
fn default_grid_t0() -> f64 {
    1.0
}
fn default_grid_t_final() -> f64 {
    16.0
}
fn default_grid_k() -> usize {
    4
}
fn default_restarts() -> usize {
    8
}
fn default_info_t() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn default_tweedie_t() -> Vec<f64> {
    vec![0.5, 2.0, 8.0]
}
fn default_tweedie_points() -> usize {
    200
}
fn default_scaling_eps() -> f64 {
    0.2
}
fn default_scaling_dims() -> Vec<usize> {
    vec![2, 8, 32]
}
fn default_scaling_k_base() -> usize {
    100
}
fn default_scaling_runs() -> usize {
    5000
}
fn default_scaling_reference() -> usize {
    200_000
}

impl Default for VerifySection {
    fn default() -> Self {
        toml::from_str("").expect("all verify keys have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Step counts to compare at; defaults to `[slips.k]`.
    #[serde(default)]
    pub ks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_runs: Option<usize>,
    #[serde(default = "default_compare_reference")]
    pub n_reference: usize,
    /// `T / t0` ratios of the discretization-constant sweep.
    #[serde(default = "default_ratios")]
    pub c_disc_ratios: Vec<f64>,
}

fn default_compare_reference() -> usize {
    1_000_000
}
fn default_ratios() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

impl Default for CompareSection {
    fn default() -> Self {
        toml::from_str("").expect("all compare keys have defaults")
    }
}

/// A whole experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSection,
    pub slips: SlipsSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub compare: CompareSection,
}

/// Manifest written next to every bundle; `config` alone reproduces the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub seed: u64,
    pub sigma: f64,
    pub t_final: f64,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub failures: Vec<crate::sampler::RunFailure>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SlipsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` of a JSON manifest when the path ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SlipsError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| SlipsError::Config(format!("{}: {e}", path.display())))?;
            m.config.validate()?;
            Ok(m.config)
        } else {
            Self::from_toml_str(&text).map_err(|e| match e {
                SlipsError::Config(msg) => SlipsError::Config(format!("{}: {msg}", path.display())),
                other => other,
            })
        }
    }

    pub fn target(&self) -> Result<GaussianMixture> {
        self.target.build()
    }

    /// Full validation: target, final-time entry and the resolved sampler config.
    pub fn validate(&self) -> Result<()> {
        let target = self.target()?;
        if self.run.n_runs == 0 {
            return Err(SlipsError::Config("run.n_runs must be >= 1".into()));
        }
        self.slips_config(&target)?;
        Ok(())
    }

    /// Sampler config with `T` resolved (from `t_final` or `snr_target`).
    pub fn slips_config(&self, target: &GaussianMixture) -> Result<SlipsConfig> {
        let s = &self.slips;
        let mut cfg = SlipsConfig {
            t0: s.t0,
            t_final: 0.0,
            k: s.k,
            m: s.m,
            n_init: s.n_init,
            sigma: s.sigma,
            mala: MalaSettings {
                step_size: s.mala_step,
                adapt: s.mala_adapt,
                burn_in_fraction: s.burn_in_fraction,
            },
            seed: self.run.seed,
            denoiser_mode: s.denoiser,
            grid: s.grid,
            warm_start_init: s.warm_start_init,
        };
        let sigma = cfg
            .resolve_sigma(target)
            .map_err(|e| SlipsError::Config(format!("slips.sigma: {e}")))?;
        cfg.t_final = match (s.t_final, s.snr_target) {
            (Some(t), None) => t,
            (None, Some(snr)) => t_final_for_snr(snr, target.variance_proxy(), target.dim(), sigma)
                .map_err(|e| SlipsError::Config(format!("slips.snr_target: {e}")))?,
            _ => {
                return Err(SlipsError::Config(
                    "slips: give exactly one of t_final and snr_target".into(),
                ))
            }
        };
        cfg.validate().map_err(|e| SlipsError::Config(format!("slips: {e}")))?;
        Ok(cfg)
    }
}
