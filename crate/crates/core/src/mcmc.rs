//! MALA and ULA kernels, and the warm-started ergodic-average denoiser estimator.
//!
//! A MALA step proposes `x' = x + h grad log rho(x) + sqrt(2h) xi` and accepts with
//! probability `min(1, rho(x') q(x | x') / (rho(x) q(x' | x)))`, where
//! `log q(b | a) = -||b - a - h grad log rho(a)||^2 / (4h)` up to a constant.
//! Each step consumes exactly `d` standard normals and one uniform, so the noise
//! block of a chain of known length is fixed.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ensure_finite, ensure_len, ensure_positive, Result, SlipsError};
use crate::localization::{Discretization, Posterior};
use crate::rng::stream_rng;
use crate::sampler::{DenoiserMode, SlipsConfig};
use crate::stats::{dist_sq, Estimate, RunningMoments};
use crate::target::TargetModel;

/// Robbins-Monro target acceptance rate for MALA.
pub const TARGET_ACCEPTANCE: f64 = 0.574;

/// A density known through its log and the gradient of its log.
pub trait GradientDensity {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
    /// Writes the gradient into `grad` and returns the log-density.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl GradientDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        Posterior::dim(self)
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        Posterior::log_density(self, x)
    }
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        Posterior::log_density_and_grad(self, x, grad)
    }
}

/// Runs MALA directly on a target.
pub struct TargetDensity<'a>(pub &'a dyn TargetModel);

impl GradientDensity for TargetDensity<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.0.log_density(x)
    }
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.0.log_density_and_grad(x, grad)
    }
}

/// Adapter for a pair of closures `(log_density, grad_log_density)`.
pub struct FnDensity<L, G> {
    pub dim: usize,
    pub log_density: L,
    pub grad: G,
}

impl<L, G> GradientDensity for FnDensity<L, G>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (self.log_density)(x)
    }
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.grad)(x, grad);
        (self.log_density)(x)
    }
}

/// Chain state with cached log-density and gradient at `position`.
#[derive(Debug, Clone, PartialEq)]
pub struct MalaState {
    position: Vec<f64>,
    log_density: f64,
    grad: Vec<f64>,
    step_size: f64,
    accepted: u64,
    proposed: u64,
    proposal: Vec<f64>,
    proposal_grad: Vec<f64>,
}

impl MalaState {
    pub fn new<D: GradientDensity + ?Sized>(
        density: &D,
        position: Vec<f64>,
        step_size: f64,
    ) -> Result<Self> {
        ensure_positive("MALA step size", step_size)?;
        ensure_len("chain position", &position, density.dim())?;
        ensure_finite("chain position", &position)?;
        let d = position.len();
        let mut state = Self {
            position,
            log_density: 0.0,
            grad: vec![0.0; d],
            step_size,
            accepted: 0,
            proposed: 0,
            proposal: vec![0.0; d],
            proposal_grad: vec![0.0; d],
        };
        state.refresh(density)?;
        Ok(state)
    }

    /// Recomputes the cached values, e.g. after the chain's target changed.
    pub fn refresh<D: GradientDensity + ?Sized>(&mut self, density: &D) -> Result<()> {
        self.log_density = density.log_density_and_grad(&self.position, &mut self.grad);
        if !self.log_density.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
            return Err(SlipsError::NonFinite(format!(
                "log-density or gradient at chain position {:?}",
                self.position
            )));
        }
        Ok(())
    }

    pub fn position(&self) -> &[f64] {
        &self.position
    }

    pub fn cached_log_density(&self) -> f64 {
        self.log_density
    }

    pub fn cached_grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn set_step_size(&mut self, h: f64) -> Result<()> {
        ensure_positive("MALA step size", h)?;
        self.step_size = h;
        Ok(())
    }

    pub fn accept_count(&self) -> u64 {
        self.accepted
    }

    pub fn proposal_count(&self) -> u64 {
        self.proposed
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn reset_counts(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }
}

/// `log [rho(x') q(x | x')] - log [rho(x) q(x' | x)]` for a Langevin proposal of step `h`.
pub fn mala_log_accept_ratio(
    h: f64,
    x: &[f64],
    log_rho_x: f64,
    grad_x: &[f64],
    x_new: &[f64],
    log_rho_new: f64,
    grad_new: &[f64],
) -> f64 {
    let mut fwd = 0.0;
    let mut rev = 0.0;
    for i in 0..x.len() {
        let f = x_new[i] - x[i] - h * grad_x[i];
        let r = x[i] - x_new[i] - h * grad_new[i];
        fwd += f * f;
        rev += r * r;
    }
    log_rho_new - log_rho_x + (fwd - rev) / (4.0 * h)
}

/// One MALA transition. Returns the Metropolis acceptance probability of the proposal
/// (0 for a non-finite proposal, which is rejected).
pub fn mala_step<D, R>(density: &D, state: &mut MalaState, rng: &mut R) -> f64
where
    D: GradientDensity + ?Sized,
    R: Rng + ?Sized,
{
    let h = state.step_size;
    let scale = (2.0 * h).sqrt();
    for i in 0..state.position.len() {
        let xi: f64 = rng.sample(StandardNormal);
        state.proposal[i] = state.position[i] + h * state.grad[i] + scale * xi;
    }
    let u: f64 = rng.random();
    state.proposed += 1;

    let log_new = density.log_density_and_grad(&state.proposal, &mut state.proposal_grad);
    if !log_new.is_finite() || state.proposal_grad.iter().any(|g| !g.is_finite()) {
        return 0.0;
    }
    let log_alpha = mala_log_accept_ratio(
        h,
        &state.position,
        state.log_density,
        &state.grad,
        &state.proposal,
        log_new,
        &state.proposal_grad,
    );
    if log_alpha.is_nan() {
        return 0.0;
    }
    if u.ln() < log_alpha {
        std::mem::swap(&mut state.position, &mut state.proposal);
        std::mem::swap(&mut state.grad, &mut state.proposal_grad);
        state.log_density = log_new;
        state.accepted += 1;
    }
    log_alpha.min(0.0).exp()
}

/// One ULA step `x + lambda s(x) + sqrt(2 lambda) xi`. A non-finite score is an error.
pub fn ula_step<F, R>(score: F, position: &[f64], lambda: f64, rng: &mut R) -> Result<Vec<f64>>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    ensure_positive("ULA step", lambda)?;
    let s = score(position)?;
    ensure_len("score", &s, position.len())?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SlipsError::NonFinite(format!("score at {position:?}")));
    }
    let scale = (2.0 * lambda).sqrt();
    Ok(position
        .iter()
        .zip(&s)
        .map(|(x, g)| {
            let xi: f64 = rng.sample(StandardNormal);
            x + lambda * g + scale * xi
        })
        .collect())
}

/// Step-size policy of the inner chains.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MalaSettings {
    /// Step size used for a fresh chain at `t = 0`; scaled by `1 / (1 + t)` at time `t`.
    pub step_size: f64,
    /// Robbins-Monro adaptation of the step during fresh-start burn-in.
    pub adapt: bool,
    /// Fresh chains run `ceil(M * burn_in_fraction)` discarded steps before the M recorded ones.
    pub burn_in_fraction: f64,
}

impl Default for MalaSettings {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            adapt: true,
            burn_in_fraction: 0.2,
        }
    }
}

impl MalaSettings {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("mala_step", self.step_size)?;
        if !(self.burn_in_fraction.is_finite() && self.burn_in_fraction >= 0.0) {
            return Err(SlipsError::Domain(format!(
                "burn_in_fraction must be >= 0, got {}",
                self.burn_in_fraction
            )));
        }
        Ok(())
    }

    pub fn burn_in(&self, m: usize) -> usize {
        (m as f64 * self.burn_in_fraction).ceil() as usize
    }

    /// Step for a fresh chain targeting the posterior at time `t`.
    /// The posterior precision grows like `(1 + t) / sigma^2`.
    pub fn step_at(&self, t: f64) -> f64 {
        self.step_size / (1.0 + t)
    }
}

/// Robbins-Monro update of a step size on the log scale.
pub fn adapt_step(h: f64, accept_prob: f64, iteration: usize) -> f64 {
    let gain = (iteration as f64 + 1.0).powf(-0.6);
    (h.ln() + gain * (accept_prob - TARGET_ACCEPTANCE)).exp()
}

/// Where the inner chain starts.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainStart {
    /// New chain at `y / (1 + t)` with burn-in.
    Fresh,
    /// Continue a chain last run on the posterior at time `time`.
    Warm { state: MalaState, time: f64 },
}

/// Estimated posterior mean plus chain diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserEstimate {
    pub u_hat: Vec<f64>,
    /// Acceptance rate over the M recorded steps.
    pub acceptance_rate: f64,
    /// Set when none of the M recorded proposals was accepted.
    pub all_rejected: bool,
    pub final_state: MalaState,
    /// Time of the posterior the chain targeted.
    pub time: f64,
}

impl DenoiserEstimate {
    pub fn into_warm_start(self) -> ChainStart {
        ChainStart::Warm {
            state: self.final_state,
            time: self.time,
        }
    }
}

/// Estimates `u_t(y) = E[X | Y_t = y]` by the mean of the `m` positions a MALA chain on
/// `q_t(. | y)` visits after each move.
///
/// Fresh chains start at `y / (1 + t)` and first run `settings.burn_in(m)` discarded
/// steps (adapting the step size if enabled). Warm chains keep their position, have the
/// step rescaled by `(1 + t_prev) / (1 + t)` and record from the first move.
#[allow(clippy::too_many_arguments)]
pub fn estimate_denoiser<R: Rng + ?Sized>(
    target: &dyn TargetModel,
    t: f64,
    sigma: f64,
    y: &[f64],
    m: usize,
    start: ChainStart,
    settings: &MalaSettings,
    rng: &mut R,
) -> Result<DenoiserEstimate> {
    if m == 0 {
        return Err(SlipsError::Domain("M must be >= 1".into()));
    }
    settings.validate()?;
    let post = Posterior::new(target, t, sigma, y)?;
    let mut state = match start {
        ChainStart::Fresh => {
            let x0: Vec<f64> = y.iter().map(|v| v / (1.0 + t)).collect();
            let mut state = MalaState::new(&post, x0, settings.step_at(t))?;
            for n in 0..settings.burn_in(m) {
                let a = mala_step(&post, &mut state, rng);
                if settings.adapt {
                    state.step_size = adapt_step(state.step_size, a, n);
                }
            }
            state
        }
        ChainStart::Warm { mut state, time } => {
            ensure_len("warm-start position", &state.position, target.dim())?;
            state.step_size *= (1.0 + time) / (1.0 + t);
            state.refresh(&post)?;
            state
        }
    };
    state.reset_counts();
    let mut sum = vec![0.0; y.len()];
    for _ in 0..m {
        mala_step(&post, &mut state, rng);
        for (s, x) in sum.iter_mut().zip(&state.position) {
            *s += x;
        }
    }
    let u_hat: Vec<f64> = sum.iter().map(|s| s / m as f64).collect();
    Ok(DenoiserEstimate {
        u_hat,
        acceptance_rate: state.acceptance_rate(),
        all_rejected: state.accepted == 0,
        final_state: state,
        time: t,
    })
}

/// Monte Carlo estimate of the weighted L2 denoiser error
/// `(1 / (t_K - t_0)) sum_k delta_k sqrt(E ||u_hat_{t_k}(Y_{t_k}) - u_{t_k}(Y_{t_k})||^2)`
/// along exact localization paths.
///
/// Path `p` uses generator stream `p` of `seed`; each path runs one chain, fresh at
/// `t_0` and warm-started afterwards, as the sampler does. The standard error comes
/// from the delta method applied per path.
pub fn estimate_eps0(
    target: &dyn TargetModel,
    config: &SlipsConfig,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    let oracle = target
        .oracle()
        .ok_or_else(|| SlipsError::Unsupported("estimate_eps0 needs an oracle denoiser".into()))?;
    let sampler = target
        .exact_sampler()
        .ok_or_else(|| SlipsError::Unsupported("estimate_eps0 needs exact target draws".into()))?;
    if n_paths < 2 {
        return Err(SlipsError::Domain("n_paths must be >= 2".into()));
    }
    let sigma = config.resolve_sigma(target)?;
    let disc = config.discretization()?;
    let times = disc.times();
    let k_steps = disc.steps();
    let weights: Vec<f64> = disc
        .deltas()
        .iter()
        .map(|d| d / (disc.t_final() - disc.t0()))
        .collect();

    if config.denoiser_mode == DenoiserMode::Oracle {
        return Ok(Estimate {
            value: 0.0,
            std_error: 0.0,
            n: n_paths,
        });
    }

    let errors: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<Vec<f64>> {
            let mut rng = stream_rng(seed, p as u64);
            let x = sampler.draw(&mut rng);
            let mut y: Vec<f64> = x.iter().map(|v| times[0] * v).collect();
            for yi in y.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *yi += sigma * times[0].sqrt() * g;
            }
            let mut start = ChainStart::Fresh;
            let mut errs = Vec::with_capacity(k_steps);
            for k in 0..k_steps {
                let t = times[k];
                let est = estimate_denoiser(target, t, sigma, &y, config.m, start, &config.mala, &mut rng)
                    .map_err(|e| e.at_step(k))?;
                let u = oracle.denoiser(t, sigma, &y)?;
                errs.push(dist_sq(&est.u_hat, &u));
                start = est.into_warm_start();
                let dt = times[k + 1] - t;
                for (yi, xi) in y.iter_mut().zip(&x) {
                    let g: f64 = rng.sample(StandardNormal);
                    *yi += dt * xi + sigma * dt.sqrt() * g;
                }
            }
            Ok(errs)
        })
        .collect::<Result<_>>()?;

    let mean_sq: Vec<f64> = (0..k_steps)
        .map(|k| errors.iter().map(|e| e[k]).sum::<f64>() / n_paths as f64)
        .collect();
    let value: f64 = weights.iter().zip(&mean_sq).map(|(w, m)| w * m.sqrt()).sum();
    let influence: RunningMoments = errors
        .iter()
        .map(|e| {
            (0..k_steps)
                .filter(|&k| mean_sq[k] > 0.0)
                .map(|k| weights[k] * (e[k] - mean_sq[k]) / (2.0 * mean_sq[k].sqrt()))
                .sum::<f64>()
        })
        .collect();
    Ok(Estimate {
        value,
        std_error: influence.estimate().std_error,
        n: n_paths,
    })
}

/// Grid used by [`estimate_eps0`]; exposed for reporting.
pub fn eps0_grid(config: &SlipsConfig) -> Result<Discretization> {
    config.discretization()
}
