//! Stochastic-localization building blocks: time grids, the discretization constant,
//! posterior densities, Tweedie's formula and the total-variation error bounds.
//!
//! Throughout, the observation process is `Y_t = t X + sigma B_t` with `X ~ pi`.

use std::ops::{Add, Div, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, ensure_positive, Result, SlipsError};
use crate::stats::dist_sq;
use crate::target::TargetModel;

/// How a time grid was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    LogSnr,
    Uniform,
    Custom,
}

impl std::fmt::Display for GridKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridKind::LogSnr => "log-snr",
            GridKind::Uniform => "uniform",
            GridKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for GridKind {
    type Err = SlipsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-snr" | "log_snr" => Ok(GridKind::LogSnr),
            "uniform" => Ok(GridKind::Uniform),
            "custom" => Ok(GridKind::Custom),
            other => Err(SlipsError::Config(format!(
                "unknown grid kind `{other}` (expected log-snr, uniform or custom)"
            ))),
        }
    }
}

/// A strictly increasing time grid `t_0 < t_1 < ... < t_K` with `t_0 > 0` and `K >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    grid: Vec<f64>,
    kind: GridKind,
}

fn check_interval(t0: f64, t_final: f64, steps: usize) -> Result<()> {
    ensure_positive("t0", t0)?;
    if !(t_final.is_finite() && t_final > t0) {
        return Err(SlipsError::Domain(format!("T must exceed t0 ({t_final} <= {t0})")));
    }
    if steps == 0 {
        return Err(SlipsError::Domain("K must be >= 1".into()));
    }
    Ok(())
}

impl Discretization {
    /// Geometric grid `t_k = t0 (T / t0)^(k / K)`: equal increments of the log-SNR.
    pub fn log_snr(t0: f64, t_final: f64, steps: usize) -> Result<Self> {
        check_interval(t0, t_final, steps)?;
        let ratio = t_final / t0;
        let mut grid: Vec<f64> = (0..=steps)
            .map(|k| t0 * ratio.powf(k as f64 / steps as f64))
            .collect();
        grid[steps] = t_final;
        Ok(Self {
            grid,
            kind: GridKind::LogSnr,
        })
    }

    /// Equal steps `t_k = t0 + k (T - t0) / K`.
    pub fn uniform(t0: f64, t_final: f64, steps: usize) -> Result<Self> {
        check_interval(t0, t_final, steps)?;
        let h = (t_final - t0) / steps as f64;
        let mut grid: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * h).collect();
        grid[steps] = t_final;
        Ok(Self {
            grid,
            kind: GridKind::Uniform,
        })
    }

    /// Any user-supplied strictly increasing grid of positive times.
    pub fn custom(grid: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(SlipsError::Domain("a grid needs at least two times".into()));
        }
        ensure_positive("t0", grid[0])?;
        ensure_finite("grid", &grid)?;
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SlipsError::Domain("grid must be strictly increasing".into()));
        }
        Ok(Self {
            grid,
            kind: GridKind::Custom,
        })
    }

    pub fn build(kind: GridKind, t0: f64, t_final: f64, steps: usize) -> Result<Self> {
        match kind {
            GridKind::LogSnr => Self::log_snr(t0, t_final, steps),
            GridKind::Uniform => Self::uniform(t0, t_final, steps),
            GridKind::Custom => Err(SlipsError::Config("custom grids need explicit times".into())),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.grid
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Number of intervals `K`.
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.grid[0]
    }

    pub fn t_final(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Step sizes `delta_k = t_{k+1} - t_k`.
    pub fn deltas(&self) -> Vec<f64> {
        self.grid.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Log-SNR increment `log(t_1 / t_0)`; constant across the grid for log-SNR grids.
    pub fn log_snr_increment(&self) -> f64 {
        (self.grid[1] / self.grid[0]).ln()
    }

    /// Discretization constant of this grid, see [`c_disc`].
    pub fn c_disc(&self) -> f64 {
        c_disc_sum(&self.grid)
    }
}

/// Scalar type accepted by [`c_disc_sum`]; lets verification code differentiate the
/// constant with dual numbers.
pub trait GridScalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Div<Output = Self>
{
    fn zero() -> Self;
    /// Real part, used to resolve `max{0, .}`.
    fn real(self) -> f64;
}

impl GridScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn real(self) -> f64 {
        self
    }
}

/// Direct summation of
/// `sum_{k=1}^{K-1} max{0, (t_{k+1} - t_k) - (t_k - t_{k-1})} / t_k + (t_1 - t_0) / t_0`.
///
/// For `K = 1` the sum is empty. Accelerations at the rounding level of the times
/// count as zero, so equal steps do not pile up floating-point noise.
/// Panics on grids with fewer than two points.
pub fn c_disc_sum<T: GridScalar>(grid: &[T]) -> T {
    assert!(grid.len() >= 2, "c_disc needs at least two grid points");
    let head = (grid[1] - grid[0]) / grid[0];
    grid.windows(3).fold(head, |acc, w| {
        let accel = (w[2] - w[1]) - (w[1] - w[0]);
        if accel.real() > 4.0 * f64::EPSILON * w[2].real() {
            acc + accel / w[1]
        } else {
            acc
        }
    })
}

/// Discretization constant of a grid.
pub fn c_disc(disc: &Discretization) -> f64 {
    disc.c_disc()
}

/// Default noise level `sigma = sqrt(R^2 / d)`.
pub fn sigma_default(variance_proxy: f64, dim: usize) -> Result<f64> {
    ensure_positive("R^2", variance_proxy)?;
    if dim == 0 {
        return Err(SlipsError::Domain("dimension must be >= 1".into()));
    }
    Ok((variance_proxy / dim as f64).sqrt())
}

/// The posterior `q_t(x | y)` of `X` given `Y_t = y`, up to an `x`-independent constant.
///
/// `log q_t(x | y) = -||y - t x||^2 / (2 t sigma^2) + log pi(x)`. Its gradient in `x`
/// is `grad log pi(x) + t (y - t x) / (t sigma^2)`; the `t` cancels, leaving
/// `grad log pi(x) + (y - t x) / sigma^2`.
#[derive(Clone, Copy)]
pub struct Posterior<'a> {
    target: &'a dyn TargetModel,
    t: f64,
    sigma: f64,
    y: &'a [f64],
}

impl<'a> Posterior<'a> {
    pub fn new(target: &'a dyn TargetModel, t: f64, sigma: f64, y: &'a [f64]) -> Result<Self> {
        ensure_positive("t", t)?;
        ensure_positive("sigma", sigma)?;
        ensure_len("observation", y, target.dim())?;
        ensure_finite("observation", y)?;
        Ok(Self { target, t, sigma, y })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn observation(&self) -> &[f64] {
        self.y
    }

    fn gaussian_term(&self, x: &[f64]) -> f64 {
        let r: f64 = self.y.iter().zip(x).map(|(y, x)| (y - self.t * x).powi(2)).sum();
        -r / (2.0 * self.t * self.sigma * self.sigma)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.gaussian_term(x) + self.target.log_density(x)
    }

    pub fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let lp = self.target.log_density_and_grad(x, grad);
        let inv_s2 = 1.0 / (self.sigma * self.sigma);
        for ((g, y), x) in grad.iter_mut().zip(self.y).zip(x) {
            *g += (y - self.t * x) * inv_s2;
        }
        self.gaussian_term(x) + lp
    }
}

/// `log q_t(x | y)` up to a constant in `x`.
pub fn posterior_log_density_unnorm(
    target: &dyn TargetModel,
    t: f64,
    sigma: f64,
    y: &[f64],
    x: &[f64],
) -> Result<f64> {
    let post = Posterior::new(target, t, sigma, y)?;
    ensure_len("x", x, target.dim())?;
    let v = post.log_density(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SlipsError::NonFinite(format!("posterior log-density at x = {x:?}")))
    }
}

/// `grad_x log q_t(x | y) = grad log pi(x) + (y - t x) / sigma^2`.
pub fn posterior_grad(
    target: &dyn TargetModel,
    t: f64,
    sigma: f64,
    y: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    let post = Posterior::new(target, t, sigma, y)?;
    ensure_len("x", x, target.dim())?;
    let mut g = vec![0.0; x.len()];
    post.log_density_and_grad(x, &mut g);
    ensure_finite("posterior gradient", &g).map_err(|_| {
        SlipsError::NonFinite(format!("posterior gradient at x = {x:?}"))
    })?;
    Ok(g)
}

/// Tweedie's formula turned around: the score of `p_t` from a denoiser value,
/// `grad log p_t(y) = (t u - y) / (sigma^2 t)`.
pub fn tweedie_score(t: f64, sigma: f64, y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    ensure_positive("t", t)?;
    ensure_positive("sigma", sigma)?;
    if y.len() != u.len() {
        return Err(SlipsError::InvalidInput("y and u must have equal length".into()));
    }
    let scale = 1.0 / (sigma * sigma * t);
    Ok(y.iter().zip(u).map(|(y, u)| (t * u - y) * scale).collect())
}

/// Information-error bound `0.5 ||grad log pi||_{L2(pi)} sqrt(d sigma^2 / t)`
/// on `TV(pi, (1/t)_# p_t)`.
pub fn tv_information_bound(score_norm: f64, dim: usize, sigma: f64, t: f64) -> Result<f64> {
    if !(score_norm.is_finite() && score_norm >= 0.0) {
        return Err(SlipsError::Domain(format!("score norm must be >= 0, got {score_norm}")));
    }
    ensure_positive("sigma", sigma)?;
    ensure_positive("t", t)?;
    Ok(0.5 * score_norm * (dim as f64 * sigma * sigma / t).sqrt())
}

/// Inputs of the end-to-end TV bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvBoundInputs {
    pub dim: usize,
    pub sigma: f64,
    pub t_final: f64,
    /// Weighted L2 denoiser-estimation error.
    pub eps0: f64,
    pub c_disc: f64,
    /// `||grad log pi||_{L2(pi)}` (not squared).
    pub score_norm: f64,
    /// `TV(p~_{t0}, p_{t0})`; not computable in general, so supplied by the caller.
    pub init_tv: f64,
}

/// Breakdown of the end-to-end TV bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvBoundReport {
    pub init_term: f64,
    pub disc_term: f64,
    pub estimation_term: f64,
    pub information_term: f64,
    pub total: f64,
}

/// `init_tv + sqrt(d C_disc) + sqrt(T eps0^2 / sigma^2) + 0.5 ||grad log pi|| sqrt(d sigma^2 / T)`.
pub fn tv_total_bound(inputs: &TvBoundInputs) -> Result<TvBoundReport> {
    let TvBoundInputs {
        dim,
        sigma,
        t_final,
        eps0,
        c_disc,
        score_norm,
        init_tv,
    } = *inputs;
    for (name, v) in [("eps0", eps0), ("c_disc", c_disc), ("init_tv", init_tv)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(SlipsError::Domain(format!("{name} must be >= 0, got {v}")));
        }
    }
    ensure_positive("sigma", sigma)?;
    ensure_positive("T", t_final)?;
    let disc_term = (dim as f64 * c_disc).sqrt();
    let estimation_term = (t_final * eps0 * eps0 / (sigma * sigma)).sqrt();
    let information_term = tv_information_bound(score_norm, dim, sigma, t_final)?;
    Ok(TvBoundReport {
        init_term: init_tv,
        disc_term,
        estimation_term,
        information_term,
        total: init_tv + disc_term + estimation_term + information_term,
    })
}

/// Exact law of `Y_t` for a Gaussian target `N(m, s^2 I)`: mean `t m`, per-coordinate
/// variance `t^2 s^2 + t sigma^2`.
pub fn gaussian_observation_moments(mean: &[f64], s2: f64, sigma: f64, t: f64) -> (Vec<f64>, f64) {
    (mean.iter().map(|m| t * m).collect(), t * t * s2 + t * sigma * sigma)
}

/// Moment-matched estimate of the initialization error for Gaussian targets in d = 1:
/// fits a Gaussian to the initial states and integrates `0.5 |N(fit) - N(exact)|`.
pub fn moment_matched_init_tv(samples: &[f64], exact_mean: f64, exact_var: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(SlipsError::InvalidInput("need at least two samples".into()));
    }
    ensure_positive("exact variance", exact_var)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    ensure_positive("sample variance", var)?;
    let pdf = |m: f64, v: f64| {
        move |x: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    };
    let spread = var.max(exact_var).sqrt();
    let (lo, hi) = crate::quadrature::tv_window(&[mean, exact_mean], spread);
    Ok(crate::quadrature::total_variation_1d(
        pdf(mean, var),
        pdf(exact_mean, exact_var),
        lo,
        hi,
        crate::quadrature::TV_NODES,
    ))
}

/// Squared distance helper re-exported for callers comparing denoiser values.
pub fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::GaussianMixture;

    #[test]
    fn log_snr_grid_plug_in() {
        let g = Discretization::log_snr(0.01, 100.0, 4).unwrap();
        let expected = [0.01, 0.1, 1.0, 10.0, 100.0];
        for (a, b) in g.times().iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
        }
        assert_eq!(g.kind(), GridKind::LogSnr);
        let two = Discretization::log_snr(0.3, 7.0, 1).unwrap();
        assert_eq!(two.times(), &[0.3, 7.0]);
    }

    #[test]
    fn log_snr_increments_are_constant() {
        let g = Discretization::log_snr(0.02, 1e4, 37).unwrap();
        // log-SNR of the standard schedule is log(t^2 / t) = log t.
        let snr: Vec<f64> = g.times().iter().map(|t| (t * t / t).ln()).collect();
        let delta = g.log_snr_increment();
        for w in snr.windows(2) {
            assert!((w[1] - w[0] - delta).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_grid_plug_in() {
        let g = Discretization::uniform(1.0, 5.0, 4).unwrap();
        assert_eq!(g.times(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(Discretization::uniform(1.0, 5.0, 1).unwrap().times(), &[1.0, 5.0]);
        let g = Discretization::uniform(0.3, 11.0, 9).unwrap();
        for d in g.deltas() {
            assert!((d - 10.7 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_preconditions() {
        assert!(Discretization::log_snr(0.0, 1.0, 3).is_err());
        assert!(Discretization::log_snr(2.0, 1.0, 3).is_err());
        assert!(Discretization::uniform(1.0, 2.0, 0).is_err());
        assert!(Discretization::custom(vec![1.0, 1.0, 2.0]).is_err());
        assert!(Discretization::custom(vec![-1.0, 2.0]).is_err());
        assert!(Discretization::custom(vec![1.0]).is_err());
    }

    #[test]
    fn c_disc_examples() {
        let uniform = Discretization::custom(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(c_disc(&uniform), 1.0);
        let geometric = Discretization::custom(vec![1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        assert_eq!(c_disc(&geometric), 2.5);
        let single = Discretization::custom(vec![0.5, 3.0]).unwrap();
        assert_eq!(c_disc(&single), 5.0);
    }

    #[test]
    fn sigma_default_examples() {
        assert!((sigma_default(4.0, 2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sigma_default(5.0, 5).unwrap(), 1.0);
        assert_eq!(sigma_default(9.0, 1).unwrap(), 3.0);
        assert!(sigma_default(0.0, 1).is_err());
        assert!(sigma_default(1.0, 0).is_err());
    }

    #[test]
    fn tweedie_examples() {
        let y = [2.0, -4.0];
        let u: Vec<f64> = y.iter().map(|v| v / 4.0).collect();
        assert_eq!(tweedie_score(4.0, 1.5, &y, &u).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(tweedie_score(0.0, 1.0, &y, &u), Err(SlipsError::Domain(_))));
    }

    #[test]
    fn tweedie_matches_gaussian_convolution_score() {
        let s2 = 1.7;
        let sigma: f64 = 0.9;
        let g = GaussianMixture::gaussian(vec![0.0], s2).unwrap();
        for &t in &[0.2, 1.0, 6.0] {
            for &y in &[-2.0, 0.3, 5.0] {
                let u = g.oracle_denoiser(t, sigma, &[y]).unwrap();
                let score = tweedie_score(t, sigma, &[y], &u).unwrap()[0];
                let exact = -y / (t * t * s2 + t * sigma * sigma);
                assert!((score - exact).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn information_bound_values() {
        assert_eq!(tv_information_bound(1.0, 1, 1.0, 4.0).unwrap(), 0.25);
        let a = tv_information_bound(1.3, 3, 0.7, 10.0).unwrap();
        let b = tv_information_bound(1.3, 3, 0.7, 1e6).unwrap();
        assert!(b < a && b < 1e-2);
    }

    #[test]
    fn total_bound_composition() {
        let base = TvBoundInputs {
            dim: 2,
            sigma: 2f64.sqrt(),
            t_final: 100.0,
            eps0: 0.0,
            c_disc: 0.0,
            score_norm: 1.2,
            init_tv: 0.0,
        };
        let r = tv_total_bound(&base).unwrap();
        assert_eq!(r.total, r.information_term);

        let with_err = TvBoundInputs { eps0: 0.01, c_disc: 0.3, init_tv: 0.02, ..base };
        let r1 = tv_total_bound(&with_err).unwrap();
        let r2 = tv_total_bound(&TvBoundInputs { t_final: 200.0, ..with_err }).unwrap();
        assert!((r2.estimation_term / r1.estimation_term - 2f64.sqrt()).abs() < 1e-12);
        assert!((r2.information_term / r1.information_term - 0.5f64.sqrt()).abs() < 1e-12);
        let sum = r1.init_term + r1.disc_term + r1.estimation_term + r1.information_term;
        assert_eq!(r1.total, sum);
        assert!(tv_total_bound(&TvBoundInputs { eps0: -1.0, ..base }).is_err());
    }

    #[test]
    fn corollary_regime_information_term() {
        // T = C0 ||grad log pi||^2 R^2 / eps^2 with sigma^2 = R^2 / d.
        let (c0, score_norm, r2, eps, d) = (4.0, 1.5f64, 6.0, 0.1, 3usize);
        let sigma = sigma_default(r2, d).unwrap();
        let t_final = c0 * score_norm.powi(2) * r2 / (eps * eps);
        let r = tv_total_bound(&TvBoundInputs {
            dim: d,
            sigma,
            t_final,
            eps0: 0.0,
            c_disc: 0.0,
            score_norm,
            init_tv: 0.0,
        })
        .unwrap();
        assert!((r.information_term - eps / (2.0 * c0.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn posterior_gradient_vanishes_at_gaussian_posterior_mean() {
        let g = GaussianMixture::gaussian(vec![0.0, 0.0], 1.5).unwrap();
        let (t, sigma) = (2.0, 0.8);
        let y = [1.0, -3.0];
        let u = g.oracle_denoiser(t, sigma, &y).unwrap();
        let grad = posterior_grad(&g, t, sigma, &y, &u).unwrap();
        assert!(grad.iter().all(|v| v.abs() < 1e-12), "{grad:?}");
    }

    #[test]
    fn posterior_gaussian_term_maximizer_is_y_over_t() {
        let flat = GaussianMixture::gaussian(vec![0.0], 1e12).unwrap();
        let (t, y) = (5.0, [3.0]);
        let at = posterior_log_density_unnorm(&flat, t, 1.0, &y, &[y[0] / t]).unwrap();
        for dx in [-0.1, 0.05, 0.2] {
            let off = posterior_log_density_unnorm(&flat, t, 1.0, &y, &[y[0] / t + dx]).unwrap();
            assert!(off < at);
        }
        let grad = posterior_grad(&flat, t, 1.0, &y, &[y[0] / t]).unwrap();
        assert!(grad[0].abs() < 1e-12);
    }

    #[test]
    fn moment_matched_init_tv_is_zero_for_exact_moments() {
        let xs: Vec<f64> = (0..2001).map(|i| -1.0 + i as f64 / 1000.0).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(moment_matched_init_tv(&xs, mean, var).unwrap() < 1e-12);
        assert!(moment_matched_init_tv(&xs, mean + 1.0, var).unwrap() > 0.1);
    }
}
