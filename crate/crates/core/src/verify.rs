//! Numerical checks of the localization identities and bounds.
//!
//! Each check returns a [`CheckReport`]; randomized checks take a seed and give path
//! (or run) `p` generator stream `p`, so reports are reproducible bit for bit.

use std::ops::{Add, Div, Sub};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result, SlipsError};
use crate::localization::{c_disc_sum, tv_information_bound, tweedie_score, Discretization, GridKind, GridScalar};
use crate::metrics::{random_directions, reference_samples, sliced_tv_with_directions, Bins, Samples, DEFAULT_PROJECTIONS};
use crate::quadrature::{total_variation_1d, trapezoid, tv_window};
use crate::rng::{seeded, stream_rng};
use crate::sampler::{run_batch, DenoiserMode, SlipsConfig};
use crate::stats::{dist_sq, Estimate, RunningMoments};
use crate::target::{DenoiserOracle, ExactSampler, GaussianMixture, TargetModel};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub observed: Vec<f64>,
    pub bound_or_target: Vec<f64>,
    pub tolerance: f64,
    pub n_samples: usize,
    pub notes: String,
    pub seed: Option<u64>,
    /// Check-specific extras (minimizers, per-dimension rows, ...).
    pub details: serde_json::Value,
}

fn oracle_parts(target: &dyn TargetModel) -> Result<(&dyn DenoiserOracle, &dyn ExactSampler)> {
    let oracle = target
        .oracle()
        .ok_or_else(|| SlipsError::Unsupported("check needs a closed-form denoiser".into()))?;
    let sampler = target
        .exact_sampler()
        .ok_or_else(|| SlipsError::Unsupported("check needs exact target draws".into()))?;
    Ok((oracle, sampler))
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(SlipsError::Domain("need at least one time".into()));
    }
    for &t in times {
        ensure_positive("t", t)?;
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(SlipsError::Domain("times must be nondecreasing".into()));
    }
    Ok(())
}

/// `Y_t = t X + sigma B_t` at the given nondecreasing times, for a fixed `x`.
pub fn observation_path<R: Rng + ?Sized>(x: &[f64], sigma: f64, times: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
    let mut y = vec![0.0; x.len()];
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - prev;
        let sd = sigma * dt.sqrt();
        for (yi, xi) in y.iter_mut().zip(x) {
            let g: f64 = rng.sample(StandardNormal);
            *yi += dt * xi + sd * g;
        }
        out.push(y.clone());
        prev = t;
    }
    out
}

/// Evaluates `f(p, path)` on `n_paths` exact observation paths in parallel.
fn over_paths<T, F>(sampler: &dyn ExactSampler, sigma: f64, times: &[f64], n_paths: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[f64], &[Vec<f64>]) -> Result<T> + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(seed, p as u64);
            let x = sampler.draw(&mut rng as &mut dyn RngCore);
            let path = observation_path(&x, sigma, times, &mut rng);
            f(&x, &path)
        })
        .collect()
}

/// Constant-mean consequence of the martingale property of `u_t(Y_t)`:
/// `E[u_t(Y_t)] = E[X]` at every `t`, coordinatewise within 3 standard errors.
pub fn check_martingale(target: &dyn TargetModel, sigma: f64, times: &[f64], n_paths: usize, seed: u64) -> Result<CheckReport> {
    let (oracle, sampler) = oracle_parts(target)?;
    let mean = target
        .exact_mean()
        .ok_or_else(|| SlipsError::Unsupported("martingale check needs the exact mean".into()))?;
    ensure_positive("sigma", sigma)?;
    check_times(times)?;
    if n_paths < 2 {
        return Err(SlipsError::Domain("n_paths must be >= 2".into()));
    }
    let d = target.dim();
    let values = over_paths(sampler, sigma, times, n_paths, seed, |_, path| {
        let mut us = Vec::with_capacity(times.len() * d);
        for (t, y) in times.iter().zip(path) {
            us.extend(oracle.denoiser(*t, sigma, y)?);
        }
        Ok(us)
    })?;
    let mut observed = Vec::with_capacity(times.len() * d);
    let mut targets = Vec::with_capacity(times.len() * d);
    let mut max_z: f64 = 0.0;
    let mut passed = true;
    for j in 0..times.len() * d {
        let est = values.iter().map(|v| v[j]).collect::<RunningMoments>().estimate();
        let m = mean[j % d];
        passed &= est.within(m, 3.0);
        if est.std_error > 0.0 {
            max_z = max_z.max((est.value - m).abs() / est.std_error);
        }
        observed.push(est.value);
        targets.push(m);
    }
    Ok(CheckReport {
        name: "martingale".into(),
        passed,
        observed,
        bound_or_target: targets,
        tolerance: 3.0,
        n_samples: n_paths,
        notes: format!("E[u_t(Y_t)] per time and coordinate; max |z| = {max_z:.3}"),
        seed: Some(seed),
        details: serde_json::json!({ "times": times, "sigma": sigma }),
    })
}

/// `E||u_t(Y_t) - u_s(Y_s)||^2 = E TrCov(X | Y_s) - E TrCov(X | Y_t)` on shared paths
/// (paired difference within 3 standard errors of zero), plus
/// `E TrCov(X | Y_r) <= d sigma^2 / r` at `r = s, t`.
pub fn check_covariance_identity(
    target: &dyn TargetModel,
    sigma: f64,
    s: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CheckReport> {
    let (oracle, sampler) = oracle_parts(target)?;
    ensure_positive("sigma", sigma)?;
    ensure_positive("s", s)?;
    if t < s {
        return Err(SlipsError::Domain(format!("need s <= t, got s = {s}, t = {t}")));
    }
    if n_paths < 2 {
        return Err(SlipsError::Domain("n_paths must be >= 2".into()));
    }
    let rows = over_paths(sampler, sigma, &[s, t], n_paths, seed, |_, path| {
        let us = oracle.denoiser(s, sigma, &path[0])?;
        let ut = oracle.denoiser(t, sigma, &path[1])?;
        let cs = oracle.posterior_trace_cov(s, sigma, &path[0])?;
        let ct = oracle.posterior_trace_cov(t, sigma, &path[1])?;
        Ok([dist_sq(&ut, &us), cs, ct])
    })?;
    let lhs: RunningMoments = rows.iter().map(|r| r[0]).collect();
    let cs: RunningMoments = rows.iter().map(|r| r[1]).collect();
    let ct: RunningMoments = rows.iter().map(|r| r[2]).collect();
    let diff = rows.iter().map(|r| r[0] - (r[1] - r[2])).collect::<RunningMoments>().estimate();
    let d = target.dim() as f64;
    let (bound_s, bound_t) = (d * sigma * sigma / s, d * sigma * sigma / t);
    let identity_ok = diff.within(0.0, 3.0);
    let bound_ok = cs.mean() <= bound_s && ct.mean() <= bound_t;
    Ok(CheckReport {
        name: "covariance-identity".into(),
        passed: identity_ok && bound_ok,
        observed: vec![lhs.mean(), cs.mean() - ct.mean(), cs.mean(), ct.mean()],
        bound_or_target: vec![cs.mean() - ct.mean(), lhs.mean(), bound_s, bound_t],
        tolerance: 3.0,
        n_samples: n_paths,
        notes: format!(
            "observed = [E||u_t - u_s||^2, E TrCov_s - E TrCov_t, E TrCov_s, E TrCov_t]; paired difference {:.3e} +- {:.3e}; trace bound {}",
            diff.value,
            diff.std_error,
            if bound_ok { "holds" } else { "violated" }
        ),
        seed: Some(seed),
        details: serde_json::json!({
            "s": s, "t": t, "sigma": sigma,
            "paired_difference": diff,
            "lhs_std_error": lhs.estimate().std_error,
        }),
    })
}

/// `t -> E TrCov(X | Y_t)` is nonincreasing over `times` (paired differences within
/// 3 standard errors) and stays below `d sigma^2 / t`.
pub fn check_trace_decreasing(target: &dyn TargetModel, sigma: f64, times: &[f64], n_paths: usize, seed: u64) -> Result<CheckReport> {
    let (oracle, sampler) = oracle_parts(target)?;
    ensure_positive("sigma", sigma)?;
    check_times(times)?;
    if n_paths < 2 {
        return Err(SlipsError::Domain("n_paths must be >= 2".into()));
    }
    let rows = over_paths(sampler, sigma, times, n_paths, seed, |_, path| {
        times.iter().zip(path).map(|(t, y)| oracle.posterior_trace_cov(*t, sigma, y)).collect::<Result<Vec<f64>>>()
    })?;
    let means: Vec<f64> = (0..times.len()).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n_paths as f64).collect();
    let bounds: Vec<f64> = times.iter().map(|t| target.dim() as f64 * sigma * sigma / t).collect();
    let mut passed = means.iter().zip(&bounds).all(|(m, b)| m <= b);
    for i in 1..times.len() {
        let inc = rows.iter().map(|r| r[i] - r[i - 1]).collect::<RunningMoments>().estimate();
        passed &= inc.value <= 3.0 * inc.std_error;
    }
    Ok(CheckReport {
        name: "trace-decreasing".into(),
        passed,
        observed: means,
        bound_or_target: bounds,
        tolerance: 3.0,
        n_samples: n_paths,
        notes: "E TrCov(X | Y_t) per time against d sigma^2 / t".into(),
        seed: Some(seed),
        details: serde_json::json!({ "times": times, "sigma": sigma }),
    })
}

/// Forward-mode dual number, used to differentiate the discretization constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Self { re, du: 0.0 }
    }
    pub fn variable(re: f64) -> Self {
        Self { re, du: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { re: self.re + o.re, du: self.du + o.du }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { re: self.re - o.re, du: self.du - o.du }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            re: self.re / o.re,
            du: (self.du * o.re - self.re * o.du) / (o.re * o.re),
        }
    }
}

impl GridScalar for Dual {
    fn zero() -> Self {
        Dual::constant(0.0)
    }
    fn real(self) -> f64 {
        self.re
    }
}

/// `d C_disc / d t_k` at `grid` (one-sided at kinks of the `max{0, .}` terms).
pub fn c_disc_partial(grid: &[f64], k: usize) -> f64 {
    let duals: Vec<Dual> = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| if i == k { Dual::variable(t) } else { Dual::constant(t) })
        .collect();
    c_disc_sum(&duals).du
}

/// Minimizes `C_disc` over `t_k` on `(t_{k-1}, t_{k+1})` with the other points fixed.
/// Every term is convex in `t_k`, so the derivative is nondecreasing and bisection on
/// its sign (in log-time) finds the minimizer.
fn coordinate_minimize(grid: &mut [f64], k: usize) {
    let (mut lo, mut hi) = (grid[k - 1].ln(), grid[k + 1].ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        grid[k] = mid.exp();
        if c_disc_partial(grid, k) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    grid[k] = (0.5 * (lo + hi)).exp();
}

/// Gauss-Seidel coordinate descent over the indices `free`, until no point moves by more
/// than `1e-15` relative or `max_sweeps` is reached. Returns the number of sweeps.
fn coordinate_descent(grid: &mut [f64], free: std::ops::Range<usize>, max_sweeps: usize) -> usize {
    for sweep in 1..=max_sweeps {
        let mut moved: f64 = 0.0;
        for k in free.clone() {
            let before = grid[k];
            coordinate_minimize(grid, k);
            moved = moved.max(((grid[k] - before) / before).abs());
        }
        if moved < 1e-15 {
            return sweep;
        }
    }
    max_sweeps
}

/// Max relative distance of the interior points from `geometric`, and max residual of the
/// first-order condition `t_{k+1} / t_k = t_k / t_{k-1}`.
fn grid_deviation(grid: &[f64], geometric: &[f64]) -> (f64, f64) {
    let mut dev: f64 = 0.0;
    let mut foc: f64 = 0.0;
    for i in 1..grid.len() - 2 {
        dev = dev.max(((grid[i] - geometric[i]) / geometric[i]).abs());
        foc = foc.max(((grid[i + 1] / grid[i]) / (grid[i] / grid[i - 1]) - 1.0).abs());
    }
    (dev, foc)
}

/// Sorted log-uniform draws in `(lo, hi)`.
fn random_interior<R: Rng + ?Sized>(lo: f64, hi: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n).map(|_| (a + (b - a) * rng.random::<f64>()).exp()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// With `t_{K-1} = t0 (tK / t0)^((K-1)/K)` fixed, numerical minimization of `C_disc` over
/// `t_1, ..., t_{K-2}` recovers the geometric grid (1e-6 relative per point, first-order
/// condition `t_{k+1} / t_k = t_k / t_{k-1}` to 1e-8), and no random feasible grid beats it.
///
/// The minimizer is coordinate descent from `n_restarts` random grids, keeping the lowest.
/// Single restarts can stall where an acceleration term sits at its kink; how many
/// reached the geometric grid is reported in the details.
pub fn check_grid_optimality(t0: f64, t_final: f64, k: usize, n_restarts: usize, seed: u64) -> Result<CheckReport> {
    const RANDOM_GRIDS: usize = 1000;
    if k < 3 {
        return Err(SlipsError::Domain("grid optimality needs K >= 3".into()));
    }
    let geo = Discretization::log_snr(t0, t_final, k)?;
    let geometric = geo.times().to_vec();
    let c_geo = geo.c_disc();
    let t_fixed = geometric[k - 1];
    if !(t0 < t_fixed && t_fixed < t_final) {
        return Err(SlipsError::Domain("infeasible constraint ordering".into()));
    }
    let mut rng = seeded(seed);
    let mut best = geometric.clone();
    let mut converged = 0;
    let mut best_c = f64::INFINITY;
    let mut max_sweeps_used = 0;
    for _ in 0..n_restarts.max(1) {
        let mut grid = vec![t0];
        grid.extend(random_interior(t0, t_fixed, k - 2, &mut rng));
        grid.push(t_fixed);
        grid.push(t_final);
        max_sweeps_used = max_sweeps_used.max(coordinate_descent(&mut grid, 1..k - 1, 100_000));
        if grid_deviation(&grid, &geometric).0 <= 1e-6 {
            converged += 1;
        }
        let c = c_disc_sum(&grid);
        if c < best_c {
            best_c = c;
            best = grid;
        }
    }

    let (worst_dev, worst_foc) = grid_deviation(&best, &geometric);

    let mut min_random = f64::INFINITY;
    for _ in 0..RANDOM_GRIDS {
        let mut grid = vec![t0];
        grid.extend(random_interior(t0, t_fixed, k - 2, &mut rng));
        grid.push(t_fixed);
        grid.push(t_final);
        min_random = min_random.min(c_disc_sum(&grid));
    }
    let random_ok = min_random >= c_geo - 1e-12;

    // Unconstrained variant: t_{K-1} free as well. Reported only.
    let mut free = geometric.clone();
    coordinate_descent(&mut free, 1..k, 100_000);
    let c_free = c_disc_sum(&free);

    let passed = worst_dev <= 1e-6 && worst_foc <= 1e-8 && random_ok;
    Ok(CheckReport {
        name: "grid-optimality".into(),
        passed,
        observed: vec![worst_dev, worst_foc, best_c, min_random],
        bound_or_target: vec![1e-6, 1e-8, c_geo, c_geo],
        tolerance: 1e-6,
        n_samples: RANDOM_GRIDS,
        notes: format!(
            "observed = [max relative deviation of the minimizer from the geometric grid, its max first-order residual, its C_disc, min C_disc over {RANDOM_GRIDS} random grids]; {converged} of {} restarts reached the geometric grid; unconstrained minimum {c_free:.12} vs geometric {c_geo:.12}",
            n_restarts.max(1)
        ),
        seed: Some(seed),
        details: serde_json::json!({
            "t0": t0, "t_final": t_final, "k": k,
            "fixed_t_k_minus_1": t_fixed,
            "minimizer": best,
            "geometric": geometric,
            "restarts": n_restarts.max(1),
            "restarts_converged": converged,
            "max_sweeps": max_sweeps_used,
            "unconstrained_minimizer": free,
            "unconstrained_c_disc": c_free,
        }),
    })
}

fn gmm_1d_pdf(g: &GaussianMixture, var: f64) -> impl Fn(f64) -> f64 + '_ {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    move |x: f64| {
        g.weights()
            .iter()
            .zip(g.means())
            .map(|(w, m)| w * norm * (-(x - m[0]).powi(2) / (2.0 * var)).exp())
            .sum()
    }
}

fn require_1d(g: &GaussianMixture, what: &str) -> Result<()> {
    if g.dim() != 1 {
        return Err(SlipsError::Unsupported(format!("{what} uses 1-D quadrature; target has d = {}", g.dim())));
    }
    Ok(())
}

/// `||grad log pi||_{L2(pi)}` of a 1-D mixture by quadrature.
pub fn score_norm_1d(g: &GaussianMixture, nodes: usize) -> Result<f64> {
    require_1d(g, "score norm")?;
    let s2 = g.component_variance();
    let centres: Vec<f64> = g.means().iter().map(|m| m[0]).collect();
    let (lo, hi) = tv_window(&centres, s2.sqrt());
    let pdf = gmm_1d_pdf(g, s2);
    let v = trapezoid(
        |x| {
            let grad = g.grad_log_density(&[x]).map(|v| v[0]).unwrap_or(0.0);
            grad * grad * pdf(x)
        },
        lo,
        hi,
        nodes,
    );
    Ok(v.sqrt())
}

/// `TV(pi, pi_t) <= 0.5 ||grad log pi|| sqrt(d sigma^2 / t)` with `pi_t = pi * N(0, sigma^2 / t)`,
/// TV and score norm both by quadrature (1-D mixtures only).
pub fn check_information_bound(g: &GaussianMixture, sigma: f64, t_values: &[f64], nodes: usize) -> Result<CheckReport> {
    require_1d(g, "information bound check")?;
    ensure_positive("sigma", sigma)?;
    check_times(t_values)?;
    let score = score_norm_1d(g, nodes)?;
    let s2 = g.component_variance();
    let centres: Vec<f64> = g.means().iter().map(|m| m[0]).collect();
    let mut tvs = Vec::new();
    let mut bounds = Vec::new();
    for &t in t_values {
        let vt = s2 + sigma * sigma / t;
        let (lo, hi) = tv_window(&centres, vt.sqrt());
        tvs.push(total_variation_1d(gmm_1d_pdf(g, s2), gmm_1d_pdf(g, vt), lo, hi, nodes));
        bounds.push(tv_information_bound(score, 1, sigma, t)?);
    }
    let passed = tvs.iter().zip(&bounds).all(|(tv, b)| tv <= b);
    Ok(CheckReport {
        name: "information-bound".into(),
        passed,
        observed: tvs,
        bound_or_target: bounds,
        tolerance: 0.0,
        n_samples: nodes,
        notes: format!("quadrature TV(pi, pi_t) per t against the bound; score norm {score:.10}"),
        seed: None,
        details: serde_json::json!({ "t_values": t_values, "sigma": sigma, "score_norm": score }),
    })
}

/// `log p_t(y)` of a 1-D target by quadrature of `int N(y; t x, t sigma^2) pi(x) dx`.
pub fn log_p_t_quadrature(g: &GaussianMixture, t: f64, sigma: f64, y: f64, nodes: usize) -> Result<f64> {
    require_1d(g, "p_t quadrature")?;
    let s2 = g.component_variance();
    let centres: Vec<f64> = g.means().iter().map(|m| m[0]).chain([y / t]).collect();
    let spread = s2.sqrt().max(sigma / t.sqrt());
    let (lo, hi) = tv_window(&centres, spread);
    let pdf = gmm_1d_pdf(g, s2);
    let kvar = t * sigma * sigma;
    let knorm = 1.0 / (2.0 * std::f64::consts::PI * kvar).sqrt();
    let p = trapezoid(|x| knorm * (-(y - t * x).powi(2) / (2.0 * kvar)).exp() * pdf(x), lo, hi, nodes);
    Ok(p.ln())
}

/// `y` grid of the Tweedie check at time `t`: the range of `t m_i` widened by four
/// standard deviations of a component of `p_t`.
pub fn tweedie_y_range(g: &GaussianMixture, sigma: f64, t: f64) -> (f64, f64) {
    let sd = (t * t * g.component_variance() + t * sigma * sigma).sqrt();
    let centres: Vec<f64> = g.means().iter().map(|m| t * m[0]).collect();
    let lo = centres.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centres.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo - 4.0 * sd, hi + 4.0 * sd)
}

/// Tweedie's identity: `(t u_t(y) - y) / (sigma^2 t)` from the oracle denoiser against a
/// central finite difference of the quadrature `log p_t`, on `n_points` evenly spaced
/// values of `y` per time (see [`tweedie_y_range`]).
pub fn check_tweedie(
    g: &GaussianMixture,
    sigma: f64,
    t_values: &[f64],
    n_points: usize,
    tolerance: f64,
) -> Result<CheckReport> {
    require_1d(g, "Tweedie check")?;
    ensure_positive("sigma", sigma)?;
    check_times(t_values)?;
    if n_points < 2 {
        return Err(SlipsError::Domain("need at least two y points".into()));
    }
    const NODES: usize = 1 << 14;
    let mut worst = Vec::new();
    let mut ranges = Vec::new();
    for &t in t_values {
        let (lo, hi) = tweedie_y_range(g, sigma, t);
        ranges.push([lo, hi]);
        let scale = (t * t * g.component_variance() + t * sigma * sigma).sqrt();
        let h = 1e-4 * scale;
        let mut max_err: f64 = 0.0;
        for i in 0..n_points {
            let y = lo + (hi - lo) * i as f64 / (n_points - 1) as f64;
            let u = g.oracle_denoiser(t, sigma, &[y])?;
            let s = tweedie_score(t, sigma, &[y], &u)?[0];
            let fd = (log_p_t_quadrature(g, t, sigma, y + h, NODES)? - log_p_t_quadrature(g, t, sigma, y - h, NODES)?) / (2.0 * h);
            max_err = max_err.max((s - fd).abs());
        }
        worst.push(max_err);
    }
    Ok(CheckReport {
        name: "tweedie".into(),
        passed: worst.iter().all(|e| *e < tolerance),
        bound_or_target: vec![tolerance; worst.len()],
        observed: worst,
        tolerance,
        n_samples: n_points,
        notes: "max |Tweedie score - finite-difference quadrature score| per t".into(),
        seed: None,
        details: serde_json::json!({ "t_values": t_values, "y_ranges": ranges, "sigma": sigma }),
    })
}

/// One ensemble of a schedule comparison or scaling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub grid: GridKind,
    pub dim: usize,
    pub k: usize,
    pub t0: f64,
    pub t_final: f64,
    pub c_disc: f64,
    pub sliced_tv: f64,
    pub std_error: f64,
    pub n_runs: usize,
    pub failures: usize,
}

/// Oracle-mode ensemble scored by sliced TV against `reference` on shared directions.
fn ensemble_tv(
    target: &dyn TargetModel,
    config: &SlipsConfig,
    n_runs: usize,
    workers: usize,
    reference: &Samples,
    directions: &[Vec<f64>],
) -> Result<EnsembleRow> {
    let out = run_batch(target, config, n_runs, workers, false)?;
    let samples = Samples::from_rows(&out.samples())?;
    let tv = sliced_tv_with_directions(&samples, reference, directions, Bins::FreedmanDiaconis)?;
    Ok(EnsembleRow {
        grid: config.grid,
        dim: target.dim(),
        k: config.k,
        t0: config.t0,
        t_final: config.t_final,
        c_disc: config.discretization()?.c_disc(),
        sliced_tv: tv.value(),
        std_error: tv.std_error(),
        n_runs: out.runs.len(),
        failures: out.failures.len(),
    })
}

/// Seeds for the reference draws and the projection directions, derived from a master seed.
fn derived_seeds(seed: u64) -> (u64, u64) {
    let mut rng = seeded(seed ^ 0x5eed_cafe_f00d_d00d);
    (rng.next_u64(), rng.next_u64())
}

/// Result of [`compare_schedules`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleComparison {
    pub report: CheckReport,
    pub rows: Vec<EnsembleRow>,
}

/// Oracle-mode ensembles on uniform and log-SNR grids for each `K`, scored against
/// `n_reference` exact draws with shared projections. Passes when, at every `K`, the
/// log-SNR sliced TV is at most the uniform one plus 2 combined standard errors.
pub fn compare_schedules(
    target: &dyn TargetModel,
    base: &SlipsConfig,
    ks: &[usize],
    n_runs: usize,
    n_reference: usize,
    workers: usize,
) -> Result<ScheduleComparison> {
    let (_, sampler) = oracle_parts(target)?;
    if ks.is_empty() {
        return Err(SlipsError::Domain("need at least one K".into()));
    }
    let (ref_seed, dir_seed) = derived_seeds(base.seed);
    let reference = reference_samples(sampler, target.dim(), n_reference, ref_seed);
    let directions = random_directions(target.dim(), DEFAULT_PROJECTIONS, &mut seeded(dir_seed));
    let mut rows = Vec::new();
    let mut passed = true;
    let mut observed = Vec::new();
    let mut targets = Vec::new();
    for &k in ks {
        let mut pair = Vec::new();
        for grid in [GridKind::LogSnr, GridKind::Uniform] {
            let cfg = SlipsConfig { k, grid, denoiser_mode: DenoiserMode::Oracle, ..base.clone() };
            pair.push(ensemble_tv(target, &cfg, n_runs, workers, &reference, &directions)?);
        }
        let (log, uni) = (&pair[0], &pair[1]);
        let combined = (log.std_error.powi(2) + uni.std_error.powi(2)).sqrt();
        passed &= log.sliced_tv <= uni.sliced_tv + 2.0 * combined;
        observed.push(log.sliced_tv);
        targets.push(uni.sliced_tv + 2.0 * combined);
        rows.extend(pair);
    }
    Ok(ScheduleComparison {
        report: CheckReport {
            name: "schedule-comparison".into(),
            passed,
            observed,
            bound_or_target: targets,
            tolerance: 2.0,
            n_samples: n_runs,
            notes: "log-SNR sliced TV per K against uniform sliced TV + 2 combined SE".into(),
            seed: Some(base.seed),
            details: serde_json::to_value(&rows).unwrap_or_default(),
        },
        rows,
    })
}

/// Knobs of [`check_dimension_scaling`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSettings {
    pub t0: f64,
    /// `T = c0 ||grad log pi||^2 R^2 / eps^2`.
    pub c0: f64,
    /// `K` at the smallest dimension; fixes `c` in `K = c d ceil(log^2(d^2 / (t0 eps^2)))`.
    pub k_base: usize,
    pub n_runs: usize,
    pub n_reference: usize,
    pub score_samples: usize,
    pub workers: usize,
    /// Extra diagnostic ensemble at the largest dimension with this fixed `K`.
    pub small_k: Option<usize>,
    pub seed: u64,
}

impl Default for ScalingSettings {
    fn default() -> Self {
        Self {
            t0: 0.02,
            c0: 1.0,
            k_base: 100,
            n_runs: 5000,
            n_reference: 200_000,
            score_samples: 200_000,
            workers: 0,
            small_k: Some(10),
            seed: 0,
        }
    }
}

/// `ceil(log^2(d^2 / (t0 eps^2)))`.
pub fn log_sq_factor(d: usize, t0: f64, eps: f64) -> f64 {
    ((d * d) as f64 / (t0 * eps * eps)).ln().powi(2).ceil()
}

/// Scaling shape of the step count: on the bimodal family with means `+-1`, unit
/// component variance and `sigma^2 = R^2 / d = 2`, runs oracle-mode ensembles with
/// `T = c0 ||grad log pi||^2 R^2 / eps^2` and `K = c d ceil(log^2(d^2 / (t0 eps^2)))`,
/// `c` calibrated at the smallest dimension. Passes if every sliced TV is at most
/// `1.5 eps` and at most 1.5 times the smallest-dimension value.
pub fn check_dimension_scaling(eps: f64, dims: &[usize], settings: &ScalingSettings) -> Result<(CheckReport, Vec<EnsembleRow>)> {
    ensure_positive("eps", eps)?;
    ensure_positive("t0", settings.t0)?;
    ensure_positive("c0", settings.c0)?;
    let d_min = *dims.iter().min().ok_or_else(|| SlipsError::Domain("need at least one dimension".into()))?;
    if dims.iter().any(|&d| d == 0 || d > 32) {
        return Err(SlipsError::Domain("dimensions must lie in 1..=32".into()));
    }
    let c = settings.k_base as f64 / (d_min as f64 * log_sq_factor(d_min, settings.t0, eps));
    let (ref_seed, dir_seed) = derived_seeds(settings.seed);
    let mut rows = Vec::new();
    let mut extras = Vec::new();
    for &d in dims {
        let g = GaussianMixture::symmetric_bimodal(d, 1.0, 1.0, 0.5)?;
        let r2 = g.variance_proxy();
        let score_sq = g.score_norm_sq(settings.score_samples, &mut stream_rng(settings.seed, d as u64))?;
        let t_final = settings.c0 * score_sq.value * r2 / (eps * eps);
        let k = ((c * d as f64 * log_sq_factor(d, settings.t0, eps)).round() as usize).max(1);
        let reference = reference_samples(&g, d, settings.n_reference, ref_seed);
        let directions = random_directions(d, DEFAULT_PROJECTIONS, &mut stream_rng(dir_seed, d as u64));
        let cfg = SlipsConfig {
            t0: settings.t0,
            t_final,
            k,
            seed: settings.seed,
            denoiser_mode: DenoiserMode::Oracle,
            grid: GridKind::LogSnr,
            ..SlipsConfig::default()
        };
        rows.push(ensemble_tv(&g, &cfg, settings.n_runs, settings.workers, &reference, &directions)?);
        if d == *dims.iter().max().unwrap_or(&d) {
            if let Some(small) = settings.small_k {
                let cfg = SlipsConfig { k: small, ..cfg };
                extras.push(ensemble_tv(&g, &cfg, settings.n_runs, settings.workers, &reference, &directions)?);
            }
        }
    }
    let base_tv = rows.iter().find(|r| r.dim == d_min).map(|r| r.sliced_tv).unwrap_or(f64::NAN);
    let limit = (1.5 * eps).min(1.5 * base_tv);
    let passed = rows.iter().all(|r| r.sliced_tv <= 1.5 * eps && r.sliced_tv <= 1.5 * base_tv);
    let report = CheckReport {
        name: "dimension-scaling".into(),
        passed,
        observed: rows.iter().map(|r| r.sliced_tv).collect(),
        bound_or_target: vec![limit; rows.len()],
        tolerance: 1.5,
        n_samples: settings.n_runs,
        notes: format!(
            "sliced TV per dimension; K = {c:.4} d ceil(log^2(d^2 / (t0 eps^2))), T = {} ||grad log pi||^2 R^2 / eps^2",
            settings.c0
        ),
        seed: Some(settings.seed),
        details: serde_json::json!({
            "eps": eps,
            "k_constant": c,
            "rows": rows,
            "fixed_small_k": extras,
        }),
    };
    rows.extend(extras);
    Ok((report, rows))
}

/// Estimate of a per-path Monte Carlo mean, exposed for callers that build their own checks.
pub fn path_mean<F>(target: &dyn TargetModel, sigma: f64, t: f64, n_paths: usize, seed: u64, f: F) -> Result<Estimate>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    let (_, sampler) = oracle_parts(target)?;
    let v = over_paths(sampler, sigma, &[t], n_paths, seed, |x, path| f(x, &path[0]))?;
    Ok(v.into_iter().collect::<RunningMoments>().estimate())
}
