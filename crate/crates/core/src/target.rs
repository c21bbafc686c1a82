//! Target distributions: the `TargetModel` contract and isotropic Gaussian mixtures
//! with closed-form posterior oracles.
//!
//! For a mixture `pi = sum_i w_i N(m_i, s^2 I)` observed through `Y_t = t X + sigma B_t`,
//! the posterior `X | Y_t = y` is again a mixture. Component `i` has mean
//! `(m_i / s^2 + y / sigma^2) / (1 / s^2 + t / sigma^2)`, variance
//! `s^2 sigma^2 / (sigma^2 + t s^2)` and weight proportional to
//! `w_i N(y; t m_i, (t sigma^2 + t^2 s^2) I)`. All weight computations go through
//! log-sum-exp; a weight that underflows becomes exactly zero.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, ensure_positive, Result, SlipsError};
use crate::stats::{dist_sq, log_sum_exp, norm_sq, softmax_in_place, Estimate, RunningMoments};

/// A target distribution accessible through an unnormalized log-density and its gradient.
///
/// Only unnormalized values are promised; callers never rely on the normalization.
pub trait TargetModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Unnormalized `log pi(x)`. Non-finite values are allowed outside the support.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Writes `grad log pi(x)` into `grad`.
    fn grad_log_density(&self, x: &[f64], grad: &mut [f64]);

    /// Joint evaluation; override when the two share work.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.grad_log_density(x, grad);
        self.log_density(x)
    }

    /// `R^2 = E||X - E X||^2`, when known.
    fn variance_proxy(&self) -> Option<f64> {
        None
    }

    /// `E X`, when known.
    fn exact_mean(&self) -> Option<Vec<f64>> {
        None
    }

    /// Closed-form posterior quantities, when available.
    fn oracle(&self) -> Option<&dyn DenoiserOracle> {
        None
    }

    /// Exact sampler, when available.
    fn exact_sampler(&self) -> Option<&dyn ExactSampler> {
        None
    }
}

/// Closed-form posterior mean and covariance trace for the observation process.
pub trait DenoiserOracle: Send + Sync {
    /// `u_t(y) = E[X | Y_t = y]`.
    fn denoiser(&self, t: f64, sigma: f64, y: &[f64]) -> Result<Vec<f64>>;
    /// `Tr Cov(X | Y_t = y)`.
    fn posterior_trace_cov(&self, t: f64, sigma: f64, y: &[f64]) -> Result<f64>;
}

/// Direct i.i.d. sampling from the target.
pub trait ExactSampler: Send + Sync {
    fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Isotropic Gaussian mixture with a shared component variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variance: f64,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct MixtureSpec {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variance: f64,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = SlipsError;
    fn try_from(spec: MixtureSpec) -> Result<Self> {
        GaussianMixture::new(spec.weights, spec.means, spec.variance)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(g: GaussianMixture) -> Self {
        MixtureSpec {
            weights: g.weights,
            means: g.means,
            variance: g.variance,
        }
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(SlipsError::InvalidInput(format!(
                "mixture needs one weight per mean ({} weights, {} means)",
                weights.len(),
                means.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SlipsError::InvalidInput("mixture weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(SlipsError::InvalidInput(format!("mixture weights sum to {total}, expected 1")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(SlipsError::InvalidInput("mixture dimension must be positive".into()));
        }
        for m in &means {
            ensure_len("mixture mean", m, dim)?;
            ensure_finite("mixture mean", m)?;
        }
        ensure_positive("component variance", variance)?;
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            means,
            variance,
            dim,
        })
    }

    /// A single Gaussian `N(mean, variance I)`.
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], variance)
    }

    /// Two components at `+c 1` and `-c 1` with weights `w` and `1 - w`.
    pub fn symmetric_bimodal(dim: usize, c: f64, variance: f64, w: f64) -> Result<Self> {
        Self::new(vec![w, 1.0 - w], vec![vec![c; dim], vec![-c; dim]], variance)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn component_variance(&self) -> f64 {
        self.variance
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        ensure_len("point", x, self.dim)?;
        ensure_finite("point", x)
    }

    /// Normalized mixture log-density.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.log_density_unchecked(x))
    }

    fn component_logits(&self, x: &[f64], logits: &mut [f64]) {
        let inv2s2 = 0.5 / self.variance;
        for ((l, lw), m) in logits.iter_mut().zip(&self.log_weights).zip(&self.means) {
            *l = lw - dist_sq(x, m) * inv2s2;
        }
    }

    fn log_normalizer(&self) -> f64 {
        -0.5 * self.dim as f64 * (2.0 * PI * self.variance).ln()
    }

    fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let mut logits = vec![0.0; self.means.len()];
        self.component_logits(x, &mut logits);
        log_sum_exp(&logits) + self.log_normalizer()
    }

    /// Posterior component responsibilities at `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut r = vec![0.0; self.means.len()];
        self.component_logits(x, &mut r);
        softmax_in_place(&mut r);
        Ok(r)
    }

    /// `grad log pi(x) = sum_i r_i(x) (m_i - x) / s^2`.
    pub fn grad_log_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut g = vec![0.0; self.dim];
        self.log_density_and_grad_unchecked(x, &mut g);
        Ok(g)
    }

    fn log_density_and_grad_unchecked(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut logits = vec![0.0; self.means.len()];
        self.component_logits(x, &mut logits);
        let lse = log_sum_exp(&logits);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (l, m) in logits.iter().zip(&self.means) {
            let r = (l - lse).exp();
            if r == 0.0 {
                continue;
            }
            for ((g, mi), xi) in grad.iter_mut().zip(m).zip(x) {
                *g += r * (mi - xi);
            }
        }
        let inv_s2 = 1.0 / self.variance;
        grad.iter_mut().for_each(|g| *g *= inv_s2);
        lse + self.log_normalizer()
    }

    /// Mixture mean `sum_i w_i m_i`.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (a, b) in mean.iter_mut().zip(m) {
                *a += w * b;
            }
        }
        mean
    }

    /// `R^2 = d s^2 + sum_i w_i ||m_i - mean||^2` (law of total variance).
    pub fn variance_proxy(&self) -> f64 {
        let mean = self.mean();
        let between: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * dist_sq(m, &mean))
            .sum();
        self.dim as f64 * self.variance + between
    }

    /// Law of coordinate `i`: a 1-D mixture with the same weights and variance.
    pub fn marginal(&self, i: usize) -> Result<GaussianMixture> {
        if i >= self.dim {
            return Err(SlipsError::InvalidInput(format!("coordinate {i} out of range for d = {}", self.dim)));
        }
        GaussianMixture::new(
            self.weights.clone(),
            self.means.iter().map(|m| vec![m[i]]).collect(),
            self.variance,
        )
    }

    /// Draws one sample: pick a component by weight, add isotropic Gaussian noise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        let s = self.variance.sqrt();
        self.means[idx]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect()
    }

    /// Monte Carlo estimate of `E ||grad log pi(X)||^2` under the mixture.
    pub fn score_norm_sq<R: Rng + ?Sized>(&self, n_samples: usize, rng: &mut R) -> Result<Estimate> {
        if n_samples == 0 {
            return Err(SlipsError::Domain("n_samples must be >= 1".into()));
        }
        let mut acc = RunningMoments::new();
        let mut g = vec![0.0; self.dim];
        for _ in 0..n_samples {
            let x = self.sample(rng);
            self.log_density_and_grad_unchecked(&x, &mut g);
            acc.push(norm_sq(&g));
        }
        Ok(acc.estimate())
    }

    fn posterior_components(&self, t: f64, sigma: f64, y: &[f64]) -> Result<PosteriorMixture> {
        ensure_positive("t", t)?;
        ensure_positive("sigma", sigma)?;
        self.check_point(y)?;
        let s2 = self.variance;
        let sig2 = sigma * sigma;
        let precision = 1.0 / s2 + t / sig2;
        let marginal_var = t * sig2 + t * t * s2;
        let mut weights: Vec<f64> = self
            .log_weights
            .iter()
            .zip(&self.means)
            .map(|(lw, m)| {
                let r: f64 = y.iter().zip(m).map(|(yi, mi)| (yi - t * mi).powi(2)).sum();
                lw - 0.5 * r / marginal_var
            })
            .collect();
        softmax_in_place(&mut weights);
        let means = self
            .means
            .iter()
            .map(|m| {
                m.iter()
                    .zip(y)
                    .map(|(mi, yi)| (mi / s2 + yi / sig2) / precision)
                    .collect()
            })
            .collect();
        Ok(PosteriorMixture {
            weights,
            means,
            component_variance: 1.0 / precision,
        })
    }

    /// Closed-form optimal denoiser `u_t(y)`.
    pub fn oracle_denoiser(&self, t: f64, sigma: f64, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.posterior_components(t, sigma, y)?.mean())
    }

    /// Closed-form `Tr Cov(X | Y_t = y)`.
    pub fn oracle_posterior_trace_cov(&self, t: f64, sigma: f64, y: &[f64]) -> Result<f64> {
        let post = self.posterior_components(t, sigma, y)?;
        let mean = post.mean();
        let between: f64 = post
            .weights
            .iter()
            .zip(&post.means)
            .map(|(w, m)| w * dist_sq(m, &mean))
            .sum();
        Ok(self.dim as f64 * post.component_variance + between)
    }
}

struct PosteriorMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    component_variance: f64,
}

impl PosteriorMixture {
    fn mean(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.means[0].len()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            if *w == 0.0 {
                continue;
            }
            for (a, b) in u.iter_mut().zip(m) {
                *a += w * b;
            }
        }
        u
    }
}

impl TargetModel for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_density_unchecked(x)
    }

    fn grad_log_density(&self, x: &[f64], grad: &mut [f64]) {
        self.log_density_and_grad_unchecked(x, grad);
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_density_and_grad_unchecked(x, grad)
    }

    fn variance_proxy(&self) -> Option<f64> {
        Some(GaussianMixture::variance_proxy(self))
    }

    fn exact_mean(&self) -> Option<Vec<f64>> {
        Some(self.mean())
    }

    fn oracle(&self) -> Option<&dyn DenoiserOracle> {
        Some(self)
    }

    fn exact_sampler(&self) -> Option<&dyn ExactSampler> {
        Some(self)
    }
}

impl DenoiserOracle for GaussianMixture {
    fn denoiser(&self, t: f64, sigma: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.oracle_denoiser(t, sigma, y)
    }

    fn posterior_trace_cov(&self, t: f64, sigma: f64, y: &[f64]) -> Result<f64> {
        self.oracle_posterior_trace_cov(t, sigma, y)
    }
}

impl ExactSampler for GaussianMixture {
    fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn remark2() -> GaussianMixture {
        GaussianMixture::new(vec![0.5, 0.5], vec![vec![1.0, 1.0], vec![-1.0, -1.0]], 1.0).unwrap()
    }

    #[test]
    fn gaussian_at_mode() {
        let g = GaussianMixture::gaussian(vec![0.3], 1.0).unwrap();
        let v = g.log_density(&[0.3]).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert_eq!(g.grad_log_density(&[0.3]).unwrap(), vec![0.0]);
    }

    #[test]
    fn symmetric_bimodal_at_origin() {
        let g = GaussianMixture::symmetric_bimodal(1, 1.0, 1.0, 0.5).unwrap();
        let expected = ((-0.5f64).exp() / (2.0 * PI).sqrt()).ln();
        assert!((g.log_density(&[0.0]).unwrap() - expected).abs() < 1e-15);
        assert_eq!(g.grad_log_density(&[0.0]).unwrap(), vec![0.0]);
        for x in [0.3, 1.7, 4.0] {
            assert_eq!(g.log_density(&[x]).unwrap(), g.log_density(&[-x]).unwrap());
        }
    }

    #[test]
    fn variance_proxy_values() {
        assert!((remark2().variance_proxy() - 4.0).abs() < 1e-15);
        let g = GaussianMixture::gaussian(vec![1.0, 2.0, 3.0], 2.0).unwrap();
        assert_eq!(g.variance_proxy(), 6.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = remark2();
        assert!(matches!(g.log_density(&[f64::NAN, 0.0]), Err(SlipsError::InvalidInput(_))));
        assert!(matches!(g.log_density(&[0.0]), Err(SlipsError::InvalidInput(_))));
        assert!(GaussianMixture::new(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![1.5, -0.5], vec![vec![0.0], vec![1.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![0.5, 0.5], vec![vec![0.0], vec![1.0, 2.0]], 1.0).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], 0.0).is_err());
        assert!(matches!(g.oracle_denoiser(0.0, 1.0, &[0.0, 0.0]), Err(SlipsError::Domain(_))));
        assert!(matches!(g.oracle_denoiser(1.0, -1.0, &[0.0, 0.0]), Err(SlipsError::Domain(_))));
    }

    #[test]
    fn single_gaussian_oracles_are_conjugate() {
        let s2 = 2.0;
        let sigma: f64 = 1.3;
        let g = GaussianMixture::gaussian(vec![0.0], s2).unwrap();
        for &t in &[0.1, 1.0, 7.0] {
            for &y in &[-3.0, 0.5, 4.0] {
                let u = g.oracle_denoiser(t, sigma, &[y]).unwrap()[0];
                let expected = s2 * y / (sigma * sigma + t * s2);
                assert!((u - expected).abs() < 1e-13, "t={t} y={y}");
                let tc = g.oracle_posterior_trace_cov(t, sigma, &[y]).unwrap();
                let v = s2 * sigma * sigma / (sigma * sigma + t * s2);
                assert!((tc - v).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trace_cov_localizes() {
        let g = GaussianMixture::gaussian(vec![0.0, 0.0], 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for t in [1.0, 10.0, 100.0, 1000.0] {
            let v = g.oracle_posterior_trace_cov(t, 1.0, &[0.5 * t, -0.2 * t]).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 2.0 / 1000.0);
    }

    #[test]
    fn bimodal_denoiser_symmetric_at_zero() {
        let g = remark2();
        let u = g.oracle_denoiser(0.7, 2f64.sqrt(), &[0.0, 0.0]).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn extreme_observation_underflows_cleanly() {
        let g = GaussianMixture::symmetric_bimodal(1, 3.0, 0.5, 0.5).unwrap();
        let u = g.oracle_denoiser(1e4, 1.0, &[3.0e4]).unwrap();
        assert!(u[0].is_finite());
        assert!((u[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn score_norm_of_standard_normal() {
        let g = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let est = g.score_norm_sq(200_000, &mut rng).unwrap();
        assert!(est.within(1.0, 4.0), "{est:?}");
    }

    #[test]
    fn serde_roundtrip_validates() {
        let g = remark2();
        let json = serde_json::to_string(&g).unwrap();
        let back: GaussianMixture = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"weights":[0.2,0.2],"means":[[0.0],[1.0]],"variance":1.0}"#;
        assert!(serde_json::from_str::<GaussianMixture>(bad).is_err());
    }
}
