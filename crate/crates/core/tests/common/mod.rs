//! Reference implementations for the integration tests, written from the model
//! definitions and sharing no code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// A 1-D mixture `sum w_i N(m_i, s2)`.
#[derive(Clone, Debug)]
pub struct Mix1 {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub s2: f64,
}

impl Mix1 {
    pub fn pdf(&self, x: f64) -> f64 {
        self.w.iter().zip(&self.m).map(|(w, m)| w * normal_pdf(x, *m, self.s2)).sum()
    }

    /// Density of `Y_t = t X + sigma B_t`: a mixture of `N(t m_i, t^2 s2 + t sigma^2)`.
    pub fn p_t(&self, t: f64, sigma: f64, y: f64) -> f64 {
        let v = t * t * self.s2 + t * sigma * sigma;
        self.w.iter().zip(&self.m).map(|(w, m)| w * normal_pdf(y, t * m, v)).sum()
    }

    /// `d/dy log p_t(y)` from the closed-form mixture.
    pub fn score_t(&self, t: f64, sigma: f64, y: f64) -> f64 {
        let v = t * t * self.s2 + t * sigma * sigma;
        let num: f64 = self
            .w
            .iter()
            .zip(&self.m)
            .map(|(w, m)| w * normal_pdf(y, t * m, v) * (t * m - y) / v)
            .sum();
        num / self.p_t(t, sigma, y)
    }

    /// Posterior mean `E[X | Y_t = y]` by quadrature over `x`.
    pub fn posterior_mean_quad(&self, t: f64, sigma: f64, y: f64) -> f64 {
        let lik = |x: f64| normal_pdf(y, t * x, sigma * sigma * t) * self.pdf(x);
        let (a, b) = self.window();
        let z = simpson(lik, a, b, 20_000);
        simpson(|x| x * lik(x), a, b, 20_000) / z
    }

    /// Posterior variance by quadrature.
    pub fn posterior_var_quad(&self, t: f64, sigma: f64, y: f64) -> f64 {
        let lik = |x: f64| normal_pdf(y, t * x, sigma * sigma * t) * self.pdf(x);
        let (a, b) = self.window();
        let z = simpson(lik, a, b, 20_000);
        let m = simpson(|x| x * lik(x), a, b, 20_000) / z;
        simpson(|x| (x - m).powi(2) * lik(x), a, b, 20_000) / z
    }

    /// `int |d/dx log pi|^2 pi dx` by quadrature.
    pub fn fisher(&self) -> f64 {
        let (a, b) = self.window();
        let h = 1e-5;
        simpson(
            |x| {
                let p = self.pdf(x);
                let dp = (self.pdf(x + h) - self.pdf(x - h)) / (2.0 * h);
                if p > 0.0 {
                    dp * dp / p
                } else {
                    0.0
                }
            },
            a,
            b,
            20_000,
        )
    }

    fn window(&self) -> (f64, f64) {
        let sd = self.s2.sqrt();
        let lo = self.m.iter().cloned().fold(f64::INFINITY, f64::min) - 12.0 * sd;
        let hi = self.m.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 12.0 * sd;
        (lo, hi)
    }
}

/// `E[X | Y_t = y]` for the isotropic mixture `sum w_i N(m_i, s2 I)` via Gaussian
/// conjugacy: per-component posterior means weighted by each component's evidence.
pub fn gmm_denoiser(w: &[f64], means: &[Vec<f64>], s2: f64, t: f64, sigma: f64, y: &[f64]) -> Vec<f64> {
    let d = y.len();
    let s2n = sigma * sigma;
    // Y | component i ~ N(t m_i, (t^2 s2 + t sigma^2) I)
    let v = t * t * s2 + t * s2n;
    let logs: Vec<f64> = w
        .iter()
        .zip(means)
        .map(|(wi, m)| {
            let r2: f64 = (0..d).map(|j| (y[j] - t * m[j]).powi(2)).sum();
            wi.ln() - r2 / (2.0 * v)
        })
        .collect();
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = ws.iter().sum();
    // X | Y, i ~ N(mu_i, .) with precision 1/s2 + t/sigma^2 and mean (m/s2 + y/sigma^2) / prec
    let prec = 1.0 / s2 + t / s2n;
    (0..d)
        .map(|j| {
            ws.iter()
                .zip(means)
                .map(|(wi, m)| wi / z * (m[j] / s2 + y[j] / s2n) / prec)
                .sum()
        })
        .collect()
}

/// Log-density of `sum w_i N(m_i, s2 I)`.
pub fn gmm_log_density(w: &[f64], means: &[Vec<f64>], s2: f64, x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let terms: Vec<f64> = w
        .iter()
        .zip(means)
        .map(|(wi, m)| {
            let r2: f64 = x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
            wi.ln() - r2 / (2.0 * s2) - 0.5 * d * (2.0 * PI * s2).ln()
        })
        .collect();
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}

/// Central finite-difference gradient.
pub fn fd_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Discretization constant straight from its definition, in a different loop shape
/// from the library's: first-difference list, then second differences.
pub fn c_disc_oracle(t: &[f64]) -> f64 {
    let steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut total = steps[0] / t[0];
    for k in 1..steps.len() {
        total += f64::max(0.0, steps[k] - steps[k - 1]) / t[k];
    }
    total
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}
