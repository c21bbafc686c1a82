//! Sample-quality metrics: sliced total variation, mode weights and moment errors.
//!
//! Sliced TV projects both sample sets on random unit directions and takes the
//! histogram TV of each projection. It is a biased surrogate for the TV distance:
//! finite samples push it up (bin noise), coarse bins push it down.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipsError};
use crate::rng::stream_rng;
use crate::stats::{dist_sq, dot, RunningMoments};
use crate::target::{ExactSampler, TargetModel};

/// Row-major sample matrix, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(SlipsError::InvalidInput(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| SlipsError::InvalidInput("no samples".into()))?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(SlipsError::InvalidInput("rows of unequal length".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Applies `f` to every row in place.
    pub fn map_rows<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Result<Self> {
        let rows: Vec<Vec<f64>> = self.rows().map(f).collect();
        Self::from_rows(&rows)
    }
}

/// `n` exact draws; chunk `c` of 4096 draws uses generator stream `c` of `seed`.
pub fn reference_samples(sampler: &dyn ExactSampler, dim: usize, n: usize, seed: u64) -> Samples {
    const CHUNK: usize = 4096;
    let n_chunks = n.div_ceil(CHUNK);
    let data: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let rows = CHUNK.min(n - c * CHUNK);
            let mut out = Vec::with_capacity(rows * dim);
            for _ in 0..rows {
                out.extend(sampler.draw(&mut rng));
            }
            out
        })
        .collect();
    Samples { dim, data }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    SlicedTv,
    ModeWeights,
    MomentError,
}

/// A metric value (or vector of values) with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: MetricKind,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
    pub params: serde_json::Value,
}

impl MetricRecord {
    pub fn value(&self) -> f64 {
        self.values[0]
    }

    pub fn std_error(&self) -> f64 {
        self.std_errors[0]
    }
}

/// Histogram binning rule for sliced TV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bins {
    /// Freedman-Diaconis width on the pooled projections, bin count clamped to [16, 512].
    FreedmanDiaconis,
    Fixed(usize),
}

pub const DEFAULT_PROJECTIONS: usize = 64;

/// Random unit directions in `R^dim`.
pub fn random_directions<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-12 {
                break v.iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

fn quantile_sorted_copy(xs: &mut [f64], q: f64) -> f64 {
    let idx = ((xs.len() - 1) as f64 * q).round() as usize;
    let (_, v, _) = xs.select_nth_unstable_by(idx, f64::total_cmp);
    *v
}

fn bin_count(pa: &[f64], pb: &[f64], lo: f64, hi: f64, bins: Bins) -> usize {
    match bins {
        Bins::Fixed(n) => n.max(1),
        Bins::FreedmanDiaconis => {
            let mut pooled: Vec<f64> = pa.iter().chain(pb).copied().collect();
            let q1 = quantile_sorted_copy(&mut pooled, 0.25);
            let q3 = quantile_sorted_copy(&mut pooled, 0.75);
            let n = pa.len().min(pb.len()) as f64;
            let width = 2.0 * (q3 - q1) * n.powf(-1.0 / 3.0);
            if width > 0.0 && (hi - lo) > 0.0 {
                (((hi - lo) / width).ceil() as usize).clamp(16, 512)
            } else {
                16
            }
        }
    }
}

/// Half the L1 distance between the normalized histograms of `pa` and `pb`
/// on their pooled range.
pub fn histogram_tv(pa: &[f64], pb: &[f64], bins: Bins) -> f64 {
    let lo = pa.iter().chain(pb).copied().fold(f64::INFINITY, f64::min);
    let hi = pa.iter().chain(pb).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return 0.0;
    }
    let nb = bin_count(pa, pb, lo, hi, bins);
    let width = (hi - lo) / nb as f64;
    let fill = |xs: &[f64]| {
        let mut h = vec![0u64; nb];
        for &x in xs {
            let i = (((x - lo) / width) as usize).min(nb - 1);
            h[i] += 1;
        }
        h
    };
    let (ha, hb) = (fill(pa), fill(pb));
    let (na, nb_) = (pa.len() as f64, pb.len() as f64);
    0.5 * ha
        .iter()
        .zip(&hb)
        .map(|(&a, &b)| (a as f64 / na - b as f64 / nb_).abs())
        .sum::<f64>()
}

fn project(s: &Samples, dir: &[f64]) -> Vec<f64> {
    s.rows().map(|r| dot(r, dir)).collect()
}

/// Sliced TV over the given directions.
pub fn sliced_tv_with_directions(
    a: &Samples,
    b: &Samples,
    directions: &[Vec<f64>],
    bins: Bins,
) -> Result<MetricRecord> {
    if a.dim() != b.dim() {
        return Err(SlipsError::InvalidInput(format!(
            "sample dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(SlipsError::InvalidInput("sliced TV needs nonempty sample sets".into()));
    }
    if directions.is_empty() || directions.iter().any(|d| d.len() != a.dim()) {
        return Err(SlipsError::InvalidInput("projection directions do not match the dimension".into()));
    }
    let per: Vec<f64> = directions
        .par_iter()
        .map(|dir| histogram_tv(&project(a, dir), &project(b, dir), bins))
        .collect();
    let acc: RunningMoments = per.iter().copied().collect();
    let est = acc.estimate();
    Ok(MetricRecord {
        metric: MetricKind::SlicedTv,
        values: vec![est.value],
        std_errors: vec![est.std_error],
        n_samples: a.len().min(b.len()),
        params: serde_json::json!({
            "n_projections": directions.len(),
            "bins": bins,
            "n_a": a.len(),
            "n_b": b.len(),
        }),
    })
}

/// Mean histogram TV over `n_projections` random unit directions, with the standard
/// error across projections.
pub fn sliced_tv<R: Rng + ?Sized>(
    a: &Samples,
    b: &Samples,
    n_projections: usize,
    bins: Bins,
    rng: &mut R,
) -> Result<MetricRecord> {
    if n_projections == 0 {
        return Err(SlipsError::Domain("n_projections must be >= 1".into()));
    }
    let dirs = random_directions(a.dim(), n_projections, rng);
    sliced_tv_with_directions(a, b, &dirs, bins)
}

/// Fraction of samples nearest to each mode mean, with multinomial standard errors.
pub fn mode_weights(samples: &Samples, mode_means: &[Vec<f64>]) -> Result<MetricRecord> {
    if samples.is_empty() {
        return Err(SlipsError::InvalidInput("mode weights of an empty sample".into()));
    }
    if mode_means.len() < 2 {
        return Err(SlipsError::Domain("mode weights need at least two modes".into()));
    }
    if mode_means.iter().any(|m| m.len() != samples.dim()) {
        return Err(SlipsError::InvalidInput("mode means do not match the sample dimension".into()));
    }
    let mut counts = vec![0usize; mode_means.len()];
    for row in samples.rows() {
        let nearest = mode_means
            .iter()
            .enumerate()
            .map(|(i, m)| (i, dist_sq(row, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        counts[nearest] += 1;
    }
    let n = samples.len();
    let mut values: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    // Put any rounding residue on the largest weight so the vector sums to one.
    let residue = 1.0 - values.iter().sum::<f64>();
    if residue != 0.0 {
        let imax = (0..values.len()).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
        values[imax] += residue;
    }
    let std_errors = values.iter().map(|w| (w * (1.0 - w) / n as f64).sqrt()).collect();
    Ok(MetricRecord {
        metric: MetricKind::ModeWeights,
        values,
        std_errors,
        n_samples: n,
        params: serde_json::json!({ "mode_means": mode_means }),
    })
}

/// Relative moment errors: `||mean_hat - m|| / R` and `|E_hat ||X - m||^2 - R^2| / R^2`,
/// with `m` the exact mean and `R^2` the exact variance proxy.
pub fn moment_error(samples: &Samples, target: &dyn TargetModel) -> Result<MetricRecord> {
    let mean = target
        .exact_mean()
        .ok_or_else(|| SlipsError::Unsupported("moment error needs the exact target mean".into()))?;
    let r2 = target
        .variance_proxy()
        .ok_or_else(|| SlipsError::Unsupported("moment error needs the exact variance proxy".into()))?;
    if samples.is_empty() {
        return Err(SlipsError::InvalidInput("moment error of an empty sample".into()));
    }
    if samples.dim() != mean.len() {
        return Err(SlipsError::InvalidInput("sample dimension does not match the target".into()));
    }
    let n = samples.len() as f64;
    let mut emp_mean = vec![0.0; samples.dim()];
    for row in samples.rows() {
        for (m, x) in emp_mean.iter_mut().zip(row) {
            *m += x / n;
        }
    }
    let sq: RunningMoments = samples.rows().map(|r| dist_sq(r, &mean)).collect();
    let r = r2.sqrt();
    let mean_err = dist_sq(&emp_mean, &mean).sqrt() / r;
    let second_err = (sq.mean() - r2).abs() / r2;
    Ok(MetricRecord {
        metric: MetricKind::MomentError,
        values: vec![mean_err, second_err],
        std_errors: vec![(sq.mean() / n).sqrt() / r, sq.estimate().std_error / r2],
        n_samples: samples.len(),
        params: serde_json::json!({ "exact_mean": mean, "variance_proxy": r2 }),
    })
}
