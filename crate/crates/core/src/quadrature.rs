//! One-dimensional quadrature used by the total-variation oracles.

/// Number of nodes used by the default 1-D TV quadrature.
pub const TV_NODES: usize = 1 << 16;

/// Composite trapezoid rule of `f` over `[lo, hi]` with `n` nodes (`n >= 2`).
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n >= 2 && hi > lo, "trapezoid needs n >= 2 and hi > lo");
    let h = (hi - lo) / (n - 1) as f64;
    let interior: f64 = (1..n - 1).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * (f(lo) + f(hi)) + interior)
}

/// `0.5 * int |p - q|` over `[lo, hi]` for two normalized 1-D densities.
pub fn total_variation_1d<P, Q>(p: P, q: Q, lo: f64, hi: f64, n: usize) -> f64
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    0.5 * trapezoid(|x| (p(x) - q(x)).abs(), lo, hi, n)
}

/// Integration window `[min - 10 spread, max + 10 spread]` covering all listed centres.
pub fn tv_window(centres: &[f64], spread: f64) -> (f64, f64) {
    let lo = centres.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centres.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo - 10.0 * spread, hi + 10.0 * spread)
}
