//! Deterministic parallel reductions.
//!
//! Values are produced in parallel but always summed sequentially in index
//! order, so results do not depend on the thread count.

use rayon::prelude::*;

/// `Σ_{i<n} f(i)` with a fixed summation order.
pub fn par_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let terms: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    terms.iter().sum()
}

/// Parallel map over `0..n` collected in index order.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Maximum of `f(i)` over `0..n`; `0` for empty ranges.
pub fn par_max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    par_map(n, f).into_iter().fold(0.0, f64::max)
}
