//! Data-parallel ensemble execution with a deterministic, order-preserving
//! reduction. The parallel path is behind the `parallel` feature; the serial
//! path is always available so the two can be benchmarked against each other.

/// Maps `f` over `0..n` serially, collecting results in index order.
pub fn map_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync,
    T: Send,
{
    (0..n).map(f).collect()
}

/// Maps `f` over `0..n` on the rayon pool. Collection preserves index
/// order, so reductions over the result are schedule-independent.
#[cfg(feature = "parallel")]
pub fn map_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Ensemble map used throughout the crate: parallel when the feature is
/// enabled, serial otherwise. Results are always in index order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_serial(n, f)
    }
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}
