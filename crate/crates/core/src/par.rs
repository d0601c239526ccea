//! Data-parallel map over sweep points.
//!
//! Sweeps in this crate (tuning grids, design grids, synthetic maps) are
//! embarrassingly parallel: every point is independent and any randomness
//! is drawn from a per-point substream. [`par_map`] fans the work out over
//! rayon when the `parallel` feature is enabled and degrades to a plain
//! sequential map otherwise; either way results come back in input order,
//! so the two builds produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is on.
/// Results are returned in input order.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(&f).collect()
    }
}

/// Like [`par_map`] but hands `f` the item index as well, for per-point
/// seed derivation.
pub fn par_map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Sequential map with the same signature as [`par_map`], kept available in
/// all builds so benchmarks can compare the two paths directly.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(&f).collect()
}
