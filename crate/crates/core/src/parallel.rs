//! Data-parallel map over independent work items (securities, sweep
//! configurations, seeds). With the `parallel` feature this fans out via
//! rayon; without it, it degrades to a sequential loop with identical
//! results, since items never share mutable state.

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential map, kept as the baseline side of benchmark
/// comparisons.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Caps rayon's worker count for this process. No-op without the
/// `parallel` feature or if a global pool already exists.
pub fn configure_jobs(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        if jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_and_seq_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: u64| x * x + 1;
        assert_eq!(par_map(items.clone(), f), seq_map(items, f));
    }
}
