//! Batch execution: one dispatch point for the data-parallel and the
//! sequential path.
//!
//! The crate's embarrassingly parallel loops (multistart runs, sweep points,
//! coercivity sampling) all funnel through [`run_batch`]. With the `parallel`
//! feature enabled (the default) the flag chooses between rayon and a plain
//! sequential loop at runtime, so benchmarks can compare both in one build;
//! without the feature the sequential loop is all there is. Results keep the
//! input order either way, so output is deterministic regardless of path.

/// Map `f` over `items`, in parallel when `parallel` is set and the
/// `parallel` feature is compiled in.
pub fn run_batch<I, O, F>(parallel: bool, items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            use rayon::prelude::*;
            return items.into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    items.into_iter().map(f).collect()
}

/// Default for the runtime `parallel` switches: on exactly when the
/// `parallel` feature is compiled in.
pub fn default_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_preserve_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = run_batch(false, items.clone(), |x| x * x);
        let par = run_batch(true, items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[17], 289);
    }
}
