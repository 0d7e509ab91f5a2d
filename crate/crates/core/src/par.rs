//! Batch mapping, parallel when the `parallel` feature is on.
//!
//! Every batch operation in this crate (dataset evaluation, bulk
//! extraction) funnels through [`par_map`] so the parallelism decision
//! lives in exactly one place. Output order always matches input order,
//! which keeps aggregation deterministic regardless of scheduling.

/// Maps `f` over `items`, preserving order.
///
/// With the `parallel` feature (the default) the work is spread across the
/// rayon thread pool; without it this is a plain sequential map. Results
/// are identical either way.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, preserving order.
///
/// With the `parallel` feature (the default) the work is spread across the
/// rayon thread pool; without it this is a plain sequential map. Results
/// are identical either way.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Always-sequential twin of [`par_map`], kept for benchmarking the
/// thread-pool speedup against a true single-thread baseline.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_and_preserve_order() {
        let items: Vec<u64> = (0..500).collect();
        let f = |x: &u64| x.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
        assert_eq!(par_map(&items, f), seq_map(&items, f));
        assert_eq!(par_map(&items, |x| *x), items);
    }

    #[test]
    fn empty_input_maps_to_empty_output() {
        let none: Vec<i32> = Vec::new();
        assert!(par_map(&none, |x| x + 1).is_empty());
    }
}
