//! Fold-and-merge execution, data-parallel when the `parallel` feature is on.
//!
//! Aggregation accumulators are commutative monoids (count sums), so a
//! chunked parallel fold followed by pairwise merges yields the same value
//! as the sequential fold regardless of scheduling.

use serde::{Deserialize, Serialize};

/// Which lane a fold runs on. [`Execution::Auto`] resolves to parallel when
/// the feature is enabled and the input is large enough to amortize spawns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    #[default]
    Auto,
    Sequential,
    Parallel,
}

/// Inputs smaller than this run sequentially even under `Auto`.
const PARALLEL_CUTOFF: usize = 8 * 1024;

pub fn fold_merge<T, A, MK, F, MG>(exec: Execution, items: &[T], make: MK, fold: F, merge: MG) -> A
where
    T: Sync,
    A: Send,
    MK: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &T) + Sync + Send,
    MG: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        let go_parallel = match exec {
            Execution::Parallel => true,
            Execution::Auto => items.len() >= PARALLEL_CUTOFF,
            Execution::Sequential => false,
        };
        if go_parallel && !items.is_empty() {
            use rayon::prelude::*;
            let chunk = (items.len() / (rayon::current_num_threads() * 4)).max(1024);
            return items
                .par_chunks(chunk)
                .map(|c| {
                    let mut acc = make();
                    for it in c {
                        fold(&mut acc, it);
                    }
                    acc
                })
                .reduce_with(&merge)
                .unwrap_or_else(&make);
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = &merge;
        let _ = exec;
    }
    let mut acc = make();
    for it in items {
        fold(&mut acc, it);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanes_agree() {
        let items: Vec<u64> = (0..100_000).collect();
        let make = || 0u64;
        let fold = |acc: &mut u64, x: &u64| *acc += *x;
        let merge = |a: u64, b: u64| a + b;
        let seq = fold_merge(Execution::Sequential, &items, make, fold, merge);
        let par = fold_merge(Execution::Parallel, &items, make, fold, merge);
        let auto = fold_merge(Execution::Auto, &items, make, fold, merge);
        assert_eq!(seq, par);
        assert_eq!(seq, auto);
    }

    #[test]
    fn empty_input_yields_identity() {
        let items: Vec<u64> = vec![];
        let out = fold_merge(Execution::Parallel, &items, || 7u64, |_, _: &u64| {}, |a, b| a + b);
        assert_eq!(out, 7);
    }
}
