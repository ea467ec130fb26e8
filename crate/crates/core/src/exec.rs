//! Schedule-independent parallel evaluation.
//!
//! Work item `j` always draws from its own stream, so results only depend on
//! the index. Consumers see results strictly in index order.

use std::ops::ControlFlow;

use rayon::prelude::*;

use crate::error::Result;

const FIRST_BATCH: u64 = 256;
const MAX_BATCH: u64 = 1 << 16;

/// Evaluate `eval(j)` for `j = 0, 1, ...` in parallel batches and hand each
/// result to `consume` in index order, until it breaks or `limit` items have
/// been consumed. Returns the number of items consumed.
pub(crate) fn scan_in_order<T, F, C>(limit: u64, eval: F, mut consume: C) -> Result<u64>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
    C: FnMut(u64, T) -> Result<ControlFlow<()>>,
{
    let mut next = 0u64;
    let mut batch = FIRST_BATCH;
    while next < limit {
        let end = (next + batch).min(limit);
        let results: Vec<T> = (next..end).into_par_iter().map(&eval).collect();
        for (offset, item) in results.into_iter().enumerate() {
            let j = next + offset as u64;
            if consume(j, item)?.is_break() {
                return Ok(j + 1);
            }
        }
        next = end;
        batch = (batch * 2).min(MAX_BATCH);
    }
    Ok(next)
}

/// `f(0..n)` in parallel; the first error in index order wins.
pub(crate) fn par_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}
