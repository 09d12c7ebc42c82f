//! Execution strategy for data-parallel loops.
//!
//! Implementations must return results in index order. Callers only reduce
//! the returned vectors sequentially, so output is independent of the
//! executor and its thread count.

use alloc::vec::Vec;
use core::ops::Range;

pub trait Executor: Sync {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}

/// Splits `0..total` into contiguous ranges whose length is a multiple of
/// `unit` (the last may be shorter) and maps `f` over them. Chunk boundaries
/// depend only on the sizes.
pub fn map_chunks<E, T, F>(exec: &E, total: usize, unit: usize, f: F) -> Vec<T>
where
    E: Executor + ?Sized,
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let unit = unit.max(1);
    let per = unit * (4096 / unit).max(1);
    let n = total.div_ceil(per);
    exec.map(n, |c| f(c * per..((c + 1) * per).min(total)))
}
