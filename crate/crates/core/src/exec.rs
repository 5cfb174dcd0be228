//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) independent work items are spread
//! over the rayon pool; without it everything runs on the calling thread.
//! Results always come back in input order and every reduction in the crate
//! is performed sequentially over that order, so outputs are bit-identical
//! whatever the thread count.

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Runs `op` on a pool with `threads` workers (0 = library default).
///
/// `threads == 1` is the sequential baseline used by the benches.
#[cfg(feature = "parallel")]
pub fn with_threads<R, F>(threads: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if threads == 0 {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R, F>(_threads: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    op()
}

/// Number of workers `map` will use on the current pool.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
