//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, the helpers fan out over rayon's pool unless
//! the calling thread (or the process default) is in [`ExecMode::Sequential`].
//! Without the feature everything runs on the calling thread.
//!
//! Reductions split their input into groups of [`REDUCE_GROUP`] items, sum
//! each group in item order and then sum the group results in group order.
//! The partition never depends on the thread count, so both modes produce
//! bit-identical floating point results.

use std::cell::Cell;
use std::sync::atomic::{AtomicU8, Ordering};

/// Items per partial sum in [`grouped_sum`].
pub const REDUCE_GROUP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

static DEFAULT_MODE: AtomicU8 = AtomicU8::new(0);

thread_local! {
    static OVERRIDE: Cell<Option<ExecMode>> = const { Cell::new(None) };
}

/// Sets the process-wide default mode.
pub fn set_default_mode(mode: ExecMode) {
    DEFAULT_MODE.store(
        match mode {
            ExecMode::Parallel => 0,
            ExecMode::Sequential => 1,
        },
        Ordering::Relaxed,
    );
}

/// The mode in effect on the calling thread.
pub fn current_mode() -> ExecMode {
    if !cfg!(feature = "parallel") {
        return ExecMode::Sequential;
    }
    OVERRIDE.with(|o| o.get()).unwrap_or_else(|| {
        if DEFAULT_MODE.load(Ordering::Relaxed) == 1 {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    })
}

/// Sizes the global worker pool. Only the first call has an effect; later
/// calls return an error. A no-op without the `parallel` feature.
pub fn set_threads(n: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}

/// Runs `f` with `mode` forced on the calling thread.
pub fn with_mode<R>(mode: ExecMode, f: impl FnOnce() -> R) -> R {
    struct Restore(Option<ExecMode>);
    impl Drop for Restore {
        fn drop(&mut self) {
            let prev = self.0;
            OVERRIDE.with(|o| o.set(prev));
        }
    }
    let _restore = Restore(OVERRIDE.with(|o| o.replace(Some(mode))));
    f()
}

/// Calls `f(index, chunk)` for every `chunk_len`-sized chunk of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if current_mode() == ExecMode::Parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(i, c);
    }
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if current_mode() == ExecMode::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Sums per-item contributions into a buffer of `len` values.
///
/// `f(item, acc)` must add item's contribution into `acc`.
pub fn grouped_sum<F>(n_items: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let groups = n_items.div_ceil(REDUCE_GROUP);
    let partials = map_range(groups, |g| {
        let mut acc = vec![0.0; len];
        let end = ((g + 1) * REDUCE_GROUP).min(n_items);
        for item in g * REDUCE_GROUP..end {
            f(item, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
