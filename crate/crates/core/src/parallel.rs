//! Data-parallel helpers. With the `parallel` feature these dispatch to rayon;
//! without it they run the same closures sequentially in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of items handed to one rayon task.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 64;

/// Writes `f(i)` into `out[i]` for every index.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut()
            .with_min_len(MIN_CHUNK)
            .enumerate()
            .for_each(|(i, o)| *o = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `op` on a pool with `threads` workers (`None` keeps the global pool).
///
/// Without the `parallel` feature the thread count is ignored.
pub fn with_threads<R: Send>(threads: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
                return pool.install(op);
            }
        }
        op()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        op()
    }
}

/// Whether the crate was built with the rayon backend.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_and_map_preserve_order() {
        let mut v = vec![0.0; 1000];
        fill_indexed(&mut v, |i| i as f64 * 2.0);
        assert!(v.iter().enumerate().all(|(i, x)| *x == 2.0 * i as f64));
        let items: Vec<u32> = (0..500).collect();
        let out = map_ordered(&items, |x| x + 1);
        assert_eq!(out, (1..501).collect::<Vec<_>>());
        assert_eq!(with_threads(Some(2), || 7), 7);
    }
}
