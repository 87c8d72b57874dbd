//! Data-parallel kernels with a sequential fallback.
//!
//! Everything compute-heavy in this crate funnels through two primitives:
//! `for_rows` (disjoint output rows of a matrix kernel) and `run_all`
//! (independent tasks such as the runs of a lambda sweep). With the
//! `parallel` feature (default) they dispatch to rayon; without it they run
//! sequentially. Both variants are exported so the bench suite can compare
//! them directly.
//!
//! Reductions elsewhere in the crate stay order-fixed, so results are
//! bit-identical with and without the feature.

/// Dot product with eight independent accumulator lanes. The summation
/// order is fixed (lane-strided, then a balanced lane tree), so results are
/// deterministic; the lanes exist so the reduction can vectorize.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
        acc[4] += xa[4] * xb[4];
        acc[5] += xa[5] * xb[5];
        acc[6] += xa[6] * xb[6];
        acc[7] += xa[7] * xb[7];
    }
    for (i, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        acc[i] += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Sequential `for_rows`: apply `f(row_index, row_slice)` to each row.
pub fn for_rows_seq<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    debug_assert!(row_len > 0 && out.len() % row_len == 0);
    for (i, row) in out.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}

/// Parallel `for_rows` over rayon.
#[cfg(feature = "parallel")]
pub fn for_rows_par<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    use rayon::prelude::*;
    debug_assert!(row_len > 0 && out.len() % row_len == 0);
    out.par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Row-parallel kernels are only worth the fork/join overhead above this
/// many output elements.
const PAR_THRESHOLD: usize = 32 * 1024;

/// Apply `f` to each output row, in parallel when available and worthwhile.
pub fn for_rows<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= PAR_THRESHOLD {
            for_rows_par(out, row_len, f);
            return;
        }
    }
    for_rows_seq(out, row_len, f);
}

/// Sequential `run_all`.
pub fn run_all_seq<T, R, F>(tasks: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync,
{
    tasks.into_iter().map(f).collect()
}

/// Parallel `run_all`; results keep the input order.
#[cfg(feature = "parallel")]
pub fn run_all_par<T, R, F>(tasks: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    tasks.into_par_iter().map(f).collect()
}

/// Run independent tasks, optionally capping the worker count.
///
/// `jobs = Some(1)` forces sequential execution even with the feature on.
pub fn run_all<T, R, F>(tasks: Vec<T>, jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        match jobs {
            Some(1) => run_all_seq(tasks, f),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .expect("thread pool");
                pool.install(|| run_all_par(tasks, f))
            }
            None => run_all_par(tasks, f),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        run_all_seq(tasks, f)
    }
}
