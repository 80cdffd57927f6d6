//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (on by default) batch loops run on rayon;
//! without it the same helpers run sequential loops. Reductions always
//! happen in fixed index order, so the two modes produce bit-identical
//! results and repeated runs are deterministic regardless of thread
//! scheduling.

/// Map `f` over `0..n` and collect results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Always-sequential twin of [`map_indexed`]; the benchmark baseline.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Split `items` into chunks of `chunk_size`, fold each chunk sequentially
/// with `fold_chunk`, then combine the per-chunk results in chunk order.
///
/// Chunk boundaries are part of the contract: both execution modes use the
/// same chunking and the same in-order combination, which pins the floating
/// point summation order.
pub fn chunked_reduce<I, A, FC, FM>(items: &[I], chunk_size: usize, fold_chunk: FC, merge: FM) -> Option<A>
where
    I: Sync,
    A: Send,
    FC: Fn(&[I]) -> A + Sync + Send,
    FM: FnMut(A, A) -> A,
{
    let chunk_size = chunk_size.max(1);
    let partials: Vec<A>;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        partials = items.par_chunks(chunk_size).map(|c| fold_chunk(c)).collect();
    }
    #[cfg(not(feature = "parallel"))]
    {
        partials = items.chunks(chunk_size).map(|c| fold_chunk(c)).collect();
    }
    partials.into_iter().reduce(merge)
}

/// Always-sequential twin of [`chunked_reduce`] with identical chunking.
pub fn chunked_reduce_seq<I, A, FC, FM>(
    items: &[I],
    chunk_size: usize,
    fold_chunk: FC,
    merge: FM,
) -> Option<A>
where
    FC: Fn(&[I]) -> A,
    FM: FnMut(A, A) -> A,
{
    let chunk_size = chunk_size.max(1);
    let partials: Vec<A> = items.chunks(chunk_size).map(|c| fold_chunk(c)).collect();
    partials.into_iter().reduce(merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_reduce_identically() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.1 + 0.01).collect();
        let fold = |c: &[f64]| c.iter().sum::<f64>();
        let a = chunked_reduce(&xs, 37, fold, |x, y| x + y).unwrap();
        let b = chunked_reduce_seq(&xs, 37, fold, |x, y| x + y).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn map_preserves_index_order() {
        let out = map_indexed(10, |i| i * i);
        assert_eq!(out, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }
}
