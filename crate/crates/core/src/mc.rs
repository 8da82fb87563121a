//! Deterministic parallel Monte Carlo over independent paths.

use rayon::prelude::*;

use crate::estimators::{NodeAccumulator, NodeSamples};

/// Evaluate `f(0), ..., f(n - 1)` in parallel and return the results in index
/// order, so downstream reductions see a fixed canonical ordering.
pub fn run_paths<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Collect one row of per-node scalars per path.
pub fn collect_node_samples<F>(n: usize, nodes: usize, f: F) -> NodeSamples
where
    F: Fn(u64) -> Vec<f64> + Sync + Send,
{
    let rows = run_paths(n, f);
    NodeSamples::from_rows(nodes, rows)
}

/// Like [`collect_node_samples`] for several quantities computed from the same
/// path: `f` returns one row per quantity.
pub fn collect_multi_samples<F>(n: usize, widths: &[usize], f: F) -> Vec<NodeSamples>
where
    F: Fn(u64) -> Vec<Vec<f64>> + Sync + Send,
{
    let per_path = run_paths(n, f);
    let mut out: Vec<NodeSamples> = widths.iter().map(|&w| NodeSamples::new(w)).collect();
    for rows in per_path {
        assert_eq!(rows.len(), widths.len(), "one row per quantity");
        for (s, row) in out.iter_mut().zip(rows) {
            s.push(&row);
        }
    }
    out
}

/// Paths evaluated per parallel block by [`accumulate_paths`].
pub const BLOCK: usize = 4096;

/// Evaluate `f` on paths `0..n` in parallel blocks of [`BLOCK`] and hand the
/// results to `fold` in index order. Memory stays bounded by one block and the
/// fold sees the same sequence for any number of threads.
pub fn fold_paths<T, F, G>(n: usize, f: F, mut fold: G)
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
    G: FnMut(T),
{
    let mut start = 0usize;
    while start < n {
        let end = (start + BLOCK).min(n);
        let block: Vec<T> = (start as u64..end as u64).into_par_iter().map(&f).collect();
        block.into_iter().for_each(&mut fold);
        start = end;
    }
}

/// Streaming version of [`collect_multi_samples`]: per-quantity accumulators
/// filled through [`fold_paths`].
pub fn accumulate_paths<F>(n: usize, widths: &[usize], f: F) -> Vec<NodeAccumulator>
where
    F: Fn(u64) -> Vec<Vec<f64>> + Sync + Send,
{
    let mut acc: Vec<NodeAccumulator> = widths.iter().map(|&w| NodeAccumulator::new(w)).collect();
    fold_paths(n, f, |path| {
        assert_eq!(path.len(), widths.len(), "one row per quantity");
        for (a, row) in acc.iter_mut().zip(&path) {
            a.push(row);
        }
    });
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v = run_paths(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i as u64));
    }

    #[test]
    fn accumulation_is_thread_count_independent() {
        use crate::estimators::NodeStatistics;
        let f = |i: u64| {
            vec![vec![
                ((i * 7919) % 101) as f64 / 7.0,
                1.0 / (1.0 + i as f64),
            ]]
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| accumulate_paths(BLOCK + 123, &[2], f))
        };
        let (a, b) = (run(1), run(4));
        for node in 0..2 {
            assert_eq!(a[0].mean_and_se(node), b[0].mean_and_se(node));
        }
    }

    #[test]
    fn multi_samples_split_rows() {
        let s = collect_multi_samples(3, &[2, 1], |i| vec![vec![i as f64, 1.0], vec![-(i as f64)]]);
        assert_eq!(s[0].replications(), 3);
        assert_eq!(s[0].row(2), &[2.0, 1.0]);
        assert_eq!(s[1].row(1), &[-1.0]);
    }
}
