//! Order-fixed reductions.
//!
//! Parallel loops hand back one partial per fixed-size chunk in index
//! order; the partials are then combined pairwise. Chunk boundaries depend
//! only on the problem size, so results are bit-identical for any worker
//! count.

use rayon::prelude::*;

pub const CHUNK: usize = 4096;

pub fn pairwise(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len if len <= 8 => values.iter().sum(),
        len => {
            let (a, b) = values.split_at(len / 2);
            pairwise(a) + pairwise(b)
        }
    }
}

/// Sums `f(i)` for `i in 0..len` with a reduction tree fixed by `len`.
pub fn par_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            let local: Vec<f64> = (lo..hi).map(&f).collect();
            pairwise(&local)
        })
        .collect();
    pairwise(&partials)
}

/// Column-wise pairwise sums of equally long rows.
pub fn pairwise_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            pairwise(&col)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise(&v), 500_500.0);
    }

    #[test]
    fn par_sum_is_independent_of_pool_size() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| par_sum(100_003, f));
        let b = four.install(|| par_sum(100_003, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
