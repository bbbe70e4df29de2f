//! Deterministic reductions.
//!
//! Items are accumulated sequentially within fixed chunks of [`CHUNK`]; chunk
//! partials are then combined by a balanced pairwise tree. The result depends
//! only on the item order, never on how work is scheduled.

use alloc::vec;
use alloc::vec::Vec;

pub const CHUNK: usize = 1024;

/// Pairwise tree sum of equally sized partial vectors.
pub fn pairwise_merge(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    if parts.is_empty() {
        return Vec::new();
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Partial sums of one chunk: items `start..end` accumulated in order.
pub fn chunk_partial<F>(start: usize, end: usize, width: usize, f: &mut F) -> Vec<f64>
where
    F: FnMut(usize, &mut [f64]),
{
    let mut acc = vec![0.0; width];
    for i in start..end {
        f(i, &mut acc);
    }
    acc
}

/// Sums `width`-dimensional contributions of items `0..n`; `f(i, acc)` adds
/// item `i` into `acc`.
pub fn chunked_sum<F>(n: usize, width: usize, mut f: F) -> Vec<f64>
where
    F: FnMut(usize, &mut [f64]),
{
    if n == 0 {
        return vec![0.0; width];
    }
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .map(|c| chunk_partial(c * CHUNK, ((c + 1) * CHUNK).min(n), width, &mut f))
        .collect();
    pairwise_merge(parts)
}

/// Like [`chunked_sum`], but `f(start, end, acc)` receives a whole chunk of
/// items so that it can process them in blocks.
pub fn chunked_ranges<F>(n: usize, width: usize, mut f: F) -> Vec<f64>
where
    F: FnMut(usize, usize, &mut [f64]),
{
    if n == 0 {
        return vec![0.0; width];
    }
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .map(|c| {
            let mut acc = vec![0.0; width];
            f(c * CHUNK, ((c + 1) * CHUNK).min(n), &mut acc);
            acc
        })
        .collect();
    pairwise_merge(parts)
}

/// Deterministic sum of a slice.
pub fn sum(values: &[f64]) -> f64 {
    chunked_sum(values.len(), 1, |i, acc| acc[0] += values[i])[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_match() {
        let v: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        assert_eq!(sum(&v), 4999.0 * 5000.0 / 2.0);
        assert_eq!(sum(&[]), 0.0);
    }

    #[test]
    fn merge_is_pairwise_in_order() {
        let parts = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(pairwise_merge(parts), vec![6.0]);
    }
}
