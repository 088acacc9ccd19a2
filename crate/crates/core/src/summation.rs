//! Compensated accumulation and a thread-count independent parallel sum.

use rayon::prelude::*;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Neumaier) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for Neumaier {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Neumaier::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<Neumaier>().value()
}

/// Chunk length used by [`chunked_sum`]. Fixed so that the reduction tree
/// does not depend on the number of worker threads.
pub const CHUNK: usize = 4096;

/// Sums `term(i)` for `i` in `lo..hi`. Chunks are reduced in parallel and the
/// partial sums are merged in index order, so the result is bit-identical for
/// any rayon pool size.
pub fn chunked_sum<F>(lo: usize, hi: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if hi <= lo {
        return 0.0;
    }
    let n_chunks = (hi - lo).div_ceil(CHUNK);
    let partials: Vec<Neumaier> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = lo + c * CHUNK;
            let end = (start + CHUNK).min(hi);
            (start..end).map(&term).collect::<Neumaier>()
        })
        .collect();
    let mut total = Neumaier::new();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}
