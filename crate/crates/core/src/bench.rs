//! Equivalent-point statistics and point-subset sampling.

use alloc::{vec, vec::Vec};

use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{
    error::{Error, Result},
    mapping::{map_region_pair_dense, MappedPointSet},
    region::RegionPair,
};

/// Width of a histogram bin in `log10(count)`.
pub const LOG_BIN_WIDTH: f64 = 0.25;

/// Bin `k` covers counts with `k/4 <= log10(count) < (k+1)/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBin {
    pub index: u32,
    pub lo: f64,
    pub hi: f64,
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    /// Equivalent point pairs per region pair, in input order.
    pub counts: Vec<usize>,
    pub median: Option<f64>,
    /// Bins from 0 up to the highest occupied one.
    pub histogram: Vec<LogBin>,
}

/// Largest `k` with `10^k <= count^4`, i.e. `floor(4·log10(count))`,
/// computed without rounding.
fn log_bin(count: usize) -> u32 {
    let c4 = (count as u128).saturating_pow(4);
    let (mut k, mut p) = (0u32, 10u128);
    while p <= c4 {
        k += 1;
        match p.checked_mul(10) {
            Some(next) => p = next,
            None => break,
        }
    }
    k
}

/// Median with the mean of the two middle values for even lengths.
pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    })
}

/// Dense mapping sizes of region pairs, their median and a histogram of
/// `log10(count)`.
pub fn equivalent_point_stats<'a>(pairs: impl IntoIterator<Item = &'a RegionPair>) -> Result<PointStats> {
    let counts = pairs
        .into_iter()
        .map(|p| map_region_pair_dense(&p.handle, &p.target, p.index).map(|m| m.len()))
        .collect::<Result<Vec<_>>>()?;
    let bins: Vec<u32> = counts.iter().map(|&c| log_bin(c)).collect();
    let top = bins.iter().copied().max();
    let mut histogram = Vec::new();
    if let Some(top) = top {
        let mut freq = vec![0usize; top as usize + 1];
        for b in &bins {
            freq[*b as usize] += 1;
        }
        histogram = freq
            .into_iter()
            .enumerate()
            .map(|(k, frequency)| LogBin {
                index: k as u32,
                lo: k as f64 * LOG_BIN_WIDTH,
                hi: (k + 1) as f64 * LOG_BIN_WIDTH,
                frequency,
            })
            .collect();
    }
    Ok(PointStats {
        median: median(&counts),
        counts,
        histogram,
    })
}

/// Number of pairs kept for `fraction` of `n`: `ceil(fraction·n)`, where a
/// product within 1e-9 of an integer counts as that integer.
pub fn subset_size(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = libm::round(x);
    let k = if libm::fabs(x - r) <= 1e-9 { r } else { libm::ceil(x) };
    (k as usize).clamp(1, n.max(1))
}

/// Uniform sample without replacement of `ceil(fraction·N)` pairs; kept pairs
/// stay in their original order.
pub fn sample_point_subset(pairs: &MappedPointSet, fraction: f64, seed: u64) -> Result<MappedPointSet> {
    if pairs.is_empty() {
        return Err(Error::EmptyMapping);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidValue(alloc::format!("subset fraction {fraction} is outside (0, 1]")));
    }
    let n = pairs.len();
    let k = subset_size(fraction, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = index::sample(&mut rng, n, k).into_vec();
    keep.sort_unstable();
    Ok(MappedPointSet {
        pairs: keep.into_iter().map(|i| pairs.pairs[i]).collect(),
        ..pairs.clone()
    })
}

/// Arithmetic mean, `None` when empty.
pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}
