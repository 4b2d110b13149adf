//! Description-length segment costs and the optimal segmenter.
//!
//! A segment is scored by the bits needed to transmit it: a fixed charge for
//! its model parameters (a mean and a variance per dimension, at the storage
//! precision of the data) plus the information content of its values under
//! the fitted diagonal Gaussian. Splitting pays the parameter charge once
//! per segment, so the globally cheapest partition balances model count
//! against fit — found exactly by dynamic programming over a table of all
//! allowed segment costs. A bounded exhaustive search over every partition
//! double-checks the optimum on small inputs.

use std::f64::consts::{LOG2_E, TAU};

use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureSequence;
use crate::segmentation::Segmentation;

/// Default lower clamp on each fitted per-dimension variance.
pub const DEFAULT_VAR_FLOOR: f64 = 1e-4;
/// Default cap on segment length: about ten minutes of video at typical
/// keyframe spacing.
pub const DEFAULT_MAX_SCENE_LEN: usize = 300;
/// Largest instance `brute_force_segment` accepts; the partition count
/// doubles with every frame.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MdlError {
    #[error("instance too large for exhaustive search: {n} frames (limit {limit})")]
    TooLarge { n: usize, limit: usize },
}

/// Knobs of the segment cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdlParams {
    /// Feature dimensionality; must match the sequence being scored.
    pub d: usize,
    /// Bits per stored model parameter.
    pub m: u32,
    /// Longest allowed segment, `None` for unbounded.
    pub max_len: Option<usize>,
    /// Lower clamp on fitted variances.
    pub var_floor: f64,
}

impl MdlParams {
    /// Parameters for `d`-dimensional data stored at `m` bits, no length
    /// cap, default variance floor.
    pub fn new(d: usize, m: u32) -> Self {
        Self {
            d,
            m,
            max_len: None,
            var_floor: DEFAULT_VAR_FLOOR,
        }
    }

    /// Parameters matching a sequence, with the parameter width inferred
    /// from the narrowest float encoding that holds its values exactly.
    pub fn for_sequence(seq: &FeatureSequence) -> Self {
        Self::new(seq.d(), crate::features::infer_precision_bits(seq))
    }

    /// Returns the parameters with the given segment-length cap.
    pub fn with_max_len(mut self, max_len: Option<usize>) -> Self {
        self.max_len = max_len;
        self
    }

    /// Returns the parameters with the given variance floor.
    pub fn with_var_floor(mut self, var_floor: f64) -> Self {
        self.var_floor = var_floor;
        self
    }
}

/// Bits charged for one segment's model parameters: a mean and a variance
/// per dimension, each stored in `m` bits.
pub fn param_bits(params: &MdlParams) -> f64 {
    2.0 * params.d as f64 * f64::from(params.m)
}

/// Information content, in bits, of `t` one-dimensional values with summed
/// squared deviation `ssd` under their own maximum-likelihood Gaussian,
/// with the fitted variance clamped below by `var_floor`.
pub fn gaussian_bits(t: usize, ssd: f64, var_floor: f64) -> f64 {
    let t = t as f64;
    let var = (ssd / t).max(var_floor);
    0.5 * t * (TAU * var).log2() + ssd / (2.0 * var) * LOG2_E
}

/// Bits to transmit the segment `[start, end)` of a sequence: the parameter
/// charge plus the per-dimension Gaussian information content, computed
/// directly from the definition in two passes over the values.
pub fn segment_bitcost(
    seq: &FeatureSequence,
    start: usize,
    end: usize,
    params: &MdlParams,
) -> f64 {
    assert!(
        start < end && end <= seq.n(),
        "segment [{start}, {end}) out of range for {} frames",
        seq.n()
    );
    assert_eq!(seq.d(), params.d, "parameter dimensionality mismatch");
    let t = end - start;
    let mut bits = param_bits(params);
    for dim in 0..seq.d() {
        let mut sum = 0.0;
        for i in start..end {
            sum += seq.value(i, dim);
        }
        let mean = sum / t as f64;
        let mut ssd = 0.0;
        for i in start..end {
            let r = seq.value(i, dim) - mean;
            ssd += r * r;
        }
        bits += gaussian_bits(t, ssd, params.var_floor);
    }
    bits
}

/// Precomputed bit costs of every allowed segment.
///
/// Row `i` stores the costs of `[i, i+1)`, `[i, i+2)`, ... up to the length
/// cap or the end of the sequence.
#[derive(Debug, Clone)]
pub struct SegmentCostTable {
    n: usize,
    max_len: usize,
    rows: Vec<Vec<f64>>,
}

impl SegmentCostTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Effective segment-length cap (the sequence length when uncapped).
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Bit cost of the segment `[start, end)`.
    pub fn cost(&self, start: usize, end: usize) -> f64 {
        assert!(
            start < end && end <= self.n && end - start <= self.max_len,
            "segment [{start}, {end}) not in table (n={}, cap={})",
            self.n,
            self.max_len
        );
        self.rows[start][end - start - 1]
    }

    /// Number of stored segment costs.
    pub fn num_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Scores every allowed segment via prefix sums of the values and their
/// squares, one table row per start position.
///
/// Each row depends only on the shared prefix arrays, so the result is
/// bitwise identical no matter how many threads compute it, and each cost
/// agrees with `segment_bitcost` up to the rounding of the prefix-sum
/// shortcut (tested to 1e-9 relative).
pub fn build_cost_table(seq: &FeatureSequence, params: &MdlParams) -> SegmentCostTable {
    assert_eq!(seq.d(), params.d, "parameter dimensionality mismatch");
    assert_ne!(params.max_len, Some(0), "segment-length cap must be at least 1");
    let n = seq.n();
    let d = seq.d();
    let cap = params.max_len.unwrap_or(n).min(n);

    // prefix[i] holds per-dimension sums over the first i frames
    let mut p1 = vec![0.0f64; (n + 1) * d];
    let mut p2 = vec![0.0f64; (n + 1) * d];
    for i in 0..n {
        for dim in 0..d {
            let v = seq.value(i, dim);
            p1[(i + 1) * d + dim] = p1[i * d + dim] + v;
            p2[(i + 1) * d + dim] = p2[i * d + dim] + v * v;
        }
    }

    let pb = param_bits(params);
    let var_floor = params.var_floor;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hi = (i + cap).min(n);
            let mut row = Vec::with_capacity(hi - i);
            for j in (i + 1)..=hi {
                let t = (j - i) as f64;
                let mut bits = pb;
                for dim in 0..d {
                    let s1 = p1[j * d + dim] - p1[i * d + dim];
                    let s2 = p2[j * d + dim] - p2[i * d + dim];
                    // catastrophic cancellation can leave a tiny negative
                    let ssd = (s2 - s1 * s1 / t).max(0.0);
                    bits += gaussian_bits(j - i, ssd, var_floor);
                }
                row.push(bits);
            }
            row
        })
        .collect();

    SegmentCostTable { n, max_len: cap, rows }
}

/// Cheapest partition of the whole sequence into allowed segments, by
/// back-to-front dynamic programming over the cost table.
///
/// `best[i]` is the minimal bits for frames `i..n`; each step tries every
/// allowed first-segment end `k` and keeps the earliest `k` on ties.
/// Returns the partition and its total bits.
pub fn dp_segment(table: &SegmentCostTable) -> (Segmentation, f64) {
    let n = table.n();
    let cap = table.max_len();
    let mut best = vec![0.0f64; n + 1];
    let mut next = vec![n; n + 1];
    for i in (0..n).rev() {
        let hi = (i + cap).min(n);
        let mut b = f64::INFINITY;
        let mut arg = i + 1;
        for k in (i + 1)..=hi {
            let c = table.cost(i, k) + best[k];
            if c < b {
                b = c;
                arg = k;
            }
        }
        best[i] = b;
        next[i] = arg;
    }

    let mut breaks = Vec::new();
    let mut at = 0;
    while at < n {
        let k = next[at];
        if k < n {
            breaks.push(k);
        }
        at = k;
    }
    let seg = Segmentation::new(n, breaks).expect("chained ends are strictly increasing");
    (seg, best[0])
}

/// Builds the cost table and runs the dynamic program in one call.
pub fn segment_sequence(seq: &FeatureSequence, params: &MdlParams) -> (Segmentation, f64) {
    let table = build_cost_table(seq, params);
    dp_segment(&table)
}

/// Checks the dynamic program by enumerating every partition of the
/// sequence (all 2^(n-1) of them), so it refuses instances beyond
/// `BRUTE_FORCE_LIMIT` frames.
///
/// Totals are accumulated right to left, associating the additions exactly
/// as the dynamic program does, and ties pick the partition whose list of
/// segment ends is lexicographically smallest — the same partition the
/// dynamic program's earliest-end rule reconstructs.
pub fn brute_force_segment(
    seq: &FeatureSequence,
    params: &MdlParams,
) -> Result<(Segmentation, f64), MdlError> {
    let n = seq.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(MdlError::TooLarge { n, limit: BRUTE_FORCE_LIMIT });
    }
    let table = build_cost_table(seq, params);
    let cap = table.max_len();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut ends: Vec<usize> = Vec::with_capacity(n);
    for mask in 0u32..(1 << (n - 1)) {
        ends.clear();
        for b in 1..n {
            if mask >> (b - 1) & 1 == 1 {
                ends.push(b);
            }
        }
        ends.push(n);

        let mut prev = 0;
        if !ends.iter().all(|&e| {
            let ok = e - prev <= cap;
            prev = e;
            ok
        }) {
            continue;
        }

        let mut total = 0.0;
        let mut hi = n;
        for idx in (0..ends.len()).rev() {
            let lo = if idx == 0 { 0 } else { ends[idx - 1] };
            total = table.cost(lo, hi) + total;
            hi = lo;
        }

        let better = match &best {
            None => true,
            Some((bt, be)) => total < *bt || (total == *bt && ends < *be),
        };
        if better {
            best = Some((total, ends.clone()));
        }
    }

    let (total, mut ends) = best.expect("splitting at every frame is always allowed");
    ends.pop();
    let seg = Segmentation::new(n, ends).expect("mask bits are strictly increasing positions");
    Ok((seg, total))
}
