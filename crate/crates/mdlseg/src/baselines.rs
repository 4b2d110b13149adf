//! Reference segmenters to compare the optimal one against.
//!
//! Three baselines cover the usual comparison axes: fixed-length chopping
//! that knows nothing, fixed-count chopping that is told the true number of
//! scenes, and seeded k-means over the feature vectors whose label changes
//! become breaks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::FeatureSequence;
use crate::segmentation::Segmentation;

/// Default iteration cap for the k-means baseline.
pub const DEFAULT_KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("uniform baseline needs a mean segment length of at least 1")]
    ZeroMeanLen,
    #[error("segment count {k} not in 1..={n}")]
    BadSegmentCount { k: usize, n: usize },
    #[error("cluster count {k} not in 1..={n}")]
    BadClusterCount { k: usize, n: usize },
}

/// Which baseline to run, with its knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSpec {
    /// Break every `mean_len` frames, ignoring the data.
    Uniform { mean_len: usize },
    /// Split into `k_true` equal parts, `k_true` given by an oracle.
    UniformOracle { k_true: usize },
    /// K-means on the feature vectors; every label change is a break.
    ContiguousKmeans { k: usize, max_iters: usize, seed: u64 },
}

/// Breaks every `mean_len` frames: positions `mean_len`, `2*mean_len`, ...
/// strictly inside the sequence.
pub fn uniform_breaks(n: usize, mean_len: usize) -> Result<Segmentation, BaselineError> {
    if mean_len == 0 {
        return Err(BaselineError::ZeroMeanLen);
    }
    let breaks: Vec<usize> = (mean_len..n).step_by(mean_len).collect();
    Ok(Segmentation::new(n, breaks).expect("stepped positions are strictly increasing"))
}

/// Splits into `k_true` segments of as equal length as possible: breaks at
/// `round(i*n/k_true)`, deduplicated and kept strictly inside the sequence.
pub fn uniform_oracle_breaks(n: usize, k_true: usize) -> Result<Segmentation, BaselineError> {
    if k_true == 0 || k_true > n {
        return Err(BaselineError::BadSegmentCount { k: k_true, n });
    }
    let mut breaks: Vec<usize> = (1..k_true)
        .map(|i| ((i * n) as f64 / k_true as f64).round() as usize)
        .filter(|&b| b > 0 && b < n)
        .collect();
    breaks.dedup();
    Ok(Segmentation::new(n, breaks).expect("rounded quantiles are strictly increasing"))
}

/// Turns a per-frame label sequence into a segmentation: every position
/// where the label changes becomes a break.
pub fn labels_to_breaks(labels: &[usize]) -> Segmentation {
    assert!(!labels.is_empty(), "label sequence must be non-empty");
    let breaks: Vec<usize> = (1..labels.len())
        .filter(|&i| labels[i] != labels[i - 1])
        .collect();
    Segmentation::new(labels.len(), breaks).expect("change positions are strictly increasing")
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K-means over the frames' feature vectors (Lloyd iteration, seeded by
/// sampling `k` distinct frames as initial centroids), read off as a
/// segmentation via `labels_to_breaks`. Ties go to the lowest centroid
/// index; a cluster that loses all members keeps its previous centroid.
/// Deterministic per seed.
pub fn contiguous_kmeans(
    seq: &FeatureSequence,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Segmentation, BaselineError> {
    let n = seq.n();
    if k == 0 || k > n {
        return Err(BaselineError::BadClusterCount { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, k);
    let mut centroids: Vec<Vec<f64>> = picks.iter().map(|i| seq.row(i).to_vec()).collect();

    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (c, centroid) in centroids.iter().enumerate() {
                    let d = squared_distance(seq.row(i), centroid);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect()
    };

    let mut labels = assign(&centroids);
    for _ in 0..max_iters {
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for dim in 0..seq.d() {
                centroid[dim] = members.iter().map(|&i| seq.value(i, dim)).sum::<f64>()
                    / members.len() as f64;
            }
        }
        let new_labels = assign(&centroids);
        if new_labels == labels {
            break;
        }
        labels = new_labels;
    }
    Ok(labels_to_breaks(&labels))
}

/// Runs the named baseline on a sequence.
pub fn run_baseline(
    seq: &FeatureSequence,
    spec: &BaselineSpec,
) -> Result<Segmentation, BaselineError> {
    match *spec {
        BaselineSpec::Uniform { mean_len } => uniform_breaks(seq.n(), mean_len),
        BaselineSpec::UniformOracle { k_true } => uniform_oracle_breaks(seq.n(), k_true),
        BaselineSpec::ContiguousKmeans { k, max_iters, seed } => {
            contiguous_kmeans(seq, k, max_iters, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::synth_sequence;

    #[test]
    fn uniform_breaks_step_through_the_sequence() {
        assert_eq!(uniform_breaks(9, 3).unwrap().breaks(), &[3, 6]);
        assert_eq!(uniform_breaks(10, 3).unwrap().breaks(), &[3, 6, 9]);
        assert_eq!(uniform_breaks(5, 1).unwrap().breaks(), &[1, 2, 3, 4]);
        assert_eq!(uniform_breaks(5, 5).unwrap().breaks(), &[] as &[usize]);
        assert_eq!(uniform_breaks(5, 99).unwrap().breaks(), &[] as &[usize]);
        assert_eq!(uniform_breaks(5, 0).unwrap_err(), BaselineError::ZeroMeanLen);
    }

    #[test]
    fn oracle_breaks_hit_rounded_quantiles() {
        assert_eq!(uniform_oracle_breaks(7, 3).unwrap().breaks(), &[2, 5]);
        assert_eq!(uniform_oracle_breaks(10, 2).unwrap().breaks(), &[5]);
        assert_eq!(uniform_oracle_breaks(5, 5).unwrap().breaks(), &[1, 2, 3, 4]);
        assert_eq!(uniform_oracle_breaks(4, 1).unwrap().breaks(), &[] as &[usize]);
        assert_eq!(
            uniform_oracle_breaks(4, 0).unwrap_err(),
            BaselineError::BadSegmentCount { k: 0, n: 4 }
        );
        assert_eq!(
            uniform_oracle_breaks(4, 5).unwrap_err(),
            BaselineError::BadSegmentCount { k: 5, n: 4 }
        );
    }

    #[test]
    fn oracle_segment_sizes_stay_balanced() {
        for n in 1..=40 {
            for k in 1..=n {
                let seg = uniform_oracle_breaks(n, k).unwrap();
                assert_eq!(seg.num_segments(), k, "n={n} k={k}");
                let sizes: Vec<usize> =
                    seg.segments().iter().map(|(s, e)| e - s).collect();
                let min = sizes.iter().min().unwrap();
                let max = sizes.iter().max().unwrap();
                assert!(max - min <= 1, "n={n} k={k}: {sizes:?}");
            }
        }
    }

    #[test]
    fn label_changes_become_breaks() {
        assert_eq!(labels_to_breaks(&[0, 0, 1, 1, 0]).breaks(), &[2, 4]);
        assert_eq!(labels_to_breaks(&[7, 7, 7]).breaks(), &[] as &[usize]);
        assert_eq!(labels_to_breaks(&[1]).n(), 1);
    }

    #[test]
    fn kmeans_separates_obvious_clusters() {
        let (seq, truth) = synth_sequence(&[8, 8], 2, 50.0, 0.01, 3).unwrap();
        let seg = contiguous_kmeans(&seq, 2, DEFAULT_KMEANS_MAX_ITERS, 0).unwrap();
        assert_eq!(seg.breaks(), truth.breaks.as_slice());
    }

    #[test]
    fn kmeans_is_deterministic_per_seed() {
        let (seq, _) = synth_sequence(&[10, 10, 10], 3, 4.0, 1.5, 8).unwrap();
        let a = contiguous_kmeans(&seq, 3, 50, 21).unwrap();
        let b = contiguous_kmeans(&seq, 3, 50, 21).unwrap();
        assert_eq!(a.breaks(), b.breaks());
    }

    #[test]
    fn kmeans_shrugs_off_a_constant_feature_shift() {
        // centroids start from data rows, so an offset moves points and
        // centers together and the nearest-center labels stay put
        let (seq, _) = synth_sequence(&[12, 10, 14], 2, 12.0, 0.2, 17).unwrap();
        let base = contiguous_kmeans(&seq, 3, 50, 9).unwrap();
        for shift in [-75.0, 31.5, 400.0] {
            let rows: Vec<Vec<f64>> = (0..seq.n())
                .map(|i| seq.row(i).iter().map(|v| v + shift).collect())
                .collect();
            let moved = FeatureSequence::from_rows(rows).unwrap();
            let got = contiguous_kmeans(&moved, 3, 50, 9).unwrap();
            assert_eq!(got.breaks(), base.breaks(), "shift {shift}");
        }
    }

    #[test]
    fn kmeans_degenerate_cluster_counts() {
        let (seq, _) = synth_sequence(&[5, 5], 1, 10.0, 0.1, 2).unwrap();
        assert_eq!(
            contiguous_kmeans(&seq, 1, 10, 0).unwrap().breaks(),
            &[] as &[usize]
        );
        let every = contiguous_kmeans(&seq, 10, 10, 0).unwrap();
        assert_eq!(every.num_segments(), 10);
        assert_eq!(
            contiguous_kmeans(&seq, 11, 10, 0).unwrap_err(),
            BaselineError::BadClusterCount { k: 11, n: 10 }
        );
        assert_eq!(
            contiguous_kmeans(&seq, 0, 10, 0).unwrap_err(),
            BaselineError::BadClusterCount { k: 0, n: 10 }
        );
    }

    #[test]
    fn run_baseline_dispatches() {
        let (seq, _) = synth_sequence(&[6, 6], 1, 20.0, 0.05, 1).unwrap();
        let u = run_baseline(&seq, &BaselineSpec::Uniform { mean_len: 4 }).unwrap();
        assert_eq!(u.breaks(), &[4, 8]);
        let o = run_baseline(&seq, &BaselineSpec::UniformOracle { k_true: 2 }).unwrap();
        assert_eq!(o.breaks(), &[6]);
        let k = run_baseline(
            &seq,
            &BaselineSpec::ContiguousKmeans { k: 2, max_iters: 50, seed: 4 },
        )
        .unwrap();
        assert_eq!(k.num_segments(), 2);
    }
}
