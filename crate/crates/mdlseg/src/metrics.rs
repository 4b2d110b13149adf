//! Segmentation quality metrics and multi-annotator aggregation.
//!
//! Two families share this module. Window metrics (`pk`, `windowdiff`)
//! slide a window over the frame axis and count boundary disagreements
//! between hypothesis and reference. Partition metrics (`cluster_accuracy`,
//! `nmi`, `ari`, `ded`) compare the two segmentations as clusterings of the
//! frames, indifferent to segment ids. A report bundles all of them at one
//! window size; aggregation over several annotators keeps the per-annotator
//! reports plus their direction-aware best and arithmetic mean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::best_assignment_total;
use crate::features::ReferenceAnnotation;
use crate::segmentation::Segmentation;
use crate::SPEC_VERSION;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("label sequences differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label sequences must be non-empty")]
    EmptyLabels,
    #[error("window size {k} must be smaller than the sequence length {n}")]
    WindowTooLarge { k: usize, n: usize },
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("at least one reference annotation is required")]
    NoReferences,
}

/// All metrics of one hypothesis against one reference.
///
/// `acc`, `nmi`, and `pk_score` live in [0, 100] and `ari` in [-100, 100],
/// higher better; `pk_error` and `windowdiff_error` are fractions in [0, 1]
/// and `ded_error` a percent in [0, 100], lower better. `pk_score` is
/// always `100 * (1 - pk_error)`, reporting the same measurement in both
/// orientations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub pk_error: f64,
    pub pk_score: f64,
    pub windowdiff_error: f64,
    pub ded_error: f64,
    /// Window size the Pk/WindowDiff sweeps used.
    pub window_k: usize,
}

/// One annotator's report, tagged with their id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorReport {
    pub annotator_id: String,
    pub report: MetricReport,
}

/// Reports against every annotator, with the best and the mean.
///
/// `best` takes each metric's most favorable value over annotators (max
/// where higher is better, min where lower is); `mean` averages each field.
/// Their `window_k` is the rounded mean of the per-annotator windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRefReport {
    pub per_annotator: Vec<AnnotatorReport>,
    pub best: MetricReport,
    pub mean: MetricReport,
}

fn check_same_n(hyp: &Segmentation, reference: &Segmentation) -> Result<usize, MetricError> {
    if hyp.n() != reference.n() {
        return Err(MetricError::LengthMismatch {
            left: hyp.n(),
            right: reference.n(),
        });
    }
    Ok(hyp.n())
}

/// Default window: half the mean reference segment length, at least 1.
pub fn default_window(reference: &Segmentation) -> usize {
    (reference.n() / (2 * reference.num_segments())).max(1)
}

fn resolve_window(
    reference: &Segmentation,
    k: Option<usize>,
) -> Result<usize, MetricError> {
    let k = match k {
        Some(0) => return Err(MetricError::ZeroWindow),
        Some(k) => k,
        None => default_window(reference),
    };
    if k >= reference.n() {
        return Err(MetricError::WindowTooLarge { k, n: reference.n() });
    }
    Ok(k)
}

/// Joint count table of two equal-length label sequences, with labels
/// compacted in order of first appearance by value.
fn contingency(a: &[usize], b: &[usize]) -> Vec<Vec<f64>> {
    use std::collections::BTreeMap;
    let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
        let mut map = BTreeMap::new();
        for &l in labels {
            let next = map.len();
            map.entry(l).or_insert(next);
        }
        map
    };
    let ia = index(a);
    let ib = index(b);
    let mut table = vec![vec![0.0f64; ib.len()]; ia.len()];
    for (&la, &lb) in a.iter().zip(b) {
        table[ia[&la]][ib[&lb]] += 1.0;
    }
    table
}

fn check_labels(hyp: &[usize], reference: &[usize]) -> Result<(), MetricError> {
    if hyp.len() != reference.len() {
        return Err(MetricError::LengthMismatch {
            left: hyp.len(),
            right: reference.len(),
        });
    }
    if hyp.is_empty() {
        return Err(MetricError::EmptyLabels);
    }
    Ok(())
}

/// Percent of frames explained by the best one-to-one matching between
/// hypothesis and reference clusters.
pub fn cluster_accuracy(hyp: &[usize], reference: &[usize]) -> Result<f64, MetricError> {
    check_labels(hyp, reference)?;
    let table = contingency(hyp, reference);
    let matched = best_assignment_total(&table, true)
        .expect("contingency tables are rectangular and finite");
    Ok(100.0 * matched / hyp.len() as f64)
}

/// Mutual information between the labelings over the mean of their
/// entropies, as a percent; two zero-entropy labelings count as 100.
pub fn nmi(hyp: &[usize], reference: &[usize]) -> Result<f64, MetricError> {
    check_labels(hyp, reference)?;
    let table = contingency(hyp, reference);
    let n = hyp.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let entropy = |sums: &[f64]| -> f64 {
        -sums
            .iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| s / n * (s / n).ln())
            .sum::<f64>()
    };
    let h_hyp = entropy(&rows);
    let h_ref = entropy(&cols);
    let denom = 0.5 * (h_hyp + h_ref);
    if denom == 0.0 {
        return Ok(100.0);
    }
    // Each term uses the same log expressions as the entropies, so two
    // identical labelings give info == denom bitwise and the score is an
    // exact 100.
    let mut info = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0.0 {
                let joint = (c / n).ln();
                info += c / n * (joint - (rows[i] / n).ln() - (cols[j] / n).ln());
            }
        }
    }
    Ok((100.0 * (info / denom)).clamp(0.0, 100.0))
}

/// Rand index adjusted for chance, as a percent; degenerate tables where
/// chance explains everything count as 100.
pub fn ari(hyp: &[usize], reference: &[usize]) -> Result<f64, MetricError> {
    check_labels(hyp, reference)?;
    let table = contingency(hyp, reference);
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let n = hyp.len() as f64;
    let total_pairs = choose2(n);
    if total_pairs == 0.0 {
        return Ok(100.0);
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let a: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let b: f64 = (0..table[0].len())
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = a * b / total_pairs;
    let max_index = 0.5 * (a + b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(100.0);
    }
    // The ratio is formed before scaling so that identical labelings, where
    // numerator and denominator are the same float, score an exact 100.
    Ok(100.0 * ((index - expected) / denom))
}

/// Window disagreement rate: over every start i in [0, n-k), an error when
/// exactly one of the segmentations puts frames i and i+k in the same
/// segment.
pub fn pk(
    hyp: &Segmentation,
    reference: &Segmentation,
    k: Option<usize>,
) -> Result<f64, MetricError> {
    let n = check_same_n(hyp, reference)?;
    let k = resolve_window(reference, k)?;
    let hl = hyp.frame_labels();
    let rl = reference.frame_labels();
    let mut errors = 0usize;
    for i in 0..(n - k) {
        if (hl[i] == hl[i + k]) != (rl[i] == rl[i + k]) {
            errors += 1;
        }
    }
    Ok(errors as f64 / (n - k) as f64)
}

/// Break positions folded into a prefix count: entry p holds the number of
/// breaks at positions 1..=p.
fn break_prefix(seg: &Segmentation) -> Vec<usize> {
    let mut prefix = vec![0usize; seg.n() + 1];
    for &b in seg.breaks() {
        prefix[b] = 1;
    }
    for p in 1..prefix.len() {
        prefix[p] += prefix[p - 1];
    }
    prefix
}

/// Window disagreement rate on break counts: an error when the two
/// segmentations place different numbers of breaks inside (i, i+k].
pub fn windowdiff(
    hyp: &Segmentation,
    reference: &Segmentation,
    k: Option<usize>,
) -> Result<f64, MetricError> {
    let n = check_same_n(hyp, reference)?;
    let k = resolve_window(reference, k)?;
    let hp = break_prefix(hyp);
    let rp = break_prefix(reference);
    let mut errors = 0usize;
    for i in 0..(n - k) {
        if hp[i + k] - hp[i] != rp[i + k] - rp[i] {
            errors += 1;
        }
    }
    Ok(errors as f64 / (n - k) as f64)
}

/// Percent of frames left unexplained by the best one-to-one matching
/// between hypothesis and reference segments, computed from interval
/// overlaps; complements `cluster_accuracy` to exactly 100.
pub fn ded(hyp: &Segmentation, reference: &Segmentation) -> Result<f64, MetricError> {
    let n = check_same_n(hyp, reference)?;
    let overlaps: Vec<Vec<f64>> = hyp
        .segments()
        .iter()
        .map(|&(hs, he)| {
            reference
                .segments()
                .iter()
                .map(|&(rs, re)| he.min(re).saturating_sub(hs.max(rs)) as f64)
                .collect()
        })
        .collect();
    let matched = best_assignment_total(&overlaps, true)
        .expect("overlap matrices are rectangular and finite");
    Ok(100.0 * (n as f64 - matched) / n as f64)
}

/// Evaluates every metric of `hyp` against one reference at one window
/// size (the reference's default when `k` is `None`).
pub fn evaluate(
    hyp: &Segmentation,
    reference: &Segmentation,
    k: Option<usize>,
) -> Result<MetricReport, MetricError> {
    check_same_n(hyp, reference)?;
    let k = resolve_window(reference, k)?;
    let hl = hyp.frame_labels();
    let rl = reference.frame_labels();
    let pk_error = pk(hyp, reference, Some(k))?;
    Ok(MetricReport {
        acc: cluster_accuracy(&hl, &rl)?,
        nmi: nmi(&hl, &rl)?,
        ari: ari(&hl, &rl)?,
        pk_error,
        pk_score: 100.0 * (1.0 - pk_error),
        windowdiff_error: windowdiff(hyp, reference, Some(k))?,
        ded_error: ded(hyp, reference)?,
        window_k: k,
    })
}

/// Evaluates against every annotator and aggregates.
///
/// Passing `k` fixes one window size for everyone; otherwise each
/// annotator's default applies.
pub fn aggregate_multi(
    hyp: &Segmentation,
    refs: &[ReferenceAnnotation],
    k: Option<usize>,
) -> Result<MultiRefReport, MetricError> {
    if refs.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let mut per_annotator = Vec::with_capacity(refs.len());
    for r in refs {
        per_annotator.push(AnnotatorReport {
            annotator_id: r.annotator_id.clone(),
            report: evaluate(hyp, &r.segmentation(), k)?,
        });
    }

    let reports: Vec<&MetricReport> = per_annotator.iter().map(|a| &a.report).collect();
    let count = reports.len() as f64;
    let fold = |pick: &dyn Fn(f64, f64) -> f64, get: &dyn Fn(&MetricReport) -> f64| {
        reports[1..]
            .iter()
            .fold(get(reports[0]), |acc, r| pick(acc, get(r)))
    };
    let mean_of = |get: &dyn Fn(&MetricReport) -> f64| {
        reports.iter().map(|r| get(r)).sum::<f64>() / count
    };
    let mean_k = (reports.iter().map(|r| r.window_k).sum::<usize>() as f64 / count)
        .round() as usize;

    let best = MetricReport {
        acc: fold(&f64::max, &|r| r.acc),
        nmi: fold(&f64::max, &|r| r.nmi),
        ari: fold(&f64::max, &|r| r.ari),
        pk_error: fold(&f64::min, &|r| r.pk_error),
        pk_score: fold(&f64::max, &|r| r.pk_score),
        windowdiff_error: fold(&f64::min, &|r| r.windowdiff_error),
        ded_error: fold(&f64::min, &|r| r.ded_error),
        window_k: mean_k,
    };
    let mean = MetricReport {
        acc: mean_of(&|r| r.acc),
        nmi: mean_of(&|r| r.nmi),
        ari: mean_of(&|r| r.ari),
        pk_error: mean_of(&|r| r.pk_error),
        pk_score: mean_of(&|r| r.pk_score),
        windowdiff_error: mean_of(&|r| r.windowdiff_error),
        ded_error: mean_of(&|r| r.ded_error),
        window_k: mean_k,
    };
    Ok(MultiRefReport { per_annotator, best, mean })
}

/// Serialized form of a multi-annotator evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDoc {
    pub spec_version: u32,
    pub per_annotator: Vec<AnnotatorReport>,
    pub best: MetricReport,
    pub mean: MetricReport,
}

impl EvalDoc {
    pub fn new(report: &MultiRefReport) -> Self {
        Self {
            spec_version: SPEC_VERSION,
            per_annotator: report.per_annotator.clone(),
            best: report.best.clone(),
            mean: report.mean.clone(),
        }
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal input.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("doc serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
