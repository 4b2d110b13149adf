//! Contiguous partitions of a frame range, represented by break indices.
//!
//! A segmentation of `n` frames is a sorted list of breaks, each strictly
//! inside `(0, n)`. A break at `b` means frames `b - 1` and `b` belong to
//! different segments, so the segments are the half-open intervals between
//! consecutive breaks and they tile `[0, n)` exactly — contiguous,
//! non-overlapping, never empty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SPEC_VERSION;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentationError {
    #[error("a segmentation needs at least one frame")]
    EmptyRange,
    #[error("break {value} lies outside the open interval (0, {n})")]
    BreakOutOfRange { value: usize, n: usize },
    #[error("breaks must be strictly increasing, but {prev} precedes {next}")]
    NotIncreasing { prev: usize, next: usize },
}

/// A contiguous partition of the frames `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    n: usize,
    breaks: Vec<usize>,
}

impl Segmentation {
    /// Validates and wraps a break list for `n` frames.
    pub fn new(n: usize, breaks: Vec<usize>) -> Result<Self, SegmentationError> {
        if n == 0 {
            return Err(SegmentationError::EmptyRange);
        }
        for (idx, &b) in breaks.iter().enumerate() {
            if b == 0 || b >= n {
                return Err(SegmentationError::BreakOutOfRange { value: b, n });
            }
            if idx > 0 && breaks[idx - 1] >= b {
                return Err(SegmentationError::NotIncreasing {
                    prev: breaks[idx - 1],
                    next: b,
                });
            }
        }
        Ok(Self { n, breaks })
    }

    /// The single-segment partition of `[0, n)`.
    pub fn single(n: usize) -> Self {
        assert!(n >= 1, "a segmentation needs at least one frame");
        Self { n, breaks: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    pub fn num_segments(&self) -> usize {
        self.breaks.len() + 1
    }

    /// The segments as half-open `(start, end)` intervals, in order.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_segments());
        let mut start = 0;
        for &b in &self.breaks {
            out.push((start, b));
            start = b;
        }
        out.push((start, self.n));
        out
    }

    /// Segment index of every frame: non-decreasing, starting at 0.
    pub fn frame_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (seg, (start, end)) in self.segments().into_iter().enumerate() {
            for label in &mut labels[start..end] {
                *label = seg;
            }
        }
        labels
    }

    /// Length of the longest segment.
    pub fn max_segment_len(&self) -> usize {
        self.segments()
            .into_iter()
            .map(|(s, e)| e - s)
            .max()
            .expect("at least one segment")
    }
}

/// One segment of a serialized result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub start: usize,
    pub end: usize,
}

/// Serialized form of a segmentation result, shared by the optimal search,
/// the exhaustive search, and the baselines (which omit `total_bits`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDoc {
    pub spec_version: u32,
    pub n: usize,
    pub breaks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_bits: Option<f64>,
    pub segments: Vec<SegmentSpan>,
}

impl SegmentationDoc {
    pub fn new(seg: &Segmentation, total_bits: Option<f64>) -> Self {
        Self {
            spec_version: SPEC_VERSION,
            n: seg.n(),
            breaks: seg.breaks().to_vec(),
            total_bits,
            segments: seg
                .segments()
                .into_iter()
                .map(|(start, end)| SegmentSpan { start, end })
                .collect(),
        }
    }

    /// Pretty JSON with a trailing newline; byte-stable for fixed content.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("doc serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Recover the validated segmentation this document describes.
    pub fn segmentation(&self) -> Result<Segmentation, SegmentationError> {
        Segmentation::new(self.n, self.breaks.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breaks_partition_the_range() {
        let seg = Segmentation::new(10, vec![3, 7]).unwrap();
        assert_eq!(seg.num_segments(), 3);
        assert_eq!(seg.segments(), vec![(0, 3), (3, 7), (7, 10)]);
        assert_eq!(seg.max_segment_len(), 4);
    }

    #[test]
    fn single_segment_has_no_breaks() {
        let seg = Segmentation::single(5);
        assert_eq!(seg.breaks(), &[] as &[usize]);
        assert_eq!(seg.segments(), vec![(0, 5)]);
    }

    #[test]
    fn frame_labels_follow_segments() {
        let seg = Segmentation::new(4, vec![2]).unwrap();
        assert_eq!(seg.frame_labels(), vec![0, 0, 1, 1]);
        assert_eq!(Segmentation::single(3).frame_labels(), vec![0, 0, 0]);
        let fine = Segmentation::new(3, vec![1, 2]).unwrap();
        assert_eq!(fine.frame_labels(), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_invalid_breaks() {
        assert_eq!(
            Segmentation::new(0, vec![]),
            Err(SegmentationError::EmptyRange)
        );
        assert_eq!(
            Segmentation::new(5, vec![0]),
            Err(SegmentationError::BreakOutOfRange { value: 0, n: 5 })
        );
        assert_eq!(
            Segmentation::new(5, vec![5]),
            Err(SegmentationError::BreakOutOfRange { value: 5, n: 5 })
        );
        assert_eq!(
            Segmentation::new(5, vec![3, 3]),
            Err(SegmentationError::NotIncreasing { prev: 3, next: 3 })
        );
        assert_eq!(
            Segmentation::new(5, vec![4, 2]),
            Err(SegmentationError::NotIncreasing { prev: 4, next: 2 })
        );
    }

    #[test]
    fn doc_round_trips_through_json() {
        let seg = Segmentation::new(6, vec![2, 5]).unwrap();
        let doc = SegmentationDoc::new(&seg, Some(123.25));
        let text = doc.to_json();
        assert!(text.ends_with('\n'));
        let back = SegmentationDoc::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.segmentation().unwrap(), seg);
    }

    #[test]
    fn baseline_doc_omits_total_bits() {
        let seg = Segmentation::new(4, vec![1]).unwrap();
        let text = SegmentationDoc::new(&seg, None).to_json();
        assert!(!text.contains("total_bits"));
        let back = SegmentationDoc::from_json(&text).unwrap();
        assert_eq!(back.total_bits, None);
    }
}
