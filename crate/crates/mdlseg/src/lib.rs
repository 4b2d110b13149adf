//! Globally optimal segmentation of feature-vector sequences by minimum
//! description length.
//!
//! The core idea: encoding a segment costs a fixed number of bits for its
//! Gaussian parameters plus the bits needed to encode each frame under that
//! Gaussian. Short segments fit their frames tightly but pay the parameter
//! cost often; long segments amortize parameters but fit loosely. The
//! partition minimizing total bits balances the two without any tuned
//! threshold, and a dynamic program finds it exactly.
//!
//! The crate ships everything needed to run and judge that segmenter at desk
//! scale:
//!
//! - [`features`] — sequence I/O (CSV and a binary layout), reference
//!   annotations, precision inference, and a seeded synthetic generator.
//! - [`mdl`] — the bit-cost model, the cost table, the exact search, and a
//!   brute-force enumerator for cross-checking it.
//! - [`baselines`] — uniform splits and a contiguity-respecting k-means.
//! - [`metrics`] — Pk, WindowDiff, differential edit distance, cluster
//!   accuracy, NMI, and adjusted Rand, with multi-annotator aggregation.
//! - [`assignment`] — an exact Hungarian solver and the face-distance
//!   pipeline that names diarized speakers after characters.
//! - [`segmentation`] — the shared break-list representation.

pub mod assignment;
pub mod baselines;
pub mod features;
pub mod mdl;
pub mod metrics;
pub mod segmentation;

pub use features::{FeatureSequence, ReferenceAnnotation};
pub use mdl::{MdlParams, SegmentCostTable};
pub use segmentation::Segmentation;

/// Version stamp carried by every serialized result document as
/// `spec_version`, so downstream consumers can detect format changes.
pub const SPEC_VERSION: u32 = 1;
