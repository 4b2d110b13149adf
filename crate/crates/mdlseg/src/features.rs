//! Feature-sequence I/O, validation, precision inference, and synthetic data.
//!
//! A sequence is an `n × d` matrix of finite reals, one row per keyframe, with
//! an optional non-decreasing timestamp per row. Two on-disk layouts are
//! supported: a commented CSV that is easy to eyeball, and a compact binary
//! layout that stores values at the narrowest float width which loses
//! nothing, so a save/load round trip is bit-exact. Annotation files carry
//! the reference break lists of one or more human annotators.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use half::f16;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::segmentation::Segmentation;

/// Magic bytes opening every binary feature file.
const MAGIC: &[u8; 4] = b"MDLS";
/// Binary layout version written after the magic.
const BINARY_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("no feature rows")]
    Empty,
    #[error("dimensionality must be at least 1")]
    ZeroDim,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("inconsistent row width at row {row}: expected {expected} columns, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unparseable number {token:?} at row {row}, column {col}")]
    BadNumber {
        row: usize,
        col: usize,
        token: String,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("timestamps must be non-decreasing, but row {row} goes backwards")]
    TimestampOrder { row: usize },
    #[error("timestamp count {got} does not match row count {rows}")]
    TimestampCount { got: usize, rows: usize },
    #[error("value buffer holds {got} numbers but {rows} rows of width {width} need {need}")]
    ValueCount {
        got: usize,
        rows: usize,
        width: usize,
        need: usize,
    },
    #[error("not a feature file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported binary version {0}")]
    BadVersion(u16),
    #[error("invalid precision tag {0} (expected 16, 32, or 64)")]
    BadPrecisionTag(u8),
    #[error("file truncated: needed {expected} more bytes")]
    Truncated { expected: usize },
    #[error("{0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("the binary layout does not carry timestamps; save as csv instead")]
    BinaryTimestamps,
    #[error("annotation line {line}: {detail}")]
    BadAnnotation { line: usize, detail: String },
    #[error("synthetic sequence needs at least one segment length")]
    EmptyLengths,
    #[error("synthetic segment lengths must all be at least 1")]
    ZeroLength,
    #[error("separation must be positive and finite, noise_sigma non-negative and finite")]
    BadSynthParams,
}

impl FeatureError {
    fn in_file(self, path: &Path) -> FeatureError {
        FeatureError::InFile {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> FeatureError {
    FeatureError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// On-disk layout of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FromStr for FeatureFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "binary" | "bin" => Ok(FeatureFormat::Binary),
            other => Err(format!("unknown format {other:?} (expected csv or binary)")),
        }
    }
}

impl fmt::Display for FeatureFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureFormat::Csv => "csv",
            FeatureFormat::Binary => "binary",
        })
    }
}

/// A validated time-ordered matrix of keyframe feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    n: usize,
    d: usize,
    values: Vec<f64>,
    timestamps: Option<Vec<f64>>,
}

impl FeatureSequence {
    /// Builds a sequence from a row-major value buffer of `n * d` numbers.
    pub fn new(
        n: usize,
        d: usize,
        values: Vec<f64>,
        timestamps: Option<Vec<f64>>,
    ) -> Result<Self, FeatureError> {
        if n == 0 {
            return Err(FeatureError::Empty);
        }
        if d == 0 {
            return Err(FeatureError::ZeroDim);
        }
        if values.len() != n * d {
            return Err(FeatureError::ValueCount {
                got: values.len(),
                rows: n,
                width: d,
                need: n * d,
            });
        }
        for (idx, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(FeatureError::NonFinite {
                    row: idx / d + 1,
                    col: idx % d + 1,
                });
            }
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n {
                return Err(FeatureError::TimestampCount { got: ts.len(), rows: n });
            }
            for (i, &t) in ts.iter().enumerate() {
                if !t.is_finite() {
                    return Err(FeatureError::NonFinite { row: i + 1, col: 0 });
                }
                if i > 0 && t < ts[i - 1] {
                    return Err(FeatureError::TimestampOrder { row: i + 1 });
                }
            }
        }
        Ok(Self { n, d, values, timestamps })
    }

    /// Builds a sequence from one `Vec` per row; widths must agree.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, FeatureError> {
        if rows.is_empty() {
            return Err(FeatureError::Empty);
        }
        let d = rows[0].len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(FeatureError::RowWidth {
                    row: i + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), d, values, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Feature vector of frame `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn value(&self, i: usize, dim: usize) -> f64 {
        self.values[i * self.d + dim]
    }

    /// The whole row-major value buffer.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }
}

/// One annotator's reference break list for an `n`-frame sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceAnnotation {
    pub n: usize,
    pub breaks: Vec<usize>,
    pub annotator_id: String,
}

impl ReferenceAnnotation {
    pub fn new(
        n: usize,
        breaks: Vec<usize>,
        annotator_id: impl Into<String>,
    ) -> Result<Self, crate::segmentation::SegmentationError> {
        // Reuse the segmentation rules: strictly increasing breaks in (0, n).
        let seg = Segmentation::new(n, breaks)?;
        Ok(Self {
            n,
            breaks: seg.breaks().to_vec(),
            annotator_id: annotator_id.into(),
        })
    }

    /// The segmentation these breaks describe.
    pub fn segmentation(&self) -> Segmentation {
        Segmentation::new(self.n, self.breaks.clone()).expect("validated at construction")
    }
}

/// Loads a feature file in the given layout.
pub fn load_features(
    path: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<FeatureSequence, FeatureError> {
    let path = path.as_ref();
    match format {
        FeatureFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            parse_csv(&text).map_err(|e| e.in_file(path))
        }
        FeatureFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
            parse_binary(&bytes).map_err(|e| e.in_file(path))
        }
    }
}

/// Writes a feature file in the given layout.
///
/// The binary layout stores values at the narrowest width that round-trips
/// them exactly, so loading the file back reproduces the sequence bit for
/// bit. Timestamps only survive the CSV layout.
pub fn save_features(
    path: impl AsRef<Path>,
    seq: &FeatureSequence,
    format: FeatureFormat,
) -> Result<(), FeatureError> {
    let path = path.as_ref();
    match format {
        FeatureFormat::Csv => {
            fs::write(path, render_csv(seq)).map_err(|e| io_err(path, e))
        }
        FeatureFormat::Binary => {
            if seq.timestamps.is_some() {
                return Err(FeatureError::BinaryTimestamps);
            }
            fs::write(path, render_binary(seq)).map_err(|e| io_err(path, e))
        }
    }
}

fn parse_csv(text: &str) -> Result<FeatureSequence, FeatureError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();

    // An optional `# t,f0,...` or `# f0,...` header names the columns and
    // flags whether the first one holds timestamps.
    let mut has_time = false;
    let mut declared_width = None;
    if let Some(first) = lines.peek() {
        if let Some(header) = first.trim_start().strip_prefix('#') {
            let names: Vec<&str> = header.split(',').map(str::trim).collect();
            if names.is_empty() || names.iter().any(|n| n.is_empty()) {
                return Err(FeatureError::MalformedHeader(header.trim().to_string()));
            }
            has_time = names[0] == "t";
            let feature_cols = names.len() - usize::from(has_time);
            if feature_cols == 0 {
                return Err(FeatureError::MalformedHeader(
                    "no feature columns declared".to_string(),
                ));
            }
            declared_width = Some(names.len());
            lines.next();
        }
    }

    let mut width = declared_width;
    let mut rows = 0usize;
    let mut values = Vec::new();
    let mut timestamps = Vec::new();
    for line in lines {
        rows += 1;
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = *width.get_or_insert(tokens.len());
        if tokens.len() != expected {
            return Err(FeatureError::RowWidth {
                row: rows,
                expected,
                found: tokens.len(),
            });
        }
        for (c, token) in tokens.iter().enumerate() {
            let v: f64 = token.parse().map_err(|_| FeatureError::BadNumber {
                row: rows,
                col: c + 1,
                token: token.to_string(),
            })?;
            if has_time && c == 0 {
                timestamps.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if rows == 0 {
        return Err(FeatureError::Empty);
    }
    let d = width.unwrap() - usize::from(has_time);
    if d == 0 {
        return Err(FeatureError::ZeroDim);
    }
    FeatureSequence::new(rows, d, values, has_time.then_some(timestamps))
}

fn render_csv(seq: &FeatureSequence) -> String {
    let mut out = String::new();
    let names: Vec<String> = (0..seq.d).map(|i| format!("f{i}")).collect();
    if seq.timestamps.is_some() {
        out.push_str("# t,");
    } else {
        out.push_str("# ");
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for i in 0..seq.n {
        let mut fields = Vec::with_capacity(seq.d + 1);
        if let Some(ts) = &seq.timestamps {
            fields.push(format!("{}", ts[i]));
        }
        fields.extend(seq.row(i).iter().map(|v| format!("{v}")));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn parse_binary(bytes: &[u8]) -> Result<FeatureSequence, FeatureError> {
    let mut at = 0usize;
    let take = |at: &mut usize, len: usize| -> Result<&[u8], FeatureError> {
        let end = *at + len;
        if end > bytes.len() {
            return Err(FeatureError::Truncated { expected: end - bytes.len() });
        }
        let slice = &bytes[*at..end];
        *at = end;
        Ok(slice)
    };

    if take(&mut at, 4)? != MAGIC {
        return Err(FeatureError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(FeatureError::BadVersion(version));
    }
    let n = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let tag = take(&mut at, 1)?[0];
    let width = match tag {
        16 => 2,
        32 => 4,
        64 => 8,
        other => return Err(FeatureError::BadPrecisionTag(other)),
    };
    let count = n
        .checked_mul(d)
        .ok_or(FeatureError::Truncated { expected: usize::MAX })?;
    let payload = take(&mut at, count * width)?;
    if at != bytes.len() {
        return Err(FeatureError::TrailingBytes(bytes.len() - at));
    }
    let mut values = Vec::with_capacity(count);
    match tag {
        16 => {
            for c in payload.chunks_exact(2) {
                values.push(f64::from(f16::from_le_bytes([c[0], c[1]])));
            }
        }
        32 => {
            for c in payload.chunks_exact(4) {
                values.push(f64::from(f32::from_le_bytes(c.try_into().unwrap())));
            }
        }
        _ => {
            for c in payload.chunks_exact(8) {
                values.push(f64::from_le_bytes(c.try_into().unwrap()));
            }
        }
    }
    FeatureSequence::new(n, d, values, None)
}

fn render_binary(seq: &FeatureSequence) -> Vec<u8> {
    let tag = infer_precision_bits(seq) as u8;
    let width = usize::from(tag) / 8;
    let mut out = Vec::with_capacity(19 + seq.values.len() * width);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.n as u64).to_le_bytes());
    out.extend_from_slice(&(seq.d as u32).to_le_bytes());
    out.push(tag);
    for &v in &seq.values {
        match tag {
            16 => out.extend_from_slice(&f16::from_f64(v).to_le_bytes()),
            32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            _ => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

/// Narrowest float width, in bits, that represents every value exactly.
///
/// A value "fits" a width when rounding it to that width and back changes
/// nothing. 64 always fits, so the result is one of 16, 32, or 64; it feeds
/// the per-parameter bit charge of the segment cost.
pub fn infer_precision_bits(seq: &FeatureSequence) -> u32 {
    let mut m = 16;
    for &v in &seq.values {
        m = m.max(required_bits(v));
        if m == 64 {
            break;
        }
    }
    m
}

fn required_bits(v: f64) -> u32 {
    if f64::from(f16::from_f64(v)) == v {
        16
    } else if f64::from(v as f32) == v {
        32
    } else {
        64
    }
}

/// Loads the annotation file format: a first line `n=<N>`, then one line per
/// annotator of the form `annotator_id: b1 b2 ... bk`.
pub fn load_annotations(
    path: impl AsRef<Path>,
) -> Result<Vec<ReferenceAnnotation>, FeatureError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_annotations(&text).map_err(|e| e.in_file(path))
}

fn parse_annotations(text: &str) -> Result<Vec<ReferenceAnnotation>, FeatureError> {
    let mut n = None;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        if n.is_none() {
            let value = line
                .strip_prefix("n=")
                .ok_or_else(|| FeatureError::BadAnnotation {
                    line: line_no,
                    detail: format!("expected `n=<frames>` first, found {line:?}"),
                })?;
            let parsed: usize = value.trim().parse().map_err(|_| FeatureError::BadAnnotation {
                line: line_no,
                detail: format!("unparseable frame count {value:?}"),
            })?;
            n = Some(parsed);
            continue;
        }
        let n = n.unwrap();
        let (id, rest) = line.split_once(':').ok_or_else(|| FeatureError::BadAnnotation {
            line: line_no,
            detail: "expected `annotator_id: b1 b2 ...`".to_string(),
        })?;
        let id = id.trim();
        if id.is_empty() {
            return Err(FeatureError::BadAnnotation {
                line: line_no,
                detail: "empty annotator id".to_string(),
            });
        }
        let mut breaks = Vec::new();
        for token in rest.split_whitespace() {
            let b: usize = token.parse().map_err(|_| FeatureError::BadAnnotation {
                line: line_no,
                detail: format!("unparseable break index {token:?}"),
            })?;
            breaks.push(b);
        }
        let ann = ReferenceAnnotation::new(n, breaks, id).map_err(|e| {
            FeatureError::BadAnnotation {
                line: line_no,
                detail: e.to_string(),
            }
        })?;
        out.push(ann);
    }
    if n.is_none() {
        return Err(FeatureError::BadAnnotation {
            line: 1,
            detail: "file is empty".to_string(),
        });
    }
    if out.is_empty() {
        return Err(FeatureError::BadAnnotation {
            line: 1,
            detail: "no annotator lines".to_string(),
        });
    }
    Ok(out)
}

/// Writes annotations in the format `load_annotations` reads.
pub fn save_annotations(
    path: impl AsRef<Path>,
    refs: &[ReferenceAnnotation],
) -> Result<(), FeatureError> {
    let path = path.as_ref();
    let mut out = String::new();
    if let Some(first) = refs.first() {
        out.push_str(&format!("n={}\n", first.n));
    }
    for r in refs {
        let breaks: Vec<String> = r.breaks.iter().map(|b| b.to_string()).collect();
        out.push_str(&format!("{}: {}\n", r.annotator_id, breaks.join(" ")));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Generates a sequence of Gaussian-cluster segments with known breaks.
///
/// Segment `k` draws its vectors from an isotropic Gaussian with standard
/// deviation `noise_sigma` around a mean placed so that any two segment
/// means sit at least `separation` apart. The annotation returned under the
/// id `"truth"` holds the true breaks. The same arguments always produce
/// bitwise-identical output.
pub fn synth_sequence(
    segment_lengths: &[usize],
    d: usize,
    separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(FeatureSequence, ReferenceAnnotation), FeatureError> {
    if segment_lengths.is_empty() {
        return Err(FeatureError::EmptyLengths);
    }
    if segment_lengths.contains(&0) {
        return Err(FeatureError::ZeroLength);
    }
    if d == 0 {
        return Err(FeatureError::ZeroDim);
    }
    if !(separation > 0.0) || !separation.is_finite() || !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(FeatureError::BadSynthParams);
    }

    let n: usize = segment_lengths.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Successive means advance by `separation / sqrt(d)` in every dimension,
    // so adjacent means are exactly `separation` apart and farther pairs are
    // farther still.
    let step = separation / (d as f64).sqrt();
    let mut values = Vec::with_capacity(n * d);
    for (k, &len) in segment_lengths.iter().enumerate() {
        let mean = (k + 1) as f64 * step;
        for _ in 0..len {
            for _ in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(mean + noise_sigma * z);
            }
        }
    }

    let mut breaks = Vec::with_capacity(segment_lengths.len() - 1);
    let mut at = 0;
    for &len in &segment_lengths[..segment_lengths.len() - 1] {
        at += len;
        breaks.push(at);
    }

    let seq = FeatureSequence::new(n, d, values, None)?;
    let truth = ReferenceAnnotation::new(n, breaks, "truth")
        .expect("prefix sums of positive lengths are valid breaks");
    Ok((seq, truth))
}
