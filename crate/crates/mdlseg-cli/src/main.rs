//! Command-line driver for the segmentation library.
//!
//! Seven subcommands tie the pieces into reproducible workflows: `segment`
//! (optimal partition), `oracle` (exhaustive check on small inputs),
//! `baseline` (reference segmenters), `eval` (score against annotators),
//! `bench` (all methods over a manifest), `synth` (generate data with known
//! breaks), and `assign` (name speakers from face distances).
//!
//! Result documents go to `--output` or stdout and are byte-identical
//! across reruns and thread counts; human-readable summaries and timings go
//! to stderr. Exit codes: 0 success, 2 I/O or parse failure, 3 validation
//! or guard failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use mdlseg::assignment::{assign_names, load_problem, AssignError, AssignmentDoc};
use mdlseg::baselines::{
    contiguous_kmeans, run_baseline, uniform_breaks, uniform_oracle_breaks, BaselineError,
    BaselineSpec, DEFAULT_KMEANS_MAX_ITERS,
};
use mdlseg::features::{
    infer_precision_bits, load_annotations, load_features, save_annotations, save_features,
    synth_sequence, FeatureError, FeatureFormat, ReferenceAnnotation,
};
use mdlseg::mdl::{brute_force_segment, segment_sequence, MdlError, DEFAULT_VAR_FLOOR};
use mdlseg::metrics::{aggregate_multi, EvalDoc, MetricError, MetricReport};
use mdlseg::segmentation::{Segmentation, SegmentationDoc, SegmentationError};
use mdlseg::{FeatureSequence, MdlParams, SPEC_VERSION};

#[derive(Parser)]
#[command(
    name = "mdlseg",
    version,
    about = "Globally optimal feature-sequence segmentation by description length"
)]
struct Cli {
    /// Cap on worker threads (default: all cores). Results are identical
    /// for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a feature sequence optimally.
    Segment(SegmentArgs),
    /// Segment by exhaustive search (small inputs only) for cross-checking.
    Oracle(SegmentArgs),
    /// Segment with one of the reference methods.
    Baseline(BaselineArgs),
    /// Score a hypothesis segmentation against reference annotations.
    Eval(EvalArgs),
    /// Run every method over a manifest of items and tabulate metrics.
    Bench(BenchArgs),
    /// Generate a synthetic sequence with known breaks.
    Synth(SynthArgs),
    /// Assign character names to speakers from face distances.
    Assign(AssignArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

impl From<FormatArg> for FeatureFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => FeatureFormat::Csv,
            FormatArg::Binary => FeatureFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrecisionArg {
    /// Infer the narrowest lossless width from the data.
    Auto,
    #[value(name = "16")]
    Bits16,
    #[value(name = "32")]
    Bits32,
    #[value(name = "64")]
    Bits64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Mdlseg,
    Unif,
    UnifOracle,
    Kmeans,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Mdlseg => "mdlseg",
            MethodArg::Unif => "unif",
            MethodArg::UnifOracle => "unif-oracle",
            MethodArg::Kmeans => "kmeans",
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Feature file to segment.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the result document (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Input layout; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Longest allowed segment, in frames (no cap when omitted).
    #[arg(long)]
    max_scene_len: Option<usize>,
    /// Lower clamp on fitted per-dimension variances.
    #[arg(long, default_value_t = DEFAULT_VAR_FLOOR)]
    var_floor: f64,
    /// Bits per stored model parameter.
    #[arg(long, value_enum, default_value = "auto")]
    precision_bits: PrecisionArg,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: SegmentArgs,
    /// Which segmenter to run.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Mean segment length for the unif method.
    #[arg(long)]
    mean_len: Option<usize>,
    /// Segment (or cluster) count for unif-oracle and kmeans.
    #[arg(long)]
    k: Option<usize>,
    /// Random seed for kmeans initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Hypothesis segmentation document (JSON, as written by segment).
    #[arg(long)]
    hyp: PathBuf,
    /// Reference annotation file.
    #[arg(long)]
    refs: PathBuf,
    /// Window size for Pk/WindowDiff (each annotator's default when
    /// omitted).
    #[arg(long)]
    window_k: Option<usize>,
    /// Where to write the report document (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Manifest JSON listing feature/annotation pairs.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the table document (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Base seed for the kmeans method (item index is added).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Comma-separated true segment lengths, e.g. 20,35,20.
    #[arg(long)]
    lengths: String,
    /// Feature dimensionality.
    #[arg(long)]
    d: usize,
    /// Distance between adjacent segment means.
    #[arg(long)]
    sep: f64,
    /// Standard deviation of the per-frame noise.
    #[arg(long)]
    noise: f64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output pair: features path and annotation path, comma-separated.
    #[arg(long)]
    out: String,
    /// Feature file layout; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct AssignArgs {
    /// Assignment problem JSON: characters, scenes, speakers.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the mapping document (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Mdl(#[from] MdlError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error("{0}")]
    Invalid(String),
    #[error("writing {path}: {source}")]
    WriteIo { path: String, source: std::io::Error },
    #[error("reading {path}: {source}")]
    ReadIo { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    BadDoc { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    BadSegDoc { path: String, source: SegmentationError },
}

impl CliError {
    /// 2 for I/O and parsing, 3 for validation and guards.
    fn code(&self) -> u8 {
        match self {
            CliError::Feature(_)
            | CliError::WriteIo { .. }
            | CliError::ReadIo { .. }
            | CliError::BadDoc { .. }
            | CliError::BadSegDoc { .. } => 2,
            CliError::Mdl(_)
            | CliError::Metric(_)
            | CliError::Baseline(_)
            | CliError::Invalid(_) => 3,
            CliError::Assign(e) => match e {
                AssignError::Io { .. } | AssignError::BadProblemDoc { .. } => 2,
                _ => 3,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(3);
        }
        // at most once per process, so build_global cannot fail twice
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("global thread pool built once");
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Segment(args) => cmd_segment(args, false),
        Command::Oracle(args) => cmd_segment(args, true),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Assign(args) => cmd_assign(args),
    }
}

/// Layout from the explicit flag, else from the file extension.
fn resolve_format(path: &Path, flag: Option<FormatArg>) -> Result<FeatureFormat, CliError> {
    if let Some(f) = flag {
        return Ok(f.into());
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin" | "mdls") => Ok(FeatureFormat::Binary),
        Some("csv" | "txt") => Ok(FeatureFormat::Csv),
        _ => Err(CliError::Invalid(format!(
            "cannot infer layout of {} from its extension; pass --format",
            path.display()
        ))),
    }
}

fn resolve_params(
    seq: &FeatureSequence,
    precision: PrecisionArg,
    var_floor: f64,
    max_scene_len: Option<usize>,
) -> Result<MdlParams, CliError> {
    if !var_floor.is_finite() || var_floor <= 0.0 {
        return Err(CliError::Invalid(format!(
            "--var-floor must be positive and finite, got {var_floor}"
        )));
    }
    if max_scene_len == Some(0) {
        return Err(CliError::Invalid(
            "--max-scene-len must be at least 1".to_string(),
        ));
    }
    let m = match precision {
        PrecisionArg::Auto => infer_precision_bits(seq),
        PrecisionArg::Bits16 => 16,
        PrecisionArg::Bits32 => 32,
        PrecisionArg::Bits64 => 64,
    };
    Ok(MdlParams::new(seq.d(), m)
        .with_var_floor(var_floor)
        .with_max_len(max_scene_len))
}

/// Writes a result document to the output path, or stdout when none given.
fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::WriteIo {
            path: p.display().to_string(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_segment(args: SegmentArgs, exhaustive: bool) -> Result<(), CliError> {
    let format = resolve_format(&args.input, args.format)?;
    let seq = load_features(&args.input, format)?;
    let params = resolve_params(&seq, args.precision_bits, args.var_floor, args.max_scene_len)?;
    let started = Instant::now();
    let (seg, total_bits) = if exhaustive {
        brute_force_segment(&seq, &params)?
    } else {
        segment_sequence(&seq, &params)
    };
    let elapsed = started.elapsed().as_secs_f64();
    let doc = SegmentationDoc::new(&seg, Some(total_bits));
    emit(args.output.as_deref(), &doc.to_json())?;
    eprintln!(
        "{}: {} frames -> {} segments ({} breaks), {:.3} bits, {:.3}s",
        if exhaustive { "oracle" } else { "segment" },
        seg.n(),
        seg.num_segments(),
        seg.breaks().len(),
        total_bits,
        elapsed
    );
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<(), CliError> {
    let format = resolve_format(&args.common.input, args.common.format)?;
    let seq = load_features(&args.common.input, format)?;
    let started = Instant::now();
    let (seg, total_bits) = match args.method {
        MethodArg::Mdlseg => {
            let params = resolve_params(
                &seq,
                args.common.precision_bits,
                args.common.var_floor,
                args.common.max_scene_len,
            )?;
            let (seg, bits) = segment_sequence(&seq, &params);
            (seg, Some(bits))
        }
        MethodArg::Unif => {
            let mean_len = args.mean_len.ok_or_else(|| {
                CliError::Invalid("--method unif needs --mean-len".to_string())
            })?;
            (run_baseline(&seq, &BaselineSpec::Uniform { mean_len })?, None)
        }
        MethodArg::UnifOracle => {
            let k = args
                .k
                .ok_or_else(|| CliError::Invalid("--method unif-oracle needs --k".to_string()))?;
            (run_baseline(&seq, &BaselineSpec::UniformOracle { k_true: k })?, None)
        }
        MethodArg::Kmeans => {
            let k = args
                .k
                .ok_or_else(|| CliError::Invalid("--method kmeans needs --k".to_string()))?;
            let spec = BaselineSpec::ContiguousKmeans {
                k,
                max_iters: DEFAULT_KMEANS_MAX_ITERS,
                seed: args.seed,
            };
            (run_baseline(&seq, &spec)?, None)
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    let doc = SegmentationDoc::new(&seg, total_bits);
    emit(args.common.output.as_deref(), &doc.to_json())?;
    eprintln!(
        "baseline {}: {} frames -> {} segments, {:.3}s",
        args.method.name(),
        seg.n(),
        seg.num_segments(),
        elapsed
    );
    Ok(())
}

fn load_segmentation_doc(path: &Path) -> Result<Segmentation, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::ReadIo {
        path: path.display().to_string(),
        source: e,
    })?;
    let doc = SegmentationDoc::from_json(&text).map_err(|e| CliError::BadDoc {
        path: path.display().to_string(),
        source: e,
    })?;
    doc.segmentation().map_err(|e| CliError::BadSegDoc {
        path: path.display().to_string(),
        source: e,
    })
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if args.window_k == Some(0) {
        return Err(CliError::Invalid("--window-k must be at least 1".to_string()));
    }
    let hyp = load_segmentation_doc(&args.hyp)?;
    let refs = load_annotations(&args.refs)?;
    let report = aggregate_multi(&hyp, &refs, args.window_k)?;
    let doc = EvalDoc::new(&report);
    emit(args.output.as_deref(), &doc.to_json())?;
    eprintln!(
        "eval: {} annotators, best acc {:.2}, mean acc {:.2}, best pk {:.4}",
        report.per_annotator.len(),
        report.best.acc,
        report.mean.acc,
        report.best.pk_error
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Manifest {
    items: Vec<ManifestItem>,
}

#[derive(Debug, Deserialize)]
struct ManifestItem {
    features: String,
    annotations: String,
    #[serde(default)]
    format: Option<String>,
}

/// One (item, method) result in the bench table.
#[derive(Debug, Serialize, Deserialize)]
struct BenchRow {
    item: String,
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Mean metrics over the item's annotators.
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_frame_runtime_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchDoc {
    spec_version: u32,
    rows: Vec<BenchRow>,
}

const BENCH_METHODS: [MethodArg; 4] = [
    MethodArg::Mdlseg,
    MethodArg::Unif,
    MethodArg::UnifOracle,
    MethodArg::Kmeans,
];

/// Loads one manifest item, with paths resolved relative to the manifest.
fn load_bench_item(
    base: &Path,
    item: &ManifestItem,
) -> Result<(FeatureSequence, Vec<ReferenceAnnotation>), CliError> {
    let feat_path = base.join(&item.features);
    let format = match &item.format {
        Some(name) => name
            .parse::<FeatureFormat>()
            .map_err(CliError::Invalid)?,
        None => resolve_format(&feat_path, None)?,
    };
    let seq = load_features(&feat_path, format)?;
    let refs = load_annotations(base.join(&item.annotations))?;
    Ok((seq, refs))
}

fn run_bench_method(
    seq: &FeatureSequence,
    refs: &[ReferenceAnnotation],
    method: MethodArg,
    kmeans_seed: u64,
) -> Result<Segmentation, CliError> {
    let n = seq.n();
    // the first annotator plays oracle for the told-the-answer baselines
    let k_true = refs[0].breaks.len() + 1;
    match method {
        MethodArg::Mdlseg => {
            let params = MdlParams::for_sequence(seq);
            Ok(segment_sequence(seq, &params).0)
        }
        MethodArg::Unif => {
            let mean_len = ((n as f64 / k_true as f64).round() as usize).max(1);
            Ok(uniform_breaks(n, mean_len)?)
        }
        MethodArg::UnifOracle => Ok(uniform_oracle_breaks(n, k_true)?),
        MethodArg::Kmeans => Ok(contiguous_kmeans(
            seq,
            k_true,
            DEFAULT_KMEANS_MAX_ITERS,
            kmeans_seed,
        )?),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input).map_err(|e| CliError::ReadIo {
        path: args.input.display().to_string(),
        source: e,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::BadDoc {
        path: args.input.display().to_string(),
        source: e,
    })?;
    let base = args
        .input
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let mut rows = Vec::with_capacity(manifest.items.len() * BENCH_METHODS.len());
    for (idx, item) in manifest.items.iter().enumerate() {
        let loaded = load_bench_item(&base, item);
        for method in BENCH_METHODS {
            let mut row = BenchRow {
                item: item.features.clone(),
                method: method.name().to_string(),
                n: None,
                metrics: None,
                runtime_s: None,
                per_frame_runtime_s: None,
                error: None,
            };
            match &loaded {
                Err(e) => row.error = Some(e.to_string()),
                Ok((seq, refs)) => {
                    row.n = Some(seq.n());
                    let started = Instant::now();
                    let outcome =
                        run_bench_method(seq, refs, method, args.seed.wrapping_add(idx as u64));
                    let elapsed = started.elapsed().as_secs_f64();
                    match outcome.and_then(|hyp| Ok(aggregate_multi(&hyp, refs, None)?)) {
                        Err(e) => row.error = Some(e.to_string()),
                        Ok(agg) => {
                            row.metrics = Some(agg.mean);
                            row.runtime_s = Some(elapsed);
                            row.per_frame_runtime_s = Some(elapsed / seq.n() as f64);
                        }
                    }
                }
            }
            rows.push(row);
        }
    }

    let doc = BenchDoc { spec_version: SPEC_VERSION, rows };
    let mut text = serde_json::to_string_pretty(&doc).expect("doc serializes");
    text.push('\n');
    emit(args.output.as_deref(), &text)?;
    let failures = doc.rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "bench: {} items x {} methods, {} failures",
        manifest.items.len(),
        BENCH_METHODS.len(),
        failures
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let lengths: Vec<usize> = args
        .lengths
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Invalid(format!("bad segment length {t:?} in --lengths")))
        })
        .collect::<Result<_, _>>()?;
    let (feat_out, ann_out) = args.out.split_once(',').ok_or_else(|| {
        CliError::Invalid(
            "--out takes two comma-separated paths: features,annotations".to_string(),
        )
    })?;
    let feat_path = PathBuf::from(feat_out.trim());
    let ann_path = PathBuf::from(ann_out.trim());
    let format = resolve_format(&feat_path, args.format)?;

    let (seq, truth) = synth_sequence(&lengths, args.d, args.sep, args.noise, args.seed)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    save_features(&feat_path, &seq, format)?;
    save_annotations(&ann_path, std::slice::from_ref(&truth))?;
    eprintln!(
        "synth: {} frames, d={}, {} true breaks -> {} and {}",
        seq.n(),
        seq.d(),
        truth.breaks.len(),
        feat_path.display(),
        ann_path.display()
    );
    Ok(())
}

fn cmd_assign(args: AssignArgs) -> Result<(), CliError> {
    let problem = load_problem(&args.input)?;
    let assignment = assign_names(&problem)?;
    let doc = AssignmentDoc::new(&assignment);
    emit(args.output.as_deref(), &doc.to_json())?;
    let named = assignment
        .mapping
        .iter()
        .filter(|(_, c)| c.is_some())
        .count();
    eprintln!(
        "assign: {} of {} speakers named",
        named,
        assignment.mapping.len()
    );
    Ok(())
}
