//! End-to-end checks of the command-line interface: exit codes, flag
//! validation, document round trips, and the synth -> segment -> eval
//! pipeline, all through the real binary.

use std::path::Path;
use std::process::{Command, Output};

use mdlseg::features::{load_features, FeatureFormat};
use mdlseg::metrics::EvalDoc;
use mdlseg::segmentation::SegmentationDoc;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdlseg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        stdout_of(out),
        stderr_of(out)
    );
}

/// Writes a synthetic pair into `dir` and returns the two paths as strings.
fn synth_pair(dir: &Path, lengths: &str, d: usize, seed: u64, ext: &str) -> (String, String) {
    let feat = dir.join(format!("feat-{seed}.{ext}")).display().to_string();
    let ann = dir.join(format!("ann-{seed}.txt")).display().to_string();
    let out = run(&[
        "synth",
        "--lengths",
        lengths,
        "--d",
        &d.to_string(),
        "--sep",
        "10",
        "--noise",
        "0.05",
        "--seed",
        &seed.to_string(),
        "--out",
        &format!("{feat},{ann}"),
    ]);
    assert_exit(&out, 0);
    (feat, ann)
}

#[test]
fn synth_example_writes_documented_breaks() {
    let dir = TempDir::new().unwrap();
    let feat = dir.path().join("f.bin");
    let ann = dir.path().join("gt.txt");
    let out = run(&[
        "synth",
        "--lengths",
        "5,5",
        "--d",
        "2",
        "--sep",
        "10",
        "--noise",
        "0.1",
        "--seed",
        "7",
        "--out",
        &format!("{},{}", feat.display(), ann.display()),
    ]);
    assert_exit(&out, 0);
    let text = std::fs::read_to_string(&ann).unwrap();
    assert!(text.contains("n=10"), "annotation header missing: {text}");
    assert!(text.contains("truth: 5"), "true break missing: {text}");
    let seq = load_features(&feat, FeatureFormat::Binary).unwrap();
    assert_eq!((seq.n(), seq.d()), (10, 2));
}

#[test]
fn segment_then_eval_recovers_the_truth() {
    let dir = TempDir::new().unwrap();
    let (feat, ann) = synth_pair(dir.path(), "25,30,25", 2, 11, "csv");
    let seg_path = dir.path().join("seg.json").display().to_string();
    let out = run(&["segment", "--input", &feat, "--output", &seg_path]);
    assert_exit(&out, 0);
    let doc = SegmentationDoc::from_json(&std::fs::read_to_string(&seg_path).unwrap()).unwrap();
    assert_eq!(doc.segmentation().unwrap().breaks(), &[25, 55]);

    let eval_path = dir.path().join("eval.json").display().to_string();
    let out = run(&[
        "eval", "--hyp", &seg_path, "--refs", &ann, "--output", &eval_path,
    ]);
    assert_exit(&out, 0);
    let doc = EvalDoc::from_json(&std::fs::read_to_string(&eval_path).unwrap()).unwrap();
    assert_eq!(doc.best.acc, 100.0);
    assert_eq!(doc.best.pk_error, 0.0);
    assert_eq!(doc.best.ded_error, 0.0);
    assert_eq!(doc.per_annotator.len(), 1);
    assert_eq!(doc.per_annotator[0].annotator_id, "truth");
}

#[test]
fn oracle_refuses_instances_past_the_search_limit() {
    let dir = TempDir::new().unwrap();
    let (feat, _) = synth_pair(dir.path(), "15,15", 1, 3, "csv");
    let out = run(&["oracle", "--input", &feat]);
    assert_exit(&out, 3);
    assert!(
        stderr_of(&out).contains("instance too large for exhaustive search"),
        "unexpected stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn oracle_and_segment_agree_on_small_input() {
    let dir = TempDir::new().unwrap();
    let (feat, _) = synth_pair(dir.path(), "6,6", 1, 3, "csv");
    let fast = run(&["segment", "--input", &feat]);
    let slow = run(&["oracle", "--input", &feat]);
    assert_exit(&fast, 0);
    assert_exit(&slow, 0);
    assert_eq!(stdout_of(&fast), stdout_of(&slow));
}

#[test]
fn max_scene_len_caps_segment_length() {
    let dir = TempDir::new().unwrap();
    let feat = dir.path().join("const.csv");
    let body: String = (0..10).map(|_| "1.5\n").collect();
    std::fs::write(&feat, body).unwrap();
    let feat = feat.display().to_string();

    let free = run(&["segment", "--input", &feat]);
    assert_exit(&free, 0);
    let doc = SegmentationDoc::from_json(&stdout_of(&free)).unwrap();
    assert_eq!(doc.segmentation().unwrap().num_segments(), 1);

    let capped = run(&["segment", "--input", &feat, "--max-scene-len", "4"]);
    assert_exit(&capped, 0);
    let doc = SegmentationDoc::from_json(&stdout_of(&capped)).unwrap();
    let seg = doc.segmentation().unwrap();
    assert!(seg.max_segment_len() <= 4, "breaks: {:?}", seg.breaks());

    let zero = run(&["segment", "--input", &feat, "--max-scene-len", "0"]);
    assert_exit(&zero, 3);
}

#[test]
fn var_floor_must_be_positive_and_finite() {
    let dir = TempDir::new().unwrap();
    let (feat, _) = synth_pair(dir.path(), "6,6", 1, 5, "csv");
    assert_exit(&run(&["segment", "--input", &feat, "--var-floor", "0"]), 3);
    assert_exit(&run(&["segment", "--input", &feat, "--var-floor=-1e-3"]), 3);
    assert_exit(&run(&["segment", "--input", &feat, "--var-floor", "inf"]), 3);
}

#[test]
fn eval_honors_an_explicit_window() {
    let dir = TempDir::new().unwrap();
    let (feat, ann) = synth_pair(dir.path(), "20,20", 2, 13, "csv");
    let seg_path = dir.path().join("seg.json").display().to_string();
    assert_exit(&run(&["segment", "--input", &feat, "--output", &seg_path]), 0);

    let out = run(&["eval", "--hyp", &seg_path, "--refs", &ann, "--window-k", "3"]);
    assert_exit(&out, 0);
    let doc = EvalDoc::from_json(&stdout_of(&out)).unwrap();
    assert_eq!(doc.best.window_k, 3);
    assert!(doc.per_annotator.iter().all(|a| a.report.window_k == 3));

    assert_exit(
        &run(&["eval", "--hyp", &seg_path, "--refs", &ann, "--window-k", "0"]),
        3,
    );
    // a window as long as the sequence cannot be evaluated
    assert_exit(
        &run(&["eval", "--hyp", &seg_path, "--refs", &ann, "--window-k", "40"]),
        3,
    );
}

#[test]
fn unknown_extension_needs_an_explicit_format() {
    let dir = TempDir::new().unwrap();
    let feat = dir.path().join("points.dat");
    std::fs::write(&feat, "1.0\n2.0\n3.0\n").unwrap();
    let feat = feat.display().to_string();
    assert_exit(&run(&["segment", "--input", &feat]), 3);
    assert_exit(&run(&["segment", "--input", &feat, "--format", "csv"]), 0);
}

#[test]
fn io_and_parse_failures_exit_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.csv").display().to_string();
    assert_exit(&run(&["segment", "--input", &missing]), 2);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.0,2.0\n1.0,oops\n").unwrap();
    let out = run(&["segment", "--input", &bad.display().to_string()]);
    assert_exit(&out, 2);
    assert!(stderr_of(&out).contains("row 2"), "stderr: {}", stderr_of(&out));
}

#[test]
fn eval_rejects_malformed_or_mismatched_documents() {
    let dir = TempDir::new().unwrap();
    let (_, ann) = synth_pair(dir.path(), "6,6", 1, 9, "csv");
    let bad = dir.path().join("hyp.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_exit(
        &run(&["eval", "--hyp", &bad.display().to_string(), "--refs", &ann]),
        2,
    );

    // structurally valid document whose break list is inconsistent
    let invalid = dir.path().join("invalid.json");
    std::fs::write(
        &invalid,
        r#"{"spec_version":1,"n":12,"breaks":[30],"segments":[]}"#,
    )
    .unwrap();
    assert_exit(
        &run(&["eval", "--hyp", &invalid.display().to_string(), "--refs", &ann]),
        2,
    );

    // valid document over a different n than the references
    let other = dir.path().join("other.json");
    std::fs::write(
        &other,
        r#"{"spec_version":1,"n":20,"breaks":[10],"segments":[]}"#,
    )
    .unwrap();
    assert_exit(
        &run(&["eval", "--hyp", &other.display().to_string(), "--refs", &ann]),
        3,
    );
}

#[test]
fn baseline_flags_are_validated() {
    let dir = TempDir::new().unwrap();
    let (feat, _) = synth_pair(dir.path(), "6,6", 1, 21, "csv");
    assert_exit(&run(&["baseline", "--input", &feat, "--method", "kmeans"]), 3);
    assert_exit(&run(&["baseline", "--input", &feat, "--method", "unif"]), 3);
    assert_exit(
        &run(&["baseline", "--input", &feat, "--method", "unif", "--mean-len", "0"]),
        3,
    );
    assert_exit(
        &run(&["baseline", "--input", &feat, "--method", "unif-oracle", "--k", "0"]),
        3,
    );
    assert_exit(
        &run(&["baseline", "--input", &feat, "--method", "unif-oracle", "--k", "13"]),
        3,
    );
}

#[test]
fn baseline_break_placement_is_documented() {
    let dir = TempDir::new().unwrap();
    let feat = dir.path().join("ten.csv");
    let body: String = (0..10).map(|i| format!("{i}.0\n")).collect();
    std::fs::write(&feat, body).unwrap();
    let feat = feat.display().to_string();

    let out = run(&["baseline", "--input", &feat, "--method", "unif", "--mean-len", "3"]);
    assert_exit(&out, 0);
    let doc = SegmentationDoc::from_json(&stdout_of(&out)).unwrap();
    assert_eq!(doc.segmentation().unwrap().breaks(), &[3, 6, 9]);
    assert!(doc.total_bits.is_none(), "baselines carry no bit total");

    let out = run(&["baseline", "--input", &feat, "--method", "unif-oracle", "--k", "2"]);
    assert_exit(&out, 0);
    let doc = SegmentationDoc::from_json(&stdout_of(&out)).unwrap();
    assert_eq!(doc.segmentation().unwrap().breaks(), &[5]);

    let out = run(&["baseline", "--input", &feat, "--method", "mdlseg"]);
    assert_exit(&out, 0);
    let doc = SegmentationDoc::from_json(&stdout_of(&out)).unwrap();
    assert!(doc.total_bits.is_some(), "mdlseg reports its bit total");
}

#[test]
fn kmeans_baseline_is_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let (feat, _) = synth_pair(dir.path(), "12,12,12", 2, 31, "bin");
    let a = run(&["baseline", "--input", &feat, "--method", "kmeans", "--k", "3", "--seed", "5"]);
    let b = run(&["baseline", "--input", &feat, "--method", "kmeans", "--k", "3", "--seed", "5"]);
    assert_exit(&a, 0);
    assert_exit(&b, 0);
    assert_eq!(stdout_of(&a), stdout_of(&b));
}

#[test]
fn bench_emits_one_row_per_item_and_method() {
    let dir = TempDir::new().unwrap();
    synth_pair(dir.path(), "15,20,15", 3, 40, "bin");
    synth_pair(dir.path(), "15,20,15", 3, 41, "bin");
    let manifest = dir.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"items":[
            {"features":"feat-40.bin","annotations":"ann-40.txt"},
            {"features":"feat-41.bin","annotations":"ann-41.txt","format":"binary"},
            {"features":"missing.bin","annotations":"missing.txt"}
        ]}"#,
    )
    .unwrap();
    let table = dir.path().join("table.json").display().to_string();
    let out = run(&["bench", "--input", &manifest.display().to_string(), "--output", &table]);
    assert_exit(&out, 0);

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&table).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    let methods: Vec<&str> = rows[..4].iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["mdlseg", "unif", "unif-oracle", "kmeans"]);
    for row in &rows[..8] {
        assert!(row["error"].is_null(), "unexpected failure: {row}");
        assert!(row["metrics"]["acc"].is_number());
        assert!(row["runtime_s"].is_number());
        assert!(row["per_frame_runtime_s"].is_number());
    }
    for row in &rows[8..] {
        assert!(row["error"].is_string(), "missing failure record: {row}");
        assert!(row["metrics"].is_null());
    }
}

#[test]
fn assign_names_speakers_and_flags_bad_problems() {
    let dir = TempDir::new().unwrap();
    let problem = dir.path().join("problem.json");
    std::fs::write(
        &problem,
        r#"{
            "characters": [
                {"name": "ada", "faces": [[0.0, 0.0]]},
                {"name": "ben", "faces": [[10.0, 0.0]]}
            ],
            "scenes": [[[0.1, 0.0]], [[9.9, 0.1]], []],
            "speakers": [
                {"id": "spk0", "scenes": [0]},
                {"id": "spk1", "scenes": [1]},
                {"id": "spk2", "scenes": [2]}
            ]
        }"#,
    )
    .unwrap();
    let out = run(&["assign", "--input", &problem.display().to_string()]);
    assert_exit(&out, 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    let entries = doc["assignments"].as_array().unwrap();
    assert_eq!(entries[0]["character"], "ada");
    assert_eq!(entries[1]["character"], "ben");
    assert_eq!(entries[2]["character"], "UNASSIGNED");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{").unwrap();
    assert_exit(&run(&["assign", "--input", &bad.display().to_string()]), 2);

    // speaker pointing at a scene that does not exist
    let invalid = dir.path().join("invalid.json");
    std::fs::write(
        &invalid,
        r#"{
            "characters": [{"name": "ada", "faces": [[0.0]]}],
            "scenes": [[[0.0]]],
            "speakers": [{"id": "spk0", "scenes": [4]}]
        }"#,
    )
    .unwrap();
    assert_exit(&run(&["assign", "--input", &invalid.display().to_string()]), 3);
}

#[test]
fn synth_arguments_are_validated() {
    let dir = TempDir::new().unwrap();
    let feat = dir.path().join("f.csv").display().to_string();
    let ann = dir.path().join("a.txt").display().to_string();
    let pair = format!("{feat},{ann}");
    let base = ["synth", "--d", "2", "--sep", "10", "--noise", "0.1"];

    let mut args = base.to_vec();
    args.extend(["--lengths", "5,5", "--out", &feat]);
    assert_exit(&run(&args), 3); // missing the annotation half

    let mut args = base.to_vec();
    args.extend(["--lengths", "5,x", "--out", &pair]);
    assert_exit(&run(&args), 3);

    let mut args = base.to_vec();
    args.extend(["--lengths", "5,0", "--out", &pair]);
    assert_exit(&run(&args), 3);

    let mut args = base.to_vec();
    args.extend(["--lengths", "5,5", "--out", &pair]);
    assert_exit(&run(&args), 0);
}

#[test]
fn csv_and_binary_layouts_segment_identically() {
    let dir = TempDir::new().unwrap();
    let (csv, _) = synth_pair(dir.path(), "10,10", 2, 17, "csv");
    let (bin, _) = synth_pair(dir.path(), "10,10", 2, 17, "bin");
    let a = run(&["segment", "--input", &csv]);
    let b = run(&["segment", "--input", &bin]);
    assert_exit(&a, 0);
    assert_exit(&b, 0);
    assert_eq!(stdout_of(&a), stdout_of(&b));
}

#[test]
fn thread_flag_is_validated_and_usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let (feat, _) = synth_pair(dir.path(), "6,6", 1, 23, "csv");
    assert_exit(&run(&["--threads", "0", "segment", "--input", &feat]), 3);
    assert_exit(&run(&["segment", "--input", &feat, "--no-such-flag"]), 2);
    assert_exit(&run(&["no-such-command"]), 2);
}
