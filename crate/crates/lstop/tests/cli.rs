//! End-to-end command tests through the real binary: exit codes, file
//! outputs, determinism across reruns and thread counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use once_cell::sync::Lazy;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lstop"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn lstop");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    bin()
        .args(args)
        .output()
        .expect("spawn lstop")
        .status
        .code()
        .unwrap_or(-1)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset + tune file shared across tests.
struct Fixture {
    #[allow(dead_code)]
    dir: TempDir,
    data: PathBuf,
    tune: PathBuf,
}

static FIXTURE: Lazy<Fixture> = Lazy::new(|| {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "gen",
        "--scale",
        "desk",
        "--m",
        "12",
        "--n",
        "24",
        "--train-count",
        "300",
        "--test-per-snr",
        "20",
        "--seed",
        "5",
        "--out",
        path_str(&data),
    ]);
    let tune = dir.path().join("tune.json");
    run_ok(&[
        "tune",
        "--train",
        path_str(&data.join("train.lstp")),
        "--t",
        "6",
        "--subset",
        "100",
        "--out",
        path_str(&tune),
    ]);
    Fixture { dir, data, tune }
});

fn train_small_s3(out: &Path, seed: &str, threads: &str, stage3: &str) {
    let fx = &*FIXTURE;
    let train_path = fx.data.join("train.lstp");
    let args = vec![
        "train",
        "--train",
        path_str(&train_path),
        "--algo",
        "twostage",
        "--depth",
        "6",
        "--warm",
        "30",
        "--stage1",
        "60",
        "--stage2",
        "40",
        "--stage3",
        stage3,
        "--batch",
        "8",
        "--hidden1",
        "8",
        "--hidden2",
        "8",
        "--lr",
        "1e-3",
        "--tune",
        path_str(&fx.tune),
        "--seed",
        seed,
        "--threads",
        threads,
        "--out",
        path_str(out),
    ];
    run_ok(&args);
}

fn train_small(out: &Path, seed: &str, threads: &str) {
    train_small_s3(out, seed, threads, "10");
}

#[test]
fn gen_without_out_is_usage_error() {
    let out = bin().args(["gen", "--scale", "desk"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("--out"), "usage text should name the flag: {text}");
}

#[test]
fn gen_rejects_invalid_config_with_usage_code() {
    let dir = TempDir::new().unwrap();
    let code = exit_code(&[
        "gen",
        "--m",
        "50",
        "--n",
        "20",
        "--out",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn gen_same_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&[
            "gen", "--m", "10", "--n", "20", "--train-count", "50", "--test-per-snr", "5",
            "--seed", "11", "--out", path_str(out),
        ]);
    }
    assert_eq!(
        fs::read(a.join("train.lstp")).unwrap(),
        fs::read(b.join("train.lstp")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("test.lstp")).unwrap(),
        fs::read(b.join("test.lstp")).unwrap()
    );
}

#[test]
fn gen_paper_scale_dimensions() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p");
    // Full paper-size test set; training count overridden to keep this fast.
    run_ok(&[
        "gen",
        "--scale",
        "paper",
        "--train-count",
        "4",
        "--seed",
        "3",
        "--out",
        path_str(&out),
    ]);
    let test = lstop::formats::read_dataset(&out.join("test.lstp")).unwrap();
    assert_eq!(test.m(), 250);
    assert_eq!(test.n(), 500);
    assert_eq!(test.len(), 3000);
}

#[test]
fn gen_writes_manifest_and_snapshot() {
    let fx = &*FIXTURE;
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fx.data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["train_instances"], 300);
    assert_eq!(manifest["test_instances"], 60);
    let snapshot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fx.data.join("config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["command"], "gen");
    assert_eq!(snapshot["resolved"]["m"], 12);
}

#[test]
fn tune_rerun_is_byte_identical_and_has_all_entries() {
    let fx = &*FIXTURE;
    let dir = TempDir::new().unwrap();
    let again = dir.path().join("tune2.json");
    run_ok(&[
        "tune",
        "--train",
        path_str(&fx.data.join("train.lstp")),
        "--t",
        "6",
        "--subset",
        "100",
        "--out",
        path_str(&again),
    ]);
    assert_eq!(
        fs::read(&fx.tune).unwrap(),
        fs::read(&again).unwrap(),
        "tuning is a pure function of its inputs"
    );
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&fx.tune).unwrap()).unwrap();
    let entries = parsed["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for algo in ["ista", "fista"] {
        assert!(entries.iter().any(|e| e["algo"] == algo && e["t"] == 6));
    }
}

#[test]
fn tune_missing_dataset_is_runtime_error() {
    let dir = TempDir::new().unwrap();
    let code = exit_code(&[
        "tune",
        "--train",
        path_str(&dir.path().join("nope.lstp")),
        "--out",
        path_str(&dir.path().join("t.json")),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn train_is_deterministic_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    train_small(&a, "9", "1");
    train_small(&b, "9", "2");
    train_small(&c, "9", "2");
    for stage in ["warm", "stage1", "stage2", "stage3"] {
        for file in ["theta.lstw", "policy.lstq"] {
            let pa = fs::read(a.join(stage).join(file)).unwrap();
            let pb = fs::read(b.join(stage).join(file)).unwrap();
            let pc = fs::read(c.join(stage).join(file)).unwrap();
            assert_eq!(pa, pb, "{stage}/{file} differs between 1 and 2 threads");
            assert_eq!(pb, pc, "{stage}/{file} differs between reruns");
        }
    }
}

#[test]
fn train_log_is_line_parseable_jsonl() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    train_small(&run, "10", "2");
    let log = fs::read_to_string(run.join("stage1").join("log.jsonl")).unwrap();
    let mut count = 0;
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("jsonl line parses");
        assert_eq!(v["stage"], "stage1");
        assert!(v["objective"].is_number());
        count += 1;
    }
    assert_eq!(count, 60);
}

#[test]
fn aevb_run_has_single_phase_layout() {
    let fx = &*FIXTURE;
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    run_ok(&[
        "train",
        "--train",
        path_str(&fx.data.join("train.lstp")),
        "--algo",
        "aevb",
        "--depth",
        "6",
        "--warm",
        "20",
        "--stage1",
        "30",
        "--stage2",
        "20",
        "--stage3",
        "0",
        "--batch",
        "8",
        "--hidden1",
        "8",
        "--hidden2",
        "8",
        "--tune",
        path_str(&fx.tune),
        "--seed",
        "4",
        "--threads",
        "2",
        "--out",
        path_str(&run),
    ]);
    assert!(run.join("warm").join("theta.lstw").exists());
    assert!(run.join("aevb").join("theta.lstw").exists());
    assert!(!run.join("stage1").exists());
    let log = fs::read_to_string(run.join("aevb").join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 50, "aevb gets the staged budget");
}

#[test]
fn twostage_without_stage3_has_no_stage3_dir() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    train_small_s3(&run, "12", "2", "0");
    assert!(run.join("stage1").exists());
    assert!(run.join("stage2").exists());
    assert!(!run.join("stage3").exists());
}

#[test]
fn diverging_training_exits_3_and_names_checkpoint() {
    let fx = &*FIXTURE;
    let dir = TempDir::new().unwrap();
    let out = bin()
        .args([
            "train",
            "--train",
            path_str(&fx.data.join("train.lstp")),
            "--algo",
            "twostage",
            "--depth",
            "6",
            "--warm",
            "40",
            "--stage1",
            "0",
            "--stage2",
            "0",
            "--stage3",
            "0",
            "--batch",
            "8",
            "--init-rho",
            "0.1",
            "--init-step",
            "1e160",
            "--seed",
            "1",
            "--threads",
            "2",
            "--out",
            path_str(&dir.path().join("run")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(
        text.contains("checkpoint"),
        "divergence error should reference the last checkpoint: {text}"
    );
}

fn eval_small(run: &Path, out: &Path, methods: &str, extra: &[&str]) {
    let fx = &*FIXTURE;
    let test_path = fx.data.join("test.lstp");
    let theta_path = run.join("stage2").join("theta.lstw");
    let policy_path = run.join("stage2").join("policy.lstq");
    let mut args = vec![
        "eval",
        "--test",
        path_str(&test_path),
        "--methods",
        methods,
        "--tune",
        path_str(&fx.tune),
        "--theta",
        path_str(&theta_path),
        "--policy",
        path_str(&policy_path),
        "--threads",
        "2",
        "--out",
        path_str(out),
    ];
    args.extend_from_slice(extra);
    run_ok(&args);
}

static TRAINED: Lazy<(TempDir, PathBuf)> = Lazy::new(|| {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    train_small(&run, "21", "2");
    (dir, run)
});

#[test]
fn eval_reports_are_byte_identical_with_timing_off() {
    let (_, run) = &*TRAINED;
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        eval_small(run, out, "ista,fista,lista-baseline,lista-stop", &["--timing", "off", "--compare"]);
    }
    for name in [
        "report-ista.json",
        "report-fista.json",
        "report-lista-baseline.json",
        "report-lista-stop.json",
        "compare.json",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }
}

#[test]
fn eval_per_snr_keys_match_dataset_levels() {
    let (_, run) = &*TRAINED;
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e");
    eval_small(run, &out, "lista-stop", &["--timing", "off"]);
    let report =
        lstop::report::EvalReport::read_json(&out.join("report-lista-stop.json")).unwrap();
    let keys: Vec<f64> = report.nmse_per_snr.iter().map(|(s, _)| *s).collect();
    assert_eq!(keys, vec![20.0, 30.0, 40.0]);
}

#[test]
fn eval_baseline_ignores_policy_checkpoint() {
    let (_, run) = &*TRAINED;
    let dir = TempDir::new().unwrap();
    let with_policy = dir.path().join("with");
    let without_policy = dir.path().join("without");
    eval_small(run, &with_policy, "lista-baseline", &["--timing", "off"]);
    let fx = &*FIXTURE;
    run_ok(&[
        "eval",
        "--test",
        path_str(&fx.data.join("test.lstp")),
        "--methods",
        "lista-baseline",
        "--theta",
        path_str(&run.join("stage2").join("theta.lstw")),
        "--timing",
        "off",
        "--threads",
        "2",
        "--out",
        path_str(&without_policy),
    ]);
    assert_eq!(
        fs::read(with_policy.join("report-lista-baseline.json")).unwrap(),
        fs::read(without_policy.join("report-lista-baseline.json")).unwrap(),
        "the fixed-depth ablation must reuse theta and ignore phi"
    );
}

#[test]
fn eval_dimension_mismatch_exits_1_naming_dims() {
    let (_, run) = &*TRAINED;
    let dir = TempDir::new().unwrap();
    let other = dir.path().join("other");
    run_ok(&[
        "gen", "--m", "10", "--n", "20", "--train-count", "10", "--test-per-snr", "4",
        "--seed", "2", "--out", path_str(&other),
    ]);
    let out = bin()
        .args([
            "eval",
            "--test",
            path_str(&other.join("test.lstp")),
            "--methods",
            "lista-baseline",
            "--theta",
            path_str(&run.join("stage2").join("theta.lstw")),
            "--out",
            path_str(&dir.path().join("e")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(
        text.contains("m=12") && text.contains("m=10"),
        "mismatch error must name both shapes: {text}"
    );
}

#[test]
fn compare_table_has_one_row_per_method() {
    let (_, run) = &*TRAINED;
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e");
    eval_small(
        run,
        &out,
        "ista,lista-stop",
        &["--timing", "off", "--compare", "--format", "both"],
    );
    let table = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("ista,"));
    assert!(table.contains("lista-stop,"));
}

#[test]
fn report_command_merges_saved_reports() {
    let (_, run) = &*TRAINED;
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e");
    eval_small(run, &out, "ista,fista", &["--timing", "off"]);
    let merged = dir.path().join("merged.csv");
    run_ok(&[
        "report",
        "--inputs",
        &format!(
            "{},{}",
            out.join("report-ista.json").display(),
            out.join("report-fista.json").display()
        ),
        "--out",
        path_str(&merged),
    ]);
    let text = fs::read_to_string(&merged).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(merged.with_file_name("merged.csv.config.json").exists());
}

#[test]
fn every_command_writes_a_resolved_snapshot() {
    let (_, run) = &*TRAINED;
    let fx = &*FIXTURE;
    assert!(fx.data.join("config.json").exists());
    assert!(PathBuf::from(format!("{}.config.json", fx.tune.display())).exists());
    assert!(run.join("config.json").exists());
    let snap: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(snap["command"], "train");
    // The snapshot pins the resolved initialization, not just the flag.
    assert!(snap["init_rho"].is_number());
    assert!(snap["init_step"].is_number());
    assert_eq!(snap["init_source"], "tune-file");
}
