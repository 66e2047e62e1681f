//! Black-box tests of the ceabench binary: artifact layout, reproducibility
//! across runs and thread counts, exit codes, and the stderr contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ceabench");

const COHORT_TOML: &str = r#"
n_patients = 3

[[phases]]
label = "pre_clamp_anaesthesia"
duration_s = 360.0

[[phases]]
label = "clamped_artery"
duration_s = 360.0

[[phases]]
label = "shunt"
duration_s = 360.0

[[clusters]]
sex = "female"
clamp_side = "left"
age_range = [50, 60]
eeg_band_power = [40.0, 18.0, 22.0, 10.0, 4.0]
abp_by_phase = [78.0, 105.0, 98.0]
nirs_baseline_pct = 72.0
nirs_clamp_drop = 0.18
spo2_pct = 98.0

[clusters.ecg]
base_hr_bpm = 62.0
hrv_sdnn_ms = 45.0
resp_freq_hz = 0.10
resp_depth_ms = 35.0
noise_snr_db = 20.0
qrs_width_ms = 100.0

[[clusters]]
sex = "male"
clamp_side = "right"
age_range = [72, 82]
eeg_band_power = [24.0, 14.0, 30.0, 14.0, 6.0]
abp_by_phase = [84.0, 114.0, 106.0]
nirs_baseline_pct = 68.0
nirs_clamp_drop = 0.22
spo2_pct = 96.5

[clusters.ecg]
base_hr_bpm = 78.0
hrv_sdnn_ms = 30.0
resp_freq_hz = 0.25
resp_depth_ms = 25.0
noise_snr_db = 20.0
qrs_width_ms = 90.0
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn ceabench")
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN).args(args).env(key, value).output().expect("spawn ceabench")
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "exit {:?}, stderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_spec(dir: &Path) -> PathBuf {
    let path = dir.join("cohort.toml");
    std::fs::write(&path, COHORT_TOML).unwrap();
    path
}

/// Every file under `dir`, relative path -> content bytes.
fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn assert_same_tree(a: &Path, b: &Path) {
    let ca = dir_contents(a);
    let cb = dir_contents(b);
    let names_a: Vec<&String> = ca.iter().map(|(n, _)| n).collect();
    let names_b: Vec<&String> = cb.iter().map(|(n, _)| n).collect();
    assert_eq!(names_a, names_b);
    for ((name, bytes_a), (_, bytes_b)) in ca.iter().zip(&cb) {
        assert_eq!(bytes_a, bytes_b, "{name} differs");
    }
}

#[test]
fn synth_extract_train_report_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let raw_a = tmp.path().join("raw_a");
    let raw_b = tmp.path().join("raw_b");

    // Same seed twice: identical trees, down to the manifest.
    for raw in [&raw_a, &raw_b] {
        let out = run(&["synth", "--spec", spec.to_str().unwrap(), "--out", raw.to_str().unwrap(), "--seed", "11"]);
        ok(&out);
        assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 3 patients"));
    }
    assert_same_tree(&raw_a, &raw_b);
    for id in ["C001", "C002", "C003"] {
        assert!(raw_a.join(id).join("ecg.csv").is_file());
        assert!(raw_a.join(id).join("events.csv").is_file());
    }

    let feats = tmp.path().join("features");
    ok(&run(&["extract", "--data", raw_a.to_str().unwrap(), "--out", feats.to_str().unwrap()]));
    for id in ["C001", "C002", "C003"] {
        assert!(feats.join(format!("{id}.csv")).is_file());
    }

    let model = tmp.path().join("model.json");
    let out = run(&[
        "train",
        "--features",
        feats.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--trees",
        "16",
        "--max-leaves",
        "32",
        "--seed",
        "5",
    ]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("trained 16 trees"));
    assert!(model.is_file());

    let chart = tmp.path().join("importances.svg");
    let table = tmp.path().join("importances.csv");
    ok(&run(&[
        "report",
        "importance",
        "--model",
        model.to_str().unwrap(),
        "--svg",
        chart.to_str().unwrap(),
        "--csv",
        table.to_str().unwrap(),
    ]));
    let svg = std::fs::read_to_string(&chart).unwrap();
    assert!(svg.starts_with("<svg"));
    let csv = std::fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "feature,importance");
    // Header plus the requested top 15.
    assert_eq!(csv.lines().count(), 16);
}

#[test]
fn eval_protocols_write_reports_and_match_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let raw = tmp.path().join("raw");
    let feats = tmp.path().join("features");
    ok(&run(&["synth", "--spec", spec.to_str().unwrap(), "--out", raw.to_str().unwrap(), "--seed", "11"]));
    ok(&run(&["extract", "--data", raw.to_str().unwrap(), "--out", feats.to_str().unwrap()]));

    let pairwise = tmp.path().join("pairwise");
    let out = run(&[
        "eval",
        "pairwise",
        "--features",
        feats.to_str().unwrap(),
        "--report",
        pairwise.to_str().unwrap(),
        "--trees",
        "16",
        "--max-leaves",
        "32",
        "--seed",
        "5",
    ]);
    ok(&out);
    let matrix = std::fs::read_to_string(pairwise.join("matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 4, "header plus one row per patient");
    let cells = std::fs::read_to_string(pairwise.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 7, "header plus one row per ordered pair");
    assert!(pairwise.join("run_manifest.json").is_file());

    // One protocol of each remaining flavor, through the same features.
    let lopo = tmp.path().join("lopo");
    ok(&run(&["eval", "lopo", "--features", feats.to_str().unwrap(), "--report", lopo.to_str().unwrap(), "--trees", "16", "--max-leaves", "32", "--seed", "5"]));
    assert!(lopo.join("accuracy.csv").is_file());
    assert!(lopo.join("C002").join("confusion.csv").is_file());

    // Identical artifacts whether rayon gets one thread or eight.
    let pooled_1 = tmp.path().join("pooled_1");
    let pooled_8 = tmp.path().join("pooled_8");
    for (dir, threads) in [(&pooled_1, "1"), (&pooled_8, "8")] {
        let out = run_with_env(
            &[
                "eval",
                "pooled",
                "--features",
                feats.to_str().unwrap(),
                "--report",
                dir.to_str().unwrap(),
                "--trees",
                "16",
                "--max-leaves",
                "32",
                "--seed",
                "5",
            ],
            "CEABENCH_THREADS",
            threads,
        );
        ok(&out);
    }
    assert_same_tree(&pooled_1, &pooled_8);

    let tsne_1 = tmp.path().join("tsne_1");
    let tsne_8 = tmp.path().join("tsne_8");
    for (dir, threads) in [(&tsne_1, "1"), (&tsne_8, "8")] {
        let out = run_with_env(
            &[
                "tsne",
                "--features",
                feats.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
                "--perplexity",
                "8",
                "--iterations",
                "400",
                "--seed",
                "5",
            ],
            "CEABENCH_THREADS",
            threads,
        );
        ok(&out);
        assert!(dir.join("embedding.csv").is_file());
        assert!(dir.join("embedding.svg").is_file());
    }
    assert_same_tree(&tsne_1, &tsne_8);
}

#[test]
fn failures_exit_with_documented_codes_and_one_stderr_line() {
    let tmp = tempfile::tempdir().unwrap();

    // Usage errors are clap's domain.
    let out = run(&["eval", "pooled", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    // Missing input.
    let report = tmp.path().join("r");
    let out = run(&[
        "eval",
        "pooled",
        "--features",
        tmp.path().join("nope.csv").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr was: {stderr}");
    assert!(stderr.starts_with("ceabench error: kind=missing_input msg="), "stderr was: {stderr}");

    // Malformed cohort spec.
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "n_patients = [this is not toml").unwrap();
    let out = run(&["synth", "--spec", bad.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ceabench error: kind=format"));

    // Pairwise needs at least two patients.
    let single = tmp.path().join("single.csv");
    let mut table = String::from("# ceabench-schema=1\npatient_id,window_start_s,a,b,label\n");
    for i in 0..30 {
        let label = if i % 2 == 0 { "shunt" } else { "clamped_artery" };
        table.push_str(&format!("P1,{i}.0,1.0,2.0,{label}\n"));
    }
    std::fs::write(&single, table).unwrap();
    let out = run(&[
        "eval",
        "pairwise",
        "--features",
        single.to_str().unwrap(),
        "--report",
        tmp.path().join("pw").to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ceabench error: kind=insufficient_data"));

    // Bad thread count, checked before any work happens.
    let out = run_with_env(&["synth", "--spec", "irrelevant.toml", "--out", "x", "--seed", "1"], "CEABENCH_THREADS", "zippy");
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ceabench error: kind=param"));
}
