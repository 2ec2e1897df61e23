use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quadric_core::io::{read_json, read_report, DetectionReport, FitReport, SceneTruth};
use quadric_core::QuadricCoefficients;
use tempfile::tempdir;

fn quadric() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quadric"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    quadric().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn approx_fit_of_sphere_fixture() {
    let dir = tempdir().unwrap();
    let out_path = dir.path().join("fit.json");
    let out = run(&["fit", "--method", "approx", path_str(&fixture("sphere.ply")), "-o", path_str(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: FitReport = read_json(&out_path).unwrap();
    let q = QuadricCoefficients::from_array(report.q).unwrap();
    assert!(q.distance(&QuadricCoefficients::unit_sphere()) < 1e-9, "{:?}", report.q);
    assert_eq!(report.points, 300);
    assert_eq!(report.class, "central");
}

#[test]
fn every_fit_method_runs() {
    for method in ["full", "approx", "taubin", "sphere"] {
        let out = run(&["fit", "--method", method, path_str(&fixture("sphere.ply"))]);
        assert_eq!(code(&out), 0, "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("\"q\""));
    }
    let dir = tempdir().unwrap();
    let out_path = dir.path().join("fit.json");
    run(&["fit", "--method", "sphere", path_str(&fixture("sphere.ply")), "-o", path_str(&out_path)]);
    let s = read_json::<FitReport>(&out_path).unwrap().sphere.unwrap();
    assert!((s.radius - 1.0).abs() < 1e-12 && s.center.iter().all(|c| c.abs() < 1e-12));
}

#[test]
fn sphere_detection_on_fixture() {
    let out = run(&["detect", "--type", "sphere", path_str(&fixture("sphere.ply")), "--expect-min", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_is_reproducible() {
    let args = ["bench", "--sigma-grid", "0,0.01", "--trials", "2", "--quadrics", "2", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "method,sigma,trial,geom_err,ang_err,gradnorm_err,runtime_s");
    assert_eq!(lines.count(), 3 * 2 * 2 * 2);
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["fit", "--method", "cubic", "x.ply"])), 2);
    assert_eq!(code(&run(&["detect", "/nonexistent/cloud.ply"])), 2);
    assert_eq!(code(&run(&["detect", path_str(&fixture("sphere.ply")), "--tau-n", "-1"])), 2);
    let dir = tempdir().unwrap();
    let bad = dir.path().join("bad.ply");
    std::fs::write(&bad, "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n").unwrap();
    let out = run(&["fit", path_str(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unmet_expectation_exits_with_three() {
    let out = run(&["detect", "--type", "sphere", path_str(&fixture("sphere.ply")), "--expect-min", "5"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn synth_then_detect_round_trip() {
    let dir = tempdir().unwrap();
    let scene = dir.path().join("scene.ply");
    let truth = dir.path().join("truth.json");
    let out = run(&["synth", "-o", path_str(&scene), "--truth", path_str(&truth), "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let gt: SceneTruth = read_json(&truth).unwrap();
    assert_eq!(gt.quadrics.len(), 2);
    assert_eq!(gt.labels.len(), 1429);

    let report_path = dir.path().join("report.json");
    let out = run(&["detect", path_str(&scene), "--seed", "2", "--expect-min", "1", "-o", path_str(&report_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&report_path).unwrap();
    assert_eq!(report.input_points, 1429);
    assert!(report.timings.is_none());
    let truth_q = gt.quadrics().unwrap();
    let best = report
        .quadrics
        .iter()
        .map(|e| truth_q.iter().map(|t| e.quadric().unwrap().distance(t)).fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    assert!(best < 0.05, "closest detection at coefficient distance {best}");
}

#[test]
fn config_file_and_overrides_are_echoed() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("detector.toml");
    std::fs::write(&config, "tau_n = 0.9\ns_min = 12\nseed = 4\n").unwrap();
    let report_path = dir.path().join("r.json");
    let out = run(&[
        "detect",
        path_str(&fixture("sphere.ply")),
        "--config",
        path_str(&config),
        "--s-min",
        "15",
        "--debug",
        "-o",
        path_str(&report_path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: DetectionReport = read_report(&report_path).unwrap();
    assert_eq!(report.config.tau_n, 0.9);
    assert_eq!(report.config.s_min, 15);
    assert_eq!(report.seed, 4);
    assert!(report.quadrics.iter().all(|q| q.q_normalized_frame.is_some()));
}

#[test]
fn detection_output_is_identical_across_thread_counts() {
    let dir = tempdir().unwrap();
    let scene = dir.path().join("scene.xyzn");
    assert_eq!(code(&run(&["synth", "-o", path_str(&scene), "--seed", "11"])), 0);
    let one = run(&["--threads", "1", "detect", path_str(&scene), "--seed", "3"]);
    let four = run(&["--threads", "4", "detect", path_str(&scene), "--seed", "3"]);
    let again = run(&["--threads", "4", "detect", path_str(&scene), "--seed", "3"]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(four.stdout, again.stdout);
}

#[test]
fn timings_only_when_requested() {
    let out = run(&["--timings", "detect", "--type", "sphere", path_str(&fixture("sphere.ply"))]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("\"timings\""));
}

#[test]
fn positions_without_normals_get_estimated_ones() {
    let dir = tempdir().unwrap();
    let xyz = dir.path().join("sphere.xyz");
    let text: String = std::fs::read_to_string(fixture("sphere.ply"))
        .unwrap()
        .lines()
        .skip_while(|l| *l != "end_header")
        .skip(1)
        .map(|l| l.split_whitespace().take(3).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    std::fs::write(&xyz, text).unwrap();
    let out_path = dir.path().join("fit.json");
    let out = run(&["fit", "--method", "sphere", path_str(&xyz), "-o", path_str(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: FitReport = read_json(&out_path).unwrap();
    let s = report.sphere.unwrap();
    assert!((s.radius - 1.0).abs() < 0.02, "{}", s.radius);
}
