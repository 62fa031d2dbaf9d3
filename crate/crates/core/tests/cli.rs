use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sbs_mvts::cli::{EXIT_PARSE, EXIT_RUNTIME, EXIT_USAGE};
use sbs_mvts::lsw::{local_autocov, LswSpec};
use sbs_mvts::mvts::{calibrate_thresholds, sbs_mvts, MvtsConfig};
use sbs_mvts::{generate, ChangePointSet, Model, ModelSpec, MultivariateSeries, TruthSidecar};

fn sbs(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sbs"))
        .args(args)
        .env_remove("SBS_THREADS")
        .output()
        .expect("run sbs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = sbs(args);
    assert_eq!(code, 0, "sbs {args:?} failed: {stderr}");
    stdout
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sidecar(p: &Path) -> TruthSidecar {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn constant_csv_has_no_points() {
    let dir = tempfile::tempdir().unwrap();
    let input = path(dir.path(), "const.csv");
    let mut text = String::from("a,b\n");
    for _ in 0..300 {
        text.push_str("1.5,2\n");
    }
    fs::write(&input, text).unwrap();
    let set = ChangePointSet::from_json(&ok(&["segment", s(&input)])).unwrap();
    assert_eq!(set.schema, 1);
    assert!(set.points.is_empty());
}

#[test]
fn m3_seed_7_regression() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "m3.csv");
    let json = path(dir.path(), "m3.json");
    ok(&[
        "simulate", "M3", "--rho", "0.5", "--p", "20", "--T", "1024", "--seed", "7", "-o",
        s(&csv),
    ]);
    assert_eq!(sidecar(&path(dir.path(), "m3.truth.json")).change_points, vec![512]);
    ok(&["segment", s(&csv), "-o", s(&json)]);
    let set = ChangePointSet::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    let locs = set.locations();
    assert_eq!(locs.len(), 1, "{locs:?}");
    assert!(locs[0].abs_diff(512) <= 16, "{locs:?}");
}

#[test]
fn missing_file_is_an_io_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "out.json");
    let (code, stdout, stderr) = sbs(&["segment", s(&path(dir.path(), "nope.csv")), "-o", s(&out)]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(stdout.is_empty());
    assert!(stderr.contains("nope.csv"), "{stderr}");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn malformed_csv_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = path(dir.path(), "bad.csv");
    fs::write(&input, "a,b\n1,2\n3,NaN\n").unwrap();
    let (code, _, stderr) = sbs(&["segment", s(&input)]);
    assert_eq!(code, EXIT_PARSE);
    assert!(stderr.contains("row 3, column 2"), "{stderr}");
    fs::write(&input, "1,2\n3\n").unwrap();
    assert_eq!(sbs(&["calibrate", s(&input)]).0, EXIT_PARSE);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(sbs(&[]).0, EXIT_USAGE);
    assert_eq!(sbs(&["segment", "x.csv", "--rule", "median"]).0, EXIT_USAGE);
    assert_eq!(sbs(&["simulate", "M7", "-o", "x.csv"]).0, EXIT_USAGE);
}

#[test]
fn invalid_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "x.csv");
    ok(&["simulate", "--model", "null", "--p", "2", "--T", "256", "-o", s(&csv)]);
    assert_eq!(sbs(&["segment", s(&csv), "--quantile", "1.5"]).0, 4);
    assert_eq!(sbs(&["simulate", "M1.1", "--T", "64", "-o", s(&csv)]).0, 4);
}

#[test]
fn simulate_null_shape() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "null.csv");
    ok(&["simulate", "--model", "null", "--p", "3", "--T", "256", "-o", s(&csv)]);
    let x = MultivariateSeries::read_csv_path(&csv).unwrap();
    assert_eq!((x.dim(), x.len()), (3, 256));
    let truth = sidecar(&path(dir.path(), "null.truth.json"));
    assert!(truth.change_points.is_empty());
    assert_eq!((truth.p, truth.len), (3, 256));
}

#[test]
fn simulate_m1_truth() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "m1.csv");
    let truth = path(dir.path(), "truth.json");
    ok(&[
        "simulate", "--model", "M1.1", "--rho", "0.25", "--p", "20", "--T", "1024", "-o",
        s(&csv), "--truth", s(&truth),
    ]);
    assert_eq!(sidecar(&truth).change_points, vec![341, 614, 838]);
}

#[test]
fn simulate_white_noise_spec_variance() {
    let dir = tempfile::tempdir().unwrap();
    let truncation = 6;
    let spec = LswSpec::white_noise(1, truncation);
    let spec_path = path(dir.path(), "whitenoise.lsw");
    fs::write(&spec_path, spec.to_toml().unwrap()).unwrap();
    let csv = path(dir.path(), "wn.csv");
    let len = 4096;
    ok(&["simulate", "--spec", s(&spec_path), "--T", "4096", "--seed", "11", "-o", s(&csv)]);
    let x = MultivariateSeries::read_csv_path(&csv).unwrap();
    let v: f64 = x.component(0).iter().map(|a| a * a).sum::<f64>() / len as f64;
    let target = 1.0 - 0.5f64.powi(truncation as i32);
    // variance of the mean of squares of a Gaussian process
    let lag_sum: f64 = (-(1i64 << (truncation + 1))..=(1i64 << (truncation + 1)))
        .map(|tau| local_autocov(&spec, 0, 0, 0.5, tau).powi(2))
        .sum();
    let se = (2.0 * lag_sum / len as f64).sqrt();
    assert!((local_autocov(&spec, 0, 0, 0.5, 0) - target).abs() < 1e-12);
    assert!((v - target).abs() < 3.0 * se, "variance {v} vs {target} (se {se})");
}

#[test]
fn calibrate_is_deterministic_scale_free_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::new(Model::M1_1, 4, 1024, 0.5, 3);
    let x = generate(&spec).unwrap();
    let csv = path(dir.path(), "x.csv");
    let scaled = path(dir.path(), "x10.csv");
    x.write_csv(fs::File::create(&csv).unwrap()).unwrap();
    x.scaled(10.0)
        .write_csv(fs::File::create(&scaled).unwrap())
        .unwrap();
    let args = ["--R", "50", "--seed", "5"];
    let run = |input: &Path| {
        let mut a = vec!["calibrate", s(input)];
        a.extend(args);
        ok(&a)
    };
    let first = run(&csv);
    assert_eq!(first, run(&csv));
    assert_eq!(first, run(&scaled));

    let mut cfg = MvtsConfig::default();
    cfg.calibration.reps = 50;
    cfg.calibration.seed = 5;
    let table = calibrate_thresholds(&x, cfg.depth(1024).unwrap(), &cfg.calibration).unwrap();
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    assert_eq!(first, String::from_utf8(buf).unwrap());
}

#[test]
fn single_replicate_thresholds_ignore_the_quantile() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "x.csv");
    ok(&["simulate", "--model", "null", "--p", "3", "--T", "256", "-o", s(&csv)]);
    let top = ok(&["calibrate", s(&csv), "--quantile", "1.0", "--R", "1"]);
    let low = ok(&["calibrate", s(&csv), "--quantile", "0.3", "--R", "1"]);
    assert_eq!(top, low);
    assert!(top.starts_with("j,l,scale,kappa,pi\n"));
}

#[test]
fn round_trip_matches_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "m1.csv");
    ok(&[
        "simulate", "M1.2", "--rho", "0.5", "--p", "8", "--T", "1024", "--seed", "4", "-o",
        s(&csv),
    ]);
    let via_cli = ok(&["segment", s(&csv), "--R", "100", "--seed", "4"]);

    let x = generate(&ModelSpec::new(Model::M1_2, 8, 1024, 0.5, 4)).unwrap();
    let mut cfg = MvtsConfig::default();
    cfg.calibration.reps = 100;
    cfg.calibration.seed = 4;
    let lib = sbs_mvts(&x, &cfg).unwrap().merged;
    assert_eq!(via_cli.trim_end(), lib.to_json().unwrap());
    let truth = path(dir.path(), "m1.truth.json");
    let report = sbs_mvts::cli::score_against_sidecar(&lib.locations(), &truth, 16).unwrap();
    assert_eq!(report.n_hat, lib.len());
    assert_eq!(report.detected.len(), 3);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "x.csv");
    ok(&["simulate", "M4", "--rho", "1", "--p", "10", "--T", "512", "-o", s(&csv)]);
    let one = ok(&["--threads", "1", "segment", s(&csv), "--R", "100"]);
    let three = ok(&["--threads", "3", "segment", s(&csv), "--R", "100"]);
    let env = Command::new(env!("CARGO_BIN_EXE_sbs"))
        .args(["segment", s(&csv), "--R", "100"])
        .env("SBS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(one, three);
    assert_eq!(one, String::from_utf8(env.stdout).unwrap());
}

#[test]
fn curve_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "x.csv");
    ok(&["simulate", "A", "--p", "6", "--T", "512", "-o", s(&csv)]);
    let curves = path(dir.path(), "curves");
    ok(&["cusum", s(&csv), "-o", s(&curves), "--scales", "-1,-2", "--R", "20"]);
    let agg = fs::read_to_string(curves.join("cusum_scale-1.csv")).unwrap();
    assert!(agg.starts_with("b,value,count\n"));
    // splits 0..T-3 of the scale -1 panel, shifted by one
    assert_eq!(agg.lines().count(), 1 + 510);
    ok(&["cusum", s(&csv), "-o", s(&curves), "--scales", "-2", "--sequence", "7"]);
    let one = fs::read_to_string(curves.join("cusum_scale-2_seq7.csv")).unwrap();
    assert!(one.starts_with("b,value\n"));
    assert!(one.lines().nth(1).unwrap().starts_with("3,"));

    let seg_curves = path(dir.path(), "seg");
    ok(&["segment", s(&csv), "--R", "20", "--curves", s(&seg_curves)]);
    assert!(seg_curves.join("cusum_scale-3.csv").exists());
}

#[test]
fn bench_writes_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let table = path(dir.path(), "bench.csv");
    let report = ok(&[
        "bench", "--model", "M4", "--rho", "1", "--p", "4", "--T", "256", "--reps", "2",
        "--rules", "thr,max", "--R", "30", "-o", s(&table),
    ]);
    let text = fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,rho,p,T,rule,mean_nhat,sd_nhat,det_pct_1,reps,seed0"
    );
    assert!(lines.next().unwrap().starts_with("M4,1,4,256,thr,"));
    assert!(lines.next().unwrap().starts_with("M4,1,4,256,max,"));
    assert!(report.contains("thr") && report.contains("max"));
}
