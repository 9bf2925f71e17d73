//! End-to-end tests for the `ensdiff` binary: exit codes, artifact
//! determinism, and the full gen-data → train → sample → stats pipeline
//! at a deliberately tiny configuration so the whole file runs in seconds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ensdiff"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn ensdiff");
    assert!(
        out.status.success(),
        "ensdiff {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn s(path: &Path) -> String {
    path.to_str().expect("utf-8 path").to_string()
}

/// gen-data + a 2-epoch train pass: enough to exercise every pipeline
/// stage without caring about model quality.
fn tiny_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    let model = dir.join("model.grd");
    run_ok(&[
        "--seed", "7", "gen-data", "--out", &s(&data), "--size", "16",
        "--coarse-factor", "4", "--samples", "8", "--ell", "2.5",
    ]);
    run_ok(&[
        "--seed", "7", "train", "--data", &s(&data), "--out", &s(&model),
        "--width", "16", "--blocks", "1", "--epochs", "2", "--t-max", "64",
        "--lambda", "1.0",
    ]);
    (data, model)
}

#[test]
fn gen_data_reruns_are_byte_identical_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for out in [&a, &b] {
        run_ok(&[
            "--seed", "11", "gen-data", "--out", &s(out), "--size", "16",
            "--coarse-factor", "4", "--samples", "6",
        ]);
    }
    run_ok(&[
        "--seed", "12", "gen-data", "--out", &s(&c), "--size", "16",
        "--coarse-factor", "4", "--samples", "6",
    ]);
    for name in ["hi.grd", "lo.grd", "seasons.csv"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs across reruns");
    }
    assert_ne!(read(&a.join("hi.grd")), read(&c.join("hi.grd")), "seed had no effect");
    // config.txt records the seed, so compare it only across same-seed runs.
    assert_eq!(read(&a.join("config.txt")), read(&b.join("config.txt")));
}

#[test]
fn non_divisor_step_count_exits_2_citing_divisibility() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model) = tiny_setup(tmp.path());
    let out = bin()
        .args([
            "sample", "--model", &s(&model), "--data", &s(&data),
            "--out", &s(&tmp.path().join("ens.grd")), "--steps", "7",
        ])
        .output()
        .expect("spawn ensdiff");
    assert_eq!(out.status.code(), Some(2), "expected exit code 2");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("does not divide"),
        "stderr should cite divisibility, got: {stderr}"
    );
    assert!(stderr.contains('7') && stderr.contains("64"), "stderr: {stderr}");
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = bin().args(["sample"]).output().expect("spawn ensdiff");
    assert_eq!(out.status.code(), Some(2), "clap usage errors exit 2");
}

#[test]
fn missing_model_file_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "sample", "--model", &s(&tmp.path().join("nope.grd")),
            "--data", &s(&tmp.path().join("nope")),
            "--out", &s(&tmp.path().join("ens.grd")), "--steps", "8",
        ])
        .output()
        .expect("spawn ensdiff");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_stats_and_rerun_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model) = tiny_setup(tmp.path());
    let ens = tmp.path().join("ens.grd");
    let reference = tmp.path().join("ref.grd");
    run_ok(&[
        "--seed", "3", "sample", "--model", &s(&model), "--data", &s(&data),
        "--out", &s(&ens), "--steps", "8", "--members", "4",
    ]);
    run_ok(&[
        "--seed", "4", "sample", "--model", &s(&model), "--data", &s(&data),
        "--out", &s(&reference), "--steps", "16", "--members", "6",
    ]);

    // Without a reference the MVD columns are NaN; with one they are finite.
    let bare = tmp.path().join("stats.csv");
    run_ok(&[
        "stats", "--ens", &s(&ens), "--data", &s(&data), "--out", &s(&bare),
        "--steps", "8",
    ]);
    let text = std::fs::read_to_string(&bare).unwrap();
    let row = text.lines().nth(1).expect("data row");
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells.len(), 9);
    assert_eq!(cells[0], "8");
    for cell in &cells[2..7] {
        assert_eq!(*cell, "NaN");
    }
    for cell in [cells[1], cells[7], cells[8]] {
        assert!(cell.parse::<f64>().unwrap().is_finite(), "expected finite, got {cell}");
    }

    let with_ref = tmp.path().join("stats_ref.csv");
    run_ok(&[
        "stats", "--ens", &s(&ens), "--data", &s(&data), "--out", &s(&with_ref),
        "--steps", "8", "--reference", &s(&reference),
    ]);
    let text_ref = std::fs::read_to_string(&with_ref).unwrap();
    let row_ref = text_ref.lines().nth(1).unwrap();
    for cell in row_ref.split(',').skip(1) {
        assert!(cell.parse::<f64>().unwrap().is_finite(), "expected finite, got {cell}");
    }
    // mu_V, MSE, SSIM match the reference-free run exactly.
    let cells_ref: Vec<&str> = row_ref.split(',').collect();
    assert_eq!(cells[1], cells_ref[1]);
    assert_eq!(cells[7], cells_ref[7]);
    assert_eq!(cells[8], cells_ref[8]);

    // Regenerating the ensemble and re-running stats reproduces both
    // artifacts byte for byte.
    let ens2 = tmp.path().join("ens2.grd");
    run_ok(&[
        "--seed", "3", "sample", "--model", &s(&model), "--data", &s(&data),
        "--out", &s(&ens2), "--steps", "8", "--members", "4",
    ]);
    assert_eq!(read(&ens), read(&ens2), "sample rerun is not byte-identical");
    let bare2 = tmp.path().join("stats2.csv");
    run_ok(&[
        "stats", "--ens", &s(&ens2), "--data", &s(&data), "--out", &s(&bare2),
        "--steps", "8",
    ]);
    assert_eq!(read(&bare), read(&bare2), "stats rerun is not byte-identical");
}

#[test]
fn thread_cap_does_not_change_sample_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model) = tiny_setup(tmp.path());
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let ens = tmp.path().join(format!("ens_{threads}.grd"));
        run_ok(&[
            "--seed", "5", "--threads", threads, "sample", "--model", &s(&model),
            "--data", &s(&data), "--out", &s(&ens), "--steps", "4", "--members", "6",
        ]);
        outputs.push(read(&ens));
    }
    assert_eq!(outputs[0], outputs[1], "--threads changed the ensemble bytes");
}

#[test]
fn calibrate_writes_report_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model) = tiny_setup(tmp.path());
    let reference = tmp.path().join("ref.grd");
    run_ok(&[
        "--seed", "9", "sample", "--model", &s(&model), "--data", &s(&data),
        "--out", &s(&reference), "--steps", "16", "--members", "6",
    ]);
    let csv_a = tmp.path().join("calib_a.csv");
    let csv_b = tmp.path().join("calib_b.csv");
    let svg = tmp.path().join("calib.svg");
    for (csv, extra) in [(&csv_a, Some(&svg)), (&csv_b, None)] {
        let mut args = vec![
            "--seed".into(), "2".into(), "calibrate".into(),
            "--model".into(), s(&model), "--data".into(), s(&data),
            "--reference".into(), s(&reference),
            "--candidates".into(), "2,4,8".into(),
            "--out".into(), s(csv),
        ];
        if let Some(p) = extra {
            args.push("--plot".into());
            args.push(s(p));
        }
        let out = bin().args(&args).output().expect("spawn ensdiff");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("best_N = "), "stdout: {stdout}");
    }
    assert_eq!(read(&csv_a), read(&csv_b), "calibration rerun differs");
    let header = std::fs::read_to_string(&csv_a).unwrap();
    assert!(header.starts_with("N_steps,mu_V,MVD_yearly"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn eval_reports_ddim_and_bilinear_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model) = tiny_setup(tmp.path());
    let out_csv = tmp.path().join("eval.csv");
    run_ok(&[
        "--seed", "1", "eval", "--model", &s(&model), "--data", &s(&data),
        "--out", &s(&out_csv), "--steps", "8", "--members", "4",
    ]);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,MSE,SSIM");
    assert!(lines[1].starts_with("ddim,"));
    assert!(lines[2].starts_with("bilinear,"));
    for line in &lines[1..] {
        for cell in line.split(',').skip(1) {
            assert!(cell.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn predict_var_writes_maps_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("pv");
    run_ok(&[
        "predict-var", "--out", &s(&dir), "--steps", "1,2,4", "--size", "12",
        "--t-max", "64",
    ]);
    for n in [1, 2, 4] {
        assert!(dir.join(format!("var_N{n}.grd")).exists());
    }
    let text = std::fs::read_to_string(dir.join("variance.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N_steps,mean_v_T,clamped");
    assert_eq!(lines.len(), 4);

    // A non-divisor in the list is rejected with the divisibility exit code.
    let out = bin()
        .args([
            "predict-var", "--out", &s(&tmp.path().join("pv2")),
            "--steps", "1,3", "--size", "12", "--t-max", "64",
        ])
        .output()
        .expect("spawn ensdiff");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_renders_csv_lines_and_grd_heatmaps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("pv");
    run_ok(&[
        "predict-var", "--out", &s(&dir), "--steps", "1,2,4,8", "--size", "12",
        "--t-max", "64",
    ]);
    let line_svg = tmp.path().join("line.svg");
    run_ok(&[
        "plot", "--csv", &s(&dir.join("variance.csv")), "--x", "N_steps",
        "--y", "mean_v_T", "--out", &s(&line_svg),
    ]);
    assert!(std::fs::read_to_string(&line_svg).unwrap().contains("polyline"));

    let heat_svg = tmp.path().join("heat.svg");
    run_ok(&[
        "plot", "--grd", &s(&dir.join("var_N4.grd")), "--out", &s(&heat_svg),
        "--title", "variance map",
    ]);
    assert!(std::fs::read_to_string(&heat_svg).unwrap().contains("variance map"));

    // Unknown column → runtime error naming the column.
    let out = bin()
        .args([
            "plot", "--csv", &s(&dir.join("variance.csv")), "--x", "N_steps",
            "--y", "bogus", "--out", &s(&tmp.path().join("x.svg")),
        ])
        .output()
        .expect("spawn ensdiff");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
