use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pdm_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdm-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn run(exp: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        exp,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    pdm_lab(&args)
}

/// Rows of a CSV without the header, split on commas.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, body)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn unknown_experiment_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = run("fig-11", &cfg, &dir.path().join("o"), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig-11"));
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "L1 = 31.7uH\nwarp = 9\n");
    let out = run("dynamic-response", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp"));
}

#[test]
fn conflicting_ntf_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = run(
        "dynamic-response",
        &cfg,
        &dir.path().join("o"),
        &["--ntf", "first", "--notch-ratio", "0.076"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ramp_response_error_stays_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ntf = notch\nnotch_ratio = 0.075\nd_profile = ramp 0 1 4m\nduration_periods = 1500\n",
    );
    let out_dir = dir.path().join("o");
    let out = run("dynamic-response", &cfg, &out_dir, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, body) = rows(&out_dir.join("dynamic_response.csv"));
    assert_eq!(header, ["half_cycle", "time_s", "d", "y", "e"]);
    assert_eq!(body.len(), 3000);
    let e = column(&header, "e");
    for row in &body {
        let v: f64 = row[e].parse().unwrap();
        assert!((-1.0 - 1e-9..=1e-9).contains(&v), "{v}");
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.csv")).unwrap();
    assert!(manifest.contains("dynamic_response.csv,1,"));
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d_profile = constant 0.963\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run("ntf-compare", &cfg, out, &["--notch-ratio", "0.076"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn notch_sweep_on_secondary_stays_below_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("o");
    let out = run(
        "ripple-sweep",
        &cfg,
        &out_dir,
        &[
            "--ntf",
            "notch",
            "--notch-ratio",
            "0.076",
            "--side",
            "secondary",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, body) = rows(&out_dir.join("ripple_sweep.csv"));
    let (ntf, d, r2) = (
        column(&header, "ntf"),
        column(&header, "d"),
        column(&header, "ripple_i2_pct"),
    );
    let notch: Vec<_> = body.iter().filter(|r| r[ntf] == "notch").collect();
    assert_eq!(notch.len(), 41);
    assert_eq!(notch[0][d], "0.203");
    assert_eq!(notch[40][d], "1");
    let worst = notch
        .iter()
        .map(|r| r[r2].parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(worst <= 25.0, "{worst}");
    let first_worst = body
        .iter()
        .filter(|r| r[ntf] == "first")
        .map(|r| r[r2].parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(first_worst > 40.0, "{first_worst}");
}

#[test]
fn detuned_notch_stays_within_tolerance_at_reference_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("o");
    let out = run("deviation-study", &cfg, &out_dir, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, body) = rows(&out_dir.join("deviation_summary.csv"));
    let at = column(&header, "ripple_i2_at_0963_pct");
    let max = column(&header, "max_ripple_i2_pct");
    assert_eq!(body.len(), 3);
    let get = |row: usize, col: usize| body[row][col].parse::<f64>().unwrap();
    assert!(get(0, at) <= 30.0, "{}", get(0, at));
    assert!(get(0, max) >= get(1, max) && get(2, max) >= get(1, max));
}

#[test]
fn gssa_bode_reports_peak_near_half_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("o");
    let out = run("gssa-bode", &cfg, &out_dir, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, body) = rows(&out_dir.join("gssa_peaks.csv"));
    let ratio = column(&header, "omega0_ratio");
    assert_eq!(body.len(), 4);
    for row in body {
        let r: f64 = row[ratio].parse().unwrap();
        assert!((r / 0.076 - 1.0).abs() < 0.05, "{r}");
    }
}

#[test]
fn sinusoid_tracking_writes_both_ntfs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("o");
    let out = run("sinusoid-tracking", &cfg, &out_dir, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, body) = rows(&out_dir.join("sinusoid_tracking_summary.csv"));
    assert_eq!(body.len(), 2);
    let x2 = column(&header, "rms_excursion_i2_a");
    let first: f64 = body[0][x2].parse().unwrap();
    let notch: f64 = body[1][x2].parse().unwrap();
    assert!(notch < first, "{notch} vs {first}");
}
