use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dimer-otoc"));
    cmd.args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("DIMER_OTOC_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// All files of `a` exist in `b` with identical bytes.
fn assert_same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let name_str = name.to_string_lossy();
        if name_str == "config.resolved.cfg" {
            // records the output directory, the only intended difference
            continue;
        }
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name_str}"
        );
    }
}

#[test]
fn stability_scan_rows() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["stability-scan"]);
    let rows = csv(&tmp.path().join("stability.csv"));
    assert_eq!(rows.len(), 721);
    let bif = 2f64.atan();
    let mut nearest = (f64::INFINITY, 0.0);
    for r in &rows {
        let theta: f64 = r[0].parse().unwrap();
        let l: f64 = r[2].parse().unwrap();
        if (0.0..=bif).contains(&theta) {
            assert_eq!(l, 0.0);
            assert_eq!(r[3], "true");
        }
        if (theta - 1.35).abs() < nearest.0 {
            nearest = ((theta - 1.35).abs(), l);
        }
    }
    assert!((nearest.1 - 0.97).abs() < 0.01);
    assert!(tmp.path().join("config.resolved.cfg").exists());
}

#[test]
fn phase_portrait_outputs() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["phase-portrait", "--nz", "21", "--nphi", "21"],
    );
    let fps = csv(&tmp.path().join("fixed_points.csv"));
    assert_eq!(fps.len(), 4);
    assert_eq!(fps.iter().filter(|r| r[2] == "hyperbolic").count(), 1);
    let sep = csv(&tmp.path().join("separatrix.csv"));
    let pts: Vec<(f64, f64)> = sep
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    assert!(pts.iter().any(|&(z, phi)| z == 0.0 && phi == 0.0));
    let zmax = pts.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let info: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("separatrix.json")).unwrap())
            .unwrap();
    let expected = info["lambda_s"].as_f64().unwrap() / 1.35f64.sin();
    assert!((zmax - expected).abs() < 1e-6, "{zmax} vs {expected}");
    assert_eq!(csv(&tmp.path().join("energy.csv")).len(), 21 * 21);
}

#[test]
fn otoc_is_deterministic_across_runs_and_threads() {
    let args = [
        "otoc",
        "--n-particles",
        "60,80",
        "--points",
        "40",
        "--twa-samples",
        "64",
        "--seed",
        "7",
    ];
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(a.path(), &args);
    let out = run(b.path(), &args, &[("DIMER_OTOC_THREADS", "1")]);
    assert!(out.status.success());
    assert_same_tree(a.path(), b.path());

    let header = fs::read_to_string(a.path().join("otoc_N60.csv")).unwrap();
    assert!(header.starts_with("t,C,O,O_short,O_long,regime,twa,twa_stderr\n"));
    assert_eq!(csv(&a.path().join("otoc_N80.csv")).len(), 40);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("otoc_N60.json")).unwrap()).unwrap();
    assert!(summary["time_scales"]["tau_e"].as_f64().unwrap() > 0.0);
}

#[test]
fn squeezed_otoc_records_backward_time() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &[
            "otoc",
            "--n-particles",
            "100",
            "--points",
            "30",
            "--t0-tau-e",
            "-0.5",
        ],
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("otoc_N100.json")).unwrap())
            .unwrap();
    let tau_e = summary["time_scales"]["tau_e"].as_f64().unwrap();
    assert!((summary["t0"].as_f64().unwrap() + tau_e / 2.0).abs() < 1e-12);
}

#[test]
fn husimi_frames_match_configuration() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &[
            "husimi",
            "--n-particles",
            "80",
            "--frames",
            "4",
            "--nz",
            "41",
            "--nphi",
            "41",
            "--format",
            "both",
        ],
    );
    for k in 0..4 {
        for ext in ["csv", "bin", "json"] {
            assert!(tmp.path().join(format!("husimi_{k:03}.{ext}")).exists());
        }
    }
    assert!(!tmp.path().join("husimi_004.csv").exists());
    let bin = fs::read(tmp.path().join("husimi_000.bin")).unwrap();
    assert_eq!(bin.len(), 41 * 41 * 8);
    let frames = csv(&tmp.path().join("frames.csv"));
    assert_eq!(frames.len(), 4);
    let peak: (f64, f64) = (frames[0][3].parse().unwrap(), frames[0][4].parse().unwrap());
    assert!(peak.0.abs() < 1e-12 && peak.1.abs() < 1e-12, "{peak:?}");
}

#[test]
fn scan_is_byte_identical_on_rerun() {
    let args = [
        "scan",
        "--n-particles",
        "50,80",
        "--scan-points",
        "3",
        "--points",
        "120",
    ];
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(a.path(), &args);
    ok(b.path(), &args);
    assert_same_tree(a.path(), b.path());
    assert_eq!(csv(&a.path().join("scan.csv")).len(), 6);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# test\ntheta = 1.2\nn_particles = 40\npoints = 20\n").unwrap();
    let out_dir = tmp.path().join("out");
    ok(
        &out_dir,
        &["otoc", "--config", cfg.to_str().unwrap(), "--theta", "1.3"],
    );
    let resolved = fs::read_to_string(out_dir.join("config.resolved.cfg")).unwrap();
    assert!(resolved.contains("command = otoc\n"));
    assert!(resolved.contains("\ntheta = 1.3\n"));
    assert!(resolved.contains("\nn_particles = 40\n"));
    assert!(resolved.contains("\npoints = 20\n"));
    assert_eq!(csv(&out_dir.join("otoc_N40.csv")).len(), 20);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let code =
        |args: &[&str], envs: &[(&str, &str)]| run(tmp.path(), args, envs).status.code().unwrap();

    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "thetta = 1\n").unwrap();
    assert_eq!(code(&["otoc", "--config", cfg.to_str().unwrap()], &[]), 2);
    assert_eq!(code(&["otoc", "--theta", "x"], &[]), 2);
    assert_eq!(
        code(&["otoc", "--theta", "0.5", "--n-particles", "20"], &[]),
        2
    );
    assert_eq!(code(&["otoc", "--backend", "gpu"], &[]), 2);
    assert_eq!(code(&["husimi", "--n-particles", "10,20"], &[]), 2);
    assert_eq!(
        code(
            &["otoc", "--n-particles", "10"],
            &[("DIMER_OTOC_THREADS", "zero")]
        ),
        2
    );

    // sinh(λs t) overflows the classical overlay long before the quantum run fails
    let out = run(
        tmp.path(),
        &[
            "otoc",
            "--n-particles",
            "10",
            "--points",
            "3",
            "--t-max",
            "800",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overflow"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    ok(
        a.path(),
        &[
            "otoc",
            "--n-particles",
            "50",
            "--points",
            "25",
            "--omega",
            "0.5",
        ],
    );
    let resolved = a.path().join("config.resolved.cfg");
    ok(b.path(), &["otoc", "--config", resolved.to_str().unwrap()]);
    assert_same_tree(a.path(), b.path());
    let out = run(
        b.path(),
        &["scan", "--config", resolved.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for fig in 2..=7 {
        let path = dir.join(format!("fig{fig}.cfg"));
        let text = fs::read_to_string(&path).unwrap();
        let command = text
            .lines()
            .find_map(|l| l.strip_prefix("command = "))
            .unwrap()
            .to_string();
        // `--points x` aborts the heavy commands only after the file was accepted
        let tmp = TempDir::new().unwrap();
        let out = run(
            tmp.path(),
            &[
                &command,
                "--config",
                path.to_str().unwrap(),
                "--points",
                "x",
            ],
            &[],
        );
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(
            !stderr.contains(path.to_str().unwrap()),
            "fig{fig}: {stderr}"
        );
    }
}
