//! Runs the `mcp` binary end to end in temporary directories.

use std::path::Path;
use std::process::{Command, Output};

use mcp_cli::Manifest;
use mcp_core::Table;

fn mcp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = mcp(args, dir);
    assert!(
        out.status.success(),
        "mcp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

/// Value of `column` on the grid row nearest to `(p1, p2)`.
fn at(t: &Table, column: &str, p1: f64, p2: f64) -> f64 {
    let x = t.numeric_column("p1").unwrap();
    let y = t.numeric_column("p2").unwrap();
    let v = t.numeric_column(column).unwrap();
    let i = (0..v.len())
        .min_by(|&a, &b| {
            let da = (x[a] - p1).abs() + (y[a] - p2).abs();
            let db = (x[b] - p1).abs() + (y[b] - p2).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    v[i]
}

#[test]
fn gaussian_surface_is_monotone_in_both_powers() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["mi-surface", "--out", "o"], dir.path());
    let t = Table::read_csv(&dir.path().join("o/surface.csv")).unwrap();
    assert_eq!(t.header(), ["p1", "p2", "mi_mac1", "mi_mac2", "mi_min"]);
    assert_eq!(t.len(), 441);
    for col in ["mi_mac1", "mi_mac2"] {
        for i in 0..20 {
            for j in 0..=20 {
                let (a, b) = (i as f64 * 0.1, j as f64 * 0.1);
                assert!(at(&t, col, a + 0.1, b) >= at(&t, col, a, b) - 1e-12);
                assert!(at(&t, col, b, a + 0.1) >= at(&t, col, b, a) - 1e-12);
            }
        }
    }
}

#[test]
fn bpsk_surface_dips_at_equal_full_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mi-surface]\ninputs = [\"bpsk\", \"bpsk\"]\n");
    run_ok(&["mi-surface", "--config", &cfg, "--out", "o"], dir.path());
    let t = Table::read_csv(&dir.path().join("o/surface.csv")).unwrap();
    let full = at(&t, "mi_mac1", 2.0, 2.0);
    assert!((full - 1.5).abs() < 1e-6, "I(2,2) = {full}");
    assert!(at(&t, "mi_mac1", 1.9, 2.0) > full);
    assert!(at(&t, "mi_mac1", 2.0, 1.9) > full);
}

#[test]
fn same_seed_gives_identical_files_and_valid_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sim]\nt = 40\nn_blocks = 2\n");
    for out in ["a", "b"] {
        run_ok(
            &["sim-ul", "--config", &cfg, "--seed", "7", "--out", out],
            dir.path(),
        );
    }
    let a = Manifest::read(&dir.path().join("a")).unwrap();
    let b = Manifest::read(&dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seed, 7);
    assert!(!a.files.is_empty());
    for f in &a.files {
        let x = std::fs::read(dir.path().join("a").join(&f.path)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(&f.path)).unwrap();
        assert_eq!(x, y, "{} differs", f.path);
        assert_eq!(x.len() as u64, f.bytes);
    }
    assert!(a.stale_files(&dir.path().join("a")).is_empty());
    std::fs::write(dir.path().join("a").join(&a.files[0].path), "tampered\n").unwrap();
    assert_eq!(
        a.stale_files(&dir.path().join("a")),
        [a.files[0].path.clone()]
    );
}

#[test]
fn other_seed_changes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sim]\nt = 40\nn_blocks = 2\n");
    run_ok(
        &["sim-dl", "--config", &cfg, "--seed", "1", "--out", "a"],
        dir.path(),
    );
    run_ok(
        &["sim-dl", "--config", &cfg, "--seed", "2", "--out", "b"],
        dir.path(),
    );
    let a = std::fs::read(dir.path().join("a/trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/trace.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn unknown_key_is_rejected_with_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mi-surface]\np_max = 2.0\nbogus = 1\n");
    let out = mcp(&["mi-surface", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus"), "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn out_of_domain_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mi-surface]\nstep = -0.1\n");
    let out = mcp(&["mi-surface", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mi-surface.step"), "{err}");
}

#[test]
fn power_and_precode_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["power", "--out", "p"], dir.path());
    let m = Manifest::read(&dir.path().join("p")).unwrap();
    assert_eq!(m.command, "power");
    let t = Table::read_csv(&dir.path().join("p/power.csv")).unwrap();
    assert!(!t.is_empty());
    run_ok(&["precode", "--out", "q"], dir.path());
    assert!(dir.path().join("q/precoders.csv").exists());
    assert!(dir.path().join("q/precode_summary.csv").exists());
}

#[test]
fn validate_writes_one_row_per_selected_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[validate]\ncriteria = [3, 10]\n");
    run_ok(&["validate", "--config", &cfg, "--out", "v"], dir.path());
    let t = Table::read_csv(&dir.path().join("v/validation.csv")).unwrap();
    assert_eq!(t.len(), 2);
    let status = t.column("status").unwrap();
    for row in t.rows() {
        assert_eq!(row[status].to_string(), "pass");
    }
}
