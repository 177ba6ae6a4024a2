use std::fs;
use std::path::Path;
use std::process::Command;

use gmsdg::cli::{self, KappaSpec, RunConfig};
use gmsdg::io::read_history;
use gmsdg::PermeabilityField;

fn config(dir: &Path, extra: &str) -> RunConfig {
    let text = format!("grid.nc = 2\ngrid.nf = 4\nkappa.generator = channels\nkappa.seed = 7\n{extra}");
    RunConfig::parse(&text, dir).unwrap()
}

#[test]
fn generators_are_deterministic() {
    let (spec, n) = KappaSpec::parse_generator("channels:contrast=1e4,seed=7,n=32").unwrap();
    assert_eq!(n, Some(32));
    assert_eq!(spec.build(32).unwrap(), spec.build(32).unwrap());
    let (one, _) = KappaSpec::parse_generator("constant").unwrap();
    assert!(one.build(8).unwrap().values().iter().all(|&v| v == 1.0));
}

#[test]
fn uniform_run_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "strategy = uniform\nadaptive.max_iterations = 2\n");
    let a = cli::run(&c, None).unwrap();
    assert_eq!(a.dir, dir.path().join("out"));
    let text = fs::read_to_string(a.dir.join("history.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    for f in ["indicators.csv", "solution.csv", "summary.txt"] {
        assert!(a.dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn constant_kappa_adaptive_run_converges() {
    let dir = tempfile::tempdir().unwrap();
    let text = "grid.nc = 2\ngrid.nf = 4\nkappa.generator = constant\nadaptive.max_iterations = 50\n";
    let c = RunConfig::parse(text, dir.path()).unwrap();
    let a = cli::run(&c, None).unwrap();
    let r = a.records.last().unwrap();
    assert!(r.converged || r.ea < 1e-6, "final ea {}", r.ea);
    assert!(a.records.windows(2).all(|w| w[1].ea <= w[0].ea * (1.0 + 1e-12)));
}

#[test]
fn history_csv_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "adaptive.max_iterations = 4\nreference.snapshot = true\n");
    let a = cli::run(&c, None).unwrap();
    let back = read_history(&a.dir.join("history.csv")).unwrap();
    assert_eq!(back.len(), a.records.len());
    for (x, y) in back.iter().zip(&a.records) {
        assert_eq!((x.m, x.strategy, x.dof), (y.m, y.strategy, y.dof));
        assert_eq!(x.e2.to_bits(), y.e2.to_bits());
        assert_eq!(x.ea.to_bits(), y.ea.to_bits());
        assert_eq!(x.ea_snap.map(f64::to_bits), y.ea_snap.map(f64::to_bits));
        assert_eq!(x.sum_eta2.to_bits(), y.sum_eta2.to_bits());
        assert_eq!((x.k_marked, x.n_added, x.n_removed), (y.k_marked, y.n_added, y.n_removed));
    }
}

#[test]
fn compare_groups_strategies_and_needs_two_configs() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(dir.path(), "adaptive.max_iterations = 2\n");
    let b = config(dir.path(), "strategy = uniform\nadaptive.max_iterations = 2\n");
    let (path, csv) = cli::compare(&[a.clone(), b], Some(dir.path())).unwrap();
    assert!(path.is_file());
    let labels: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels.len(), 2);
    assert!(cli::compare(std::slice::from_ref(&a), None).is_err());
    let other = RunConfig::parse("grid.nc = 2\ngrid.nf = 8\n", dir.path()).unwrap();
    assert!(cli::compare(&[a, other], None).is_err());
}

#[test]
fn oversampling_diagnostic_reduces_the_trace_constant() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig::parse(
        "grid.nc = 3\ngrid.nf = 8\nkappa.generator = channels\nkappa.contrast = 1e4\n",
        dir.path(),
    )
    .unwrap();
    let (path, d) = cli::diag_eigs(&c, None).unwrap();
    assert!(path.is_file());
    assert_eq!(d.plain.len(), 9);
    // interior block
    assert!(d.oversampled[4] < d.plain[4]);
}

#[test]
fn gen_kappa_writes_loadable_fields() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["k.txt", "k.bin"] {
        let out = dir.path().join(name);
        cli::gen_kappa("inclusions:contrast=100,seed=3,n=16", &out).unwrap();
        let f = PermeabilityField::load(&out).unwrap();
        assert_eq!((f.nx(), f.ny()), (16, 16));
        assert!(f.min() >= 1.0 && f.max() <= 100.0);
    }
}

#[test]
fn binary_runs_and_reports_errors() {
    let bin = env!("CARGO_BIN_EXE_gmsdg");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "grid.nc = 2\ngrid.nf = 4\nstrategy = exact\nadaptive.max_iterations = 2\n").unwrap();
    let out = Command::new(bin)
        .args(["run", cfg.to_str().unwrap()])
        .env("GMSDG_OUT", dir.path().join("o"))
        .env("GMSDG_THREADS", "2")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("o/history.csv").is_file());

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "grid.nc = 2\nnot.a.key = 1\n").unwrap();
    let out = Command::new(bin).args(["run", bad.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
