use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isl_core::bound::audit;
use isl_core::output::{read_decision, read_recorded_eta};
use isl_core::scenario::load_scenario;
use isl_core::Scenario;

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference.toml")
}

fn isl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isl")).args(args).output().expect("binary runs")
}

fn run(algo: &str, out: &Path) -> Output {
    let cfg = reference();
    isl(&["run", "--config", cfg.to_str().unwrap(), "--algo", algo, "--out", out.to_str().unwrap()])
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[i].parse().unwrap()).collect()
}

const CSVS: [&str; 4] = ["trajectory.csv", "allocation.csv", "power.csv", "iterations.csv"];

#[test]
fn run_writes_all_files_with_descending_eta() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("proposed", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in CSVS.iter().chain(&["report.json"]) {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let eta = column(&dir.path().join("iterations.csv"), "eta");
    assert!(eta.len() >= 2);
    assert!(eta.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{eta:?}");
}

#[test]
fn throughput_baseline_is_not_better() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("proposed", &dir.path().join("p")).status.success());
    assert!(run("tmax", &dir.path().join("t")).status.success());
    let (p, _) = read_recorded_eta(&dir.path().join("p")).unwrap();
    let (t, _) = read_recorded_eta(&dir.path().join("t")).unwrap();
    assert!(t >= p - 1e-6, "tmax {t} < proposed {p}");
}

#[test]
fn identical_runs_give_identical_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("proposed", &dir.path().join("a")).status.success());
    assert!(run("proposed", &dir.path().join("b")).status.success());
    for f in CSVS {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn files_reproduce_the_recorded_eta() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("constp", dir.path()).status.success());
    let sc = Scenario::new(load_scenario(reference()).unwrap());
    let dec = read_decision(dir.path(), &sc).unwrap();
    let a = audit(&sc, &dec, true);
    let (eta, eta_exact) = read_recorded_eta(dir.path()).unwrap();
    assert!(a.feasible, "{:?}", a.violated());
    assert!((a.eta - eta).abs() <= 1e-9);
    assert!((a.eta_exact - eta_exact).abs() <= 1e-9);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(reference()).unwrap().replace("rcs_m2", "rcs_sqm");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = isl(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rcs_sqm"));
}

#[test]
fn infeasible_threshold_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(reference())
        .unwrap()
        .replace("sensing_threshold = 1.4775007564436097e-3", "sensing_threshold = 1e12");
    let cfg = dir.path().join("hard.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = isl(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radar"));
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("proposed", &dir.path().join("run")).status.success());
    let cfg = reference();
    let out = isl(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("sweep").to_str().unwrap(),
        "--param",
        "T",
        "--values",
        "40",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in CSVS {
        let a = std::fs::read(dir.path().join("run").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("sweep").join("T=40").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let eta = column(&dir.path().join("sweep").join("sweep.csv"), "eta_final");
    let (recorded, _) = read_recorded_eta(&dir.path().join("run")).unwrap();
    let last = column(&dir.path().join("run").join("iterations.csv"), "eta");
    assert_eq!(eta.len(), 1);
    assert_eq!(eta[0], *last.last().unwrap());
    assert!(recorded > 0.0);
}

#[test]
fn sweep_with_a_failing_value_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference();
    let out = isl(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--param",
        "gamma_th",
        "--values",
        "1e12,1e-3",
    ]);
    assert_eq!(out.status.code(), Some(7));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().contains(",ok,"));
}

#[test]
fn fit_reads_pairs_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.csv");
    let mut text = String::from("count,error\n");
    for c in [100.0, 200.0, 400.0, 800.0, 1600.0] {
        text += &format!("{c},{}\n", 0.82 * f64::powf(c, -0.22));
    }
    std::fs::write(&path, text).unwrap();
    let out = isl(&["fit", "--pairs", path.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let value =
        |key: &str| -> f64 { stdout.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim().parse().unwrap() };
    assert!((value("a = ") - 0.82).abs() < 1e-9);
    assert!((value("b = ") - 0.22).abs() < 1e-9);

    std::fs::write(&path, "10,0.5\n10,0.4\n").unwrap();
    let out = isl(&["fit", "--pairs", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn unknown_algorithm_is_a_usage_error() {
    let out = isl(&["run", "--config", "x", "--algo", "greedy", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}
