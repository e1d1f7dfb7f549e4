use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use distcache::io::{load_trace, TraceShape};
use distcache::Topology;

fn distcache(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distcache"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("small.toml");
    let text = format!(
        "{extra}\n[synthetic]\nn_files = 30\nn_slots = 30\nrequests_per_slot = 300\n\n[sim.window]\ntau = 4\ntau1 = 2\ntau2 = 2\n"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn generate_is_deterministic_and_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 4");
    let cfg = cfg.to_str().unwrap();
    assert!(distcache(&["generate", "--config", cfg, "--out", "a"], dir.path()).status.success());
    assert!(distcache(&["generate", "--config", cfg, "--out", "b"], dir.path()).status.success());
    for name in ["catalog.csv", "trace.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(name)).unwrap(),
            std::fs::read(dir.path().join("b").join(name)).unwrap()
        );
    }
    let shape = TraceShape {
        topology: Topology::five_ring(),
        n_slots: Some(30),
        cache_fraction: 0.1,
    };
    let (catalog, trace) = load_trace(&dir.path().join("a/catalog.csv"), &dir.path().join("a/trace.csv"), &shape).unwrap();
    assert_eq!(catalog.n_files(), 30);
    assert_eq!(trace.n_sbs(), 5);
}

#[test]
fn run_writes_tables_and_plots_under_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = distcache(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "res",
            "--policies",
            "lrfu",
            "--cache-fracs",
            "0.2",
            "--lambda-sweep",
            "0.5,1,2,4,8",
            "--threads",
            "2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let comparison = std::fs::read_to_string(dir.path().join("res/comparison.csv")).unwrap();
    let rows: Vec<&str> = comparison.lines().skip(1).collect();
    // five sBSs plus the summed row, all for the one (policy, cache) point
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.starts_with("lrfu,0.2,")));
    assert!(rows[5].starts_with("lrfu,0.2,sum,"));

    let sweep = std::fs::read_to_string(dir.path().join("res/lambda_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 5);

    let plot = std::fs::read_to_string(dir.path().join("res/plots/hit_sum.svg")).unwrap();
    assert!(plot.lines().any(|l| l.trim() == "lrfu"));
    assert!(dir.path().join("res/plots/lambda_sweep.svg").exists());

    // Nothing outside the output directory besides the config we wrote.
    let all = files_under(dir.path());
    assert!(all.iter().all(|p| p.starts_with(dir.path().join("res")) || p == &cfg), "{all:?}");
    assert!(!all.iter().any(|p| p.extension().is_some_and(|e| e == "tmp")));
}

#[test]
fn effective_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 11\npolicies = [\"proposed\", \"federated\"]\ncache_fracs = [0.3]\nlambda_sweep = [2.0]\nplots = false");
    assert!(distcache(&["run", "--config", cfg.to_str().unwrap(), "--out", "first"], dir.path()).status.success());
    let effective = dir.path().join("first/config.toml");
    // The effective config names `first` as its output; redirect it.
    assert!(distcache(&["run", "--config", effective.to_str().unwrap(), "--out", "second"], dir.path()).status.success());
    let a = files_under(&dir.path().join("first"));
    let b = files_under(&dir.path().join("second"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        if x.file_name().unwrap() == "config.toml" {
            continue;
        }
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn validation_errors_name_the_field_and_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cache_fracs = [1.5]");
    let out = distcache(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cache_fracs"));

    let out = distcache(&["run", "--policies", "best"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn validate_passes_on_a_fresh_checkout() {
    let dir = tempfile::tempdir().unwrap();
    let out = distcache(&["validate", "--instances", "50", "--windows", "100"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

#[test]
fn import_movielens_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ratings.dat"), "1::5::4::10\n2::5::3::20\n3::9::5::30\n").unwrap();
    let out = distcache(&["import-movielens", "ratings.dat", "--slots", "3", "--topology", "ring:3", "--out", "ml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("ml/trace.csv")).unwrap();
    assert_eq!(trace, "slot,sbs,file,demand\n0,1,0,1\n1,2,0,1\n2,0,1,1\n");
}
