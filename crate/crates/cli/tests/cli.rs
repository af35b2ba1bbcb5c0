use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn multibc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multibc")).args(args).env_remove("MULTIBC_WORKERS").output().unwrap()
}

fn config(name: &str) -> String {
    root().join("configs").join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_rows(bytes: &[u8]) -> Vec<(String, Option<f64>)> {
    String::from_utf8_lossy(bytes)
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().to_string(), f.next().and_then(|v| v.parse().ok()))
        })
        .collect()
}

fn payload(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !["result.json", "manifest.sha256"].contains(&p.file_name().unwrap().to_str().unwrap()))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn minimal_run_matches_golden_summary() {
    let out = tempfile::tempdir().unwrap();
    let o = multibc(&["run", "--config", &config("minimal-poisson-hit.toml"), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = summary_rows(&o.stdout);
    assert_eq!(fs::read(out.path().join("summary.csv")).unwrap(), o.stdout);
    let want = summary_rows(&fs::read(root().join("configs/golden/minimal-poisson-hit/summary.csv")).unwrap());
    assert_eq!(got.len(), want.len());
    assert!(got.iter().any(|(m, _)| m == "tv"));
    for ((gm, gv), (wm, wv)) in got.iter().zip(&want) {
        assert_eq!(gm, wm);
        match (gv, wv) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{gm}: {a} vs {b}"),
            _ => assert_eq!(gv, wv, "{gm}"),
        }
    }
}

#[test]
fn manifest_lists_every_payload_file() {
    let out = tempfile::tempdir().unwrap();
    let o = multibc(&["run", "--config", &config("minimal-poisson-hit.toml"), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success());
    let manifest = fs::read_to_string(out.path().join("manifest.sha256")).unwrap();
    let names: Vec<&str> = manifest.lines().map(|l| l.split_once("  ").unwrap().1).collect();
    for f in ["summary.csv", "pmf.csv", "records.jsonl", "result.json"] {
        assert!(names.contains(&f), "{f} missing from manifest");
    }
    let rec: serde_json::Value = serde_json::from_slice(&fs::read(out.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(rec["id"], "minimal-poisson-hit");
    assert_eq!(rec["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let cfg = config("minimal-poisson-hit.toml");
    let runs: Vec<_> = [("1", false), ("2", false), ("3", true)]
        .iter()
        .map(|&(w, via_env)| {
            let dir = tempfile::tempdir().unwrap();
            let d = dir.path().to_str().unwrap();
            let o = if via_env {
                Command::new(env!("CARGO_BIN_EXE_multibc")).args(["run", "--config", &cfg, "--out", d]).env("MULTIBC_WORKERS", w).output().unwrap()
            } else {
                multibc(&["--workers", w, "run", "--config", &cfg, "--out", d])
            };
            assert!(o.status.success(), "{}", stderr(&o));
            let p = payload(dir.path());
            (dir, p)
        })
        .collect();
    assert_eq!(runs[0].1, runs[1].1);
    assert_eq!(runs[0].1, runs[2].1);
}

#[test]
fn seed_override_changes_the_draws() {
    let cfg = config("minimal-poisson-hit.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(multibc(&["run", "--config", &cfg, "--out", a.path().to_str().unwrap()]).status.success());
    assert!(multibc(&["run", "--config", &cfg, "--out", b.path().to_str().unwrap(), "--seed-override", "2"]).status.success());
    assert_ne!(fs::read(a.path().join("records.jsonl")).unwrap(), fs::read(b.path().join("records.jsonl")).unwrap());
}

fn broken(body: &str) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    fs::write(&p, body).unwrap();
    let s = p.display().to_string();
    (dir, s)
}

const MINIMAL_BODY: &str = r#"schema_version = 1
id = "t"
seed = 3

[system]
kind = "linear-expanding"
k = 2

[experiment]
kind = "poisson-hit"
center = [0.4]
lambda = 1.0
n = 64
samples = 200
"#;

#[test]
fn missing_seed_is_a_config_error() {
    let (_d, p) = broken(&MINIMAL_BODY.replace("seed = 3\n", ""));
    for args in [vec!["validate", "--config", &p], vec!["run", "--config", &p, "--out", "/nonexistent/never"]] {
        let o = multibc(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    }
}

#[test]
fn unknown_key_is_a_config_error() {
    let (_d, p) = broken(&MINIMAL_BODY.replace("lambda = 1.0", "lambda = 1.0\nlamda = 2.0"));
    let o = multibc(&["validate", "--config", &p]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("lamda") && e.contains("experiment"), "{e}");
}

#[test]
fn wrong_type_names_the_key_path() {
    let (_d, p) = broken(&MINIMAL_BODY.replace("n = 64", "n = \"many\""));
    let o = multibc(&["validate", "--config", &p]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("experiment") && e.contains("many"), "{e}");
}

#[test]
fn missing_config_file_and_zero_workers_exit_2() {
    assert_eq!(multibc(&["validate", "--config", "/nonexistent/c.toml"]).status.code(), Some(2));
    assert_eq!(multibc(&["--workers", "0", "list-experiments"]).status.code(), Some(2));
    assert_eq!(multibc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn run_without_output_dir_exits_2() {
    let (_d, p) = broken(MINIMAL_BODY);
    let o = multibc(&["run", "--config", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("output.dir"));
}

#[test]
fn every_bundled_config_validates() {
    let mut n = 0;
    for e in fs::read_dir(root().join("configs")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let o = multibc(&["validate", "--config", p.to_str().unwrap()]);
            assert!(o.status.success(), "{}: {}", p.display(), stderr(&o));
            n += 1;
        }
    }
    assert!(n >= 10);
}

#[test]
fn list_experiments_prints_every_kind() {
    let o = multibc(&["list-experiments"]);
    assert!(o.status.success());
    let kinds: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(kinds, multibc::experiment::KINDS.map(String::from));
}

#[test]
fn emit_plotdata_projects_pmf_and_rejects_other_kinds() {
    let run = tempfile::tempdir().unwrap();
    let plots = tempfile::tempdir().unwrap();
    let r = run.path().to_str().unwrap();
    assert!(multibc(&["run", "--config", &config("minimal-poisson-hit.toml"), "--out", r]).status.success());
    let o = multibc(&["emit-plotdata", "--results", r, "--kind", "pmf", "--out", plots.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(plots.path().join("pmf.dat")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# experiment minimal-poisson-hit"));
    assert!(lines.next().unwrap().starts_with("# config "));
    assert_eq!(lines.next().unwrap(), "# l empirical predicted");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 3));
    assert!((rows.iter().map(|r| r[1]).sum::<f64>() - 1.0).abs() < 1e-9);

    let o = multibc(&["emit-plotdata", "--results", r, "--kind", "kg-scan", "--out", plots.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = multibc(&["emit-plotdata", "--results", "/nonexistent/run", "--kind", "pmf", "--out", plots.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn stale_temp_files_are_removed() {
    let run = tempfile::tempdir().unwrap();
    let stale = run.path().join(".summary.csv.999.tmp");
    fs::write(&stale, b"partial").unwrap();
    let o = multibc(&["run", "--config", &config("minimal-poisson-hit.toml"), "--out", run.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!stale.exists());
}
