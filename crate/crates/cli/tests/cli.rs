use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn config() -> String {
    corpus().join("sources_sinks.conf").display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iccflow")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &str) -> String {
    corpus().join(p).display().to_string()
}

#[test]
fn analyze_motivating() {
    let o = run(&["analyze", &path("motivating"), "--config", &config()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("2 tainted path(s)\n"), "{out}");
    assert!(out.contains("@src1") && out.contains("@sink2"));
}

#[test]
fn analyze_tsv_format() {
    let o = run(&["analyze", &path("three_apps"), "--config", &config(), "--format", "tsv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3, "{out}");
    let classes: Vec<&str> = out.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(classes, ["icc", "icc", "iac"]);
    assert!(out.lines().all(|l| l.split('\t').count() == 5));
}

#[test]
fn output_does_not_depend_on_jobs() {
    for dir in ["three_apps", "droidbench/15-icc-bindService4", "droidbench/21-iac-startActivity1"] {
        let a = run(&["analyze", &path(dir), "--config", &config(), "--jobs", "1"]);
        let b = run(&["analyze", &path(dir), "--config", &config(), "--jobs", "8"]);
        assert_eq!(a.stdout, b.stdout, "{dir}");
    }
    let a = run(&["bench", &path("droidbench"), "--config", &config(), "--jobs", "1"]);
    let b = run(&["bench", &path("droidbench"), "--config", &config(), "--jobs", "6"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bench_prints_the_table() {
    let o = run(&["bench", &path("droidbench"), "--config", &config()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for needle in ["95.0%", "82.6%", "0.88", "startActivity4", "⊛"] {
        assert!(out.contains(needle), "missing {needle}\n{out}");
    }
}

#[test]
fn zero_max_len_is_a_usage_error() {
    let o = run(&["combine", &path("three_apps"), "--max-len", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diagnostics_make_the_exit_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("broken.cir");
    std::fs::write(&f, "app \"B\" {\n  component activity M {\n    method onCreate() {\n      x = source\n    }\n  }\n}\n").unwrap();
    let o = run(&["check", &f.display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("broken.cir") && err.contains(":4"), "{err}");

    let good = run(&["check", &path("motivating"), &path("three_apps")]);
    assert_eq!(good.status.code(), Some(0));
    assert_eq!(stdout(&good), "4 app(s) checked\n");
}

#[test]
fn missing_inputs_fail_cleanly() {
    let o = run(&["analyze", &path("motivating"), "--config", "/nonexistent/conf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = run(&["analyze", "/nonexistent/corpus", "--config", &config()]);
    assert_eq!(o.status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["bench", &tmp.path().display().to_string(), "--config", &config()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn link_database_is_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("links.db").display().to_string();
    let first = stdout(&run(&["links", &path("three_apps"), "--db", &db]));
    assert!(first.contains("# App1: Added"), "{first}");
    let second = stdout(&run(&["links", &path("three_apps"), "--db", &db]));
    assert!(second.contains("# App1: Unchanged"), "{second}");
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(strip(&first), strip(&second));
    assert_eq!(strip(&first).len(), 3);
}

#[test]
fn combine_prints_the_plan() {
    let out = stdout(&run(&["combine", &path("three_apps")]));
    let mut lines: Vec<&str> = out.lines().collect();
    lines.sort();
    assert_eq!(lines, ["App1 App2", "App3"]);
    let one = stdout(&run(&["combine", &path("three_apps"), "--max-len", "1"]));
    assert_eq!(one.lines().count(), 3);
}

#[test]
fn instrument_writes_one_file_per_set() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["instrument", &path("three_apps"), "-o", &tmp.path().display().to_string()]);
    assert_eq!(o.status.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["App1+App2.cir", "App3.cir"]);
    let text = std::fs::read_to_string(tmp.path().join("App1+App2.cir")).unwrap();
    assert!(text.contains("IpcSC") && text.contains("dummyMain"));
    let check = run(&["check", &tmp.path().join("App3.cir").display().to_string()]);
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stderr));
}
