//! Acceptance suite: runs every verification criterion at its stated
//! tolerance and prints one pass/fail line per criterion.

use exitlaw::acceptance::run_suite;
use std::collections::BTreeMap;
use std::path::Path;

#[test]
fn acceptance_criteria() {
    let results = run_suite(42, None).expect("suite must run to completion");
    assert_eq!(results.len(), 11);
    for r in &results {
        println!("{}", r.line());
    }
    let failing: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.line())
        .collect();
    assert!(
        failing.is_empty(),
        "failing criteria:\n{}",
        failing.join("\n")
    );
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir readable") {
        let path = entry.expect("dir entry").path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, std::fs::read(&path).expect("csv readable"));
        }
    }
    out
}

#[test]
fn check_subcommand_twice_gives_identical_tables() {
    let exe = env!("CARGO_BIN_EXE_exitlaw");
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        let output = std::process::Command::new(exe)
            .args(["check", "--seed", "42", "--out"])
            .arg(dir)
            .output()
            .expect("check subcommand runs");
        assert!(
            output.status.success(),
            "check failed:\n{}",
            String::from_utf8_lossy(&output.stdout)
        );
    }
    let a = csv_bytes(dir_a.path());
    let b = csv_bytes(dir_b.path());
    assert!(a.len() >= 7, "expected tables for every preset, got {}", a.len());
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "table sets differ"
    );
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "table {name} differs between runs");
    }
}
