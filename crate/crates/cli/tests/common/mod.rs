#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::Rng;
use rand_distr::StandardNormal;
use resilience_core::SeedRecord;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resilience"))
}

/// Run the binary; returns (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn run_ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = run(args);
    assert_eq!(code, 0, "{args:?} failed: {stderr}");
    stdout
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Study A / Study B rows written as CSV text.
pub fn study_a_csv(rows: &[(u8, f64, f64)]) -> String {
    let mut s = String::from("group,s,y\n");
    for (g, x, y) in rows {
        s.push_str(&format!("{g},{x},{y}\n"));
    }
    s
}

pub fn study_b_csv(rows: &[(u8, f64)]) -> String {
    let mut s = String::from("group,s\n");
    for (g, x) in rows {
        s.push_str(&format!("{g},{x}\n"));
    }
    s
}

/// Synthetic stand-in for the trial application: 412/418 Study A and
/// 176/176 Study B, surrogate in units of 100 cells, modest positive effect.
pub fn application_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = SeedRecord::root(412_418).stream();
    let mut z = || -> f64 { rng.sample(StandardNormal) };
    let mut a = Vec::new();
    for (g, n) in [(0u8, 412), (1, 418)] {
        for _ in 0..n {
            let s = 0.6 + 0.5 * g as f64 + z();
            let y = 0.4 * s + 0.25 * g as f64 - 0.05 * s * s + 0.6 * z();
            a.push((g, s, y));
        }
    }
    let mut b = Vec::new();
    for g in [0u8, 1] {
        for _ in 0..176 {
            b.push((g, 0.5 + 0.6 * g as f64 + 0.9 * z()));
        }
    }
    (
        write(dir, "study_a.csv", &study_a_csv(&a)),
        write(dir, "study_b.csv", &study_b_csv(&b)),
    )
}

/// Every file of a directory except timing.json, by name.
pub fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "timing.json")
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

/// CSV body of an artifact without the digest comment line.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

pub fn report_schema_valid(report: &serde_json::Value) -> Result<(), String> {
    let schema: serde_json::Value = serde_json::from_str(resilience_cli::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator
        .iter_errors(report)
        .map(|e| e.to_string())
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}
