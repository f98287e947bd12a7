//! Acceptance criteria 1 through 9. Run with `-- --nocapture` to see the
//! PASS/FAIL lines.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ringmod_core::check::{self, CriterionResult};

const SEED: u64 = 20240611;

fn report(r: &CriterionResult, elapsed: Duration, limit: Option<Duration>) {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let ok = r.passed && in_time;
    println!(
        "criterion {} {}: {} [{:.1}s] {}",
        r.id,
        if ok { "PASS" } else { "FAIL" },
        r.title,
        elapsed.as_secs_f64(),
        r.message
    );
    for m in &r.metrics {
        println!("    {} = {:e}", m.name, m.value);
    }
    assert!(r.passed, "criterion {} failed: {}", r.id, r.message);
    assert!(in_time, "criterion {} took {elapsed:?}, limit {limit:?}", r.id);
}

fn timed(limit: Option<u64>, f: impl FnOnce() -> CriterionResult) {
    let t = Instant::now();
    let r = f();
    report(&r, t.elapsed(), limit.map(Duration::from_secs));
}

#[test]
fn criterion_1_sharpness() {
    timed(Some(30), check::criterion_1);
}

#[test]
fn criterion_2_extremal_density() {
    timed(Some(120), check::criterion_2);
}

#[test]
fn criterion_3_averaging() {
    timed(Some(60), || check::criterion_3(SEED));
}

#[test]
fn criterion_4_duality() {
    timed(None, check::criterion_4);
}

#[test]
fn criterion_5_dilatation() {
    timed(None, || check::criterion_5(SEED));
}

#[test]
fn criterion_6_lower_q_homeomorphism() {
    timed(Some(300), check::criterion_6);
}

#[test]
fn criterion_7_round_sphere() {
    timed(None, || check::criterion_7(SEED));
}

#[test]
fn criterion_8_boundary() {
    timed(Some(30), check::criterion_8);
}

fn check_run(out: &Path) {
    let o = Command::new(env!("CARGO_BIN_EXE_ringmod"))
        .args(["--check", "--seed", &SEED.to_string(), "--threads", "2", "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

fn directory_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_9_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    check_run(&a);
    check_run(&b);
    let (x, y) = (directory_bytes(&a), directory_bytes(&b));
    let names: Vec<&str> = x.iter().map(|f| f.0.as_str()).collect();
    let identical = x == y && names == ["check.csv", "summary.csv"];
    println!(
        "criterion 9 {}: --check output directories byte-identical [{:.1}s]",
        if identical { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64()
    );
    assert!(identical, "files {names:?} differ between runs");
}
