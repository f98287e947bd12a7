use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ringmod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringmod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

fn run_config(json: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json);
    let out = dir.path().join("out");
    let o = ringmod(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (dir, out)
}

fn summary(out: &Path) -> BTreeMap<String, String> {
    let mut r = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].to_string())
        })
        .collect()
}

fn num(s: &BTreeMap<String, String>, key: &str) -> f64 {
    s[key].parse().unwrap()
}

const MODULUS: &str = r#"{"command":"modulus","metric":{"name":"euclidean","dim":2},
  "weight":{"kind":"constant","value":1},"eps":0.5,"eps0":1,"p":2}"#;

#[test]
fn modulus_flat_annulus() {
    let (_d, out) = run_config(MODULUS);
    let s = summary(&out);
    let exact = LN_2 / (2.0 * PI);
    assert!((num(&s, "I") - exact).abs() < 1e-12);
    assert!(num(&s, "gap") <= 1e-3);
    assert_eq!(s["threads"], "2");

    let mut r = csv::Reader::from_path(out.join("shells.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["r", "area", "qnorm_s", "per_shell_infimum_closed", "per_shell_infimum_oracle"]);
    assert_eq!(r.records().count(), 512);

    let profile = fs::read_to_string(out.join("profile.dat")).unwrap();
    assert!(profile.starts_with("# r "));
    assert_eq!(profile.lines().count(), 513);
}

#[test]
fn dilatation_identity_column_is_one() {
    let (_d, out) = run_config(
        r#"{"command":"dilatation","metric":{"name":"euclidean","dim":2},"map":{"kind":"identity"},
            "eps":0.5,"eps0":1,"p":2,"grid":{"radial_panels":4,"angular_nodes":16}}"#,
    );
    let mut r = csv::Reader::from_path(out.join("points.csv")).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "k_p").unwrap();
    let mut rows = 0;
    for rec in r.records() {
        assert_eq!(rec.unwrap()[col].parse::<f64>().unwrap(), 1.0);
        rows += 1;
    }
    assert_eq!(rows, 16 * 16);
    assert_eq!(summary(&out)["finitely_bilipschitz"], "true");
}

#[test]
fn theorem2_diagonal_map() {
    let (_d, out) = run_config(
        r#"{"command":"theorem2","metric":{"name":"euclidean","dim":2},
            "map":{"kind":"linear","matrix":[[2,0],[0,1]]},"eps":0.5,"eps0":1,"p":2,
            "grid":{"radial_panels":16,"angular_nodes":64}}"#,
    );
    let s = summary(&out);
    assert_eq!(s["holds"], "true");
    assert!((num(&s, "rhs") - LN_2 / (4.0 * PI)).abs() < 1e-12);
    assert!((num(&s, "lhs") - 2.0 * LN_2 / (5.0 * PI)).abs() < 1e-6);
}

#[test]
fn boundary_log_weight_diverges() {
    let (_d, out) = run_config(
        r#"{"command":"boundary","metric":{"name":"euclidean","dim":2},
            "weight":{"kind":"expression","expr":"3 * ln(1 / r)"},
            "domain":{"type":"half_space","normal":[0,1],"offset":0},"delta":0.5}"#,
    );
    let s = summary(&out);
    assert_eq!(s["verdict"], "diverges");
    assert_eq!(s["is_o_log"], "true");
    let ladder = fs::read_to_string(out.join("ladder.csv")).unwrap();
    assert!(ladder.starts_with("t,k_norm,partial_integral\n"));
    assert_eq!(ladder.lines().count(), 21);
}

#[test]
fn jensen_seeded_profiles() {
    let (_d, out) = run_config(
        r#"{"command":"jensen","metric":{"name":"euclidean","dim":2},
            "weight":{"kind":"expression","expr":"2 + r"},"eps":0.5,"eps0":1,"p":3,
            "grid":{"radial_panels":16,"angular_nodes":32},"samples":20,"seed":3}"#,
    );
    let s = summary(&out);
    assert_eq!(s["violations"], "0");
    assert_eq!(s["seed"], "3");
    assert!(num(&s, "canonical_rel_gap") < 1e-4);
}

#[test]
fn identical_runs_are_byte_identical() {
    let (_a, first) = run_config(MODULUS);
    let (_b, second) = run_config(MODULUS);
    for name in ["summary.csv", "shells.csv", "profile.dat"] {
        let (x, y) = (fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap());
        assert!(!x.contains(&b'\r'));
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn summary_embeds_resolved_config() {
    let (dir, out) = run_config(MODULUS);
    let s = summary(&out);
    let cfg: serde_json::Value = serde_json::from_str(&s["config"]).unwrap();
    assert_eq!(cfg["grid"]["radial_panels"], 128);
    assert_eq!(cfg["domain"]["type"], "whole");

    // Re-running from the embedded config reproduces the summary.
    let again = write_config(dir.path(), &s["config"]);
    let out2 = dir.path().join("again");
    let o = ringmod(&["--config", again.to_str().unwrap(), "--out", out2.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("summary.csv")).unwrap(), fs::read(out2.join("summary.csv")).unwrap());
}

#[test]
fn output_prefix_is_applied() {
    let (_d, out) = run_config(
        r#"{"command":"dilatation","metric":{"name":"euclidean","dim":2},"map":{"kind":"radial_stretch","k":2},
            "eps":0.5,"eps0":1,"p":2,"grid":{"radial_panels":2,"angular_nodes":8},"output_prefix":"run1_"}"#,
    );
    assert!(out.join("run1_summary.csv").exists());
    assert!(out.join("run1_points.csv").exists());
}

fn expect_error(json: &str, code: &str) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json);
    let o = ringmod(&["--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with(&format!("error[{code}]")), "{err}");
}

#[test]
fn errors_carry_codes() {
    expect_error("{ not json", "CONFIG_PARSE");
    expect_error(
        r#"{"command":"modulus","metric":{"name":"euclidean","dim":2},"weight":{"kind":"constant","value":1},"eps":1,"eps0":0.5,"p":2}"#,
        "INVALID_CONFIG",
    );
    expect_error(
        r#"{"command":"modulus","metric":{"name":"euclidean","dim":3},"weight":{"kind":"constant","value":1},"eps":0.5,"eps0":1,"p":1.5}"#,
        "UNSUPPORTED_EXPONENT",
    );
    expect_error(
        r#"{"command":"modulus","metric":{"name":"euclidean","dim":2},"weight":{"kind":"expression","expr":"x1"},"eps":0.5,"eps0":1,"p":2,
            "grid":{"radial_panels":2,"angular_nodes":8}}"#,
        "FIELD_EVALUATION",
    );

    let o = ringmod(&["--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[IO]"));
    let o = ringmod(&[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_example_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let (_d, out) = run_config(&text);
        let s = summary(&out);
        match s["command"].as_str() {
            "modulus" => assert!(num(&s, "gap") <= 1e-3),
            "jensen" => assert_eq!(s["violations"], "0"),
            "dilatation" => assert_eq!(num(&s, "k_p_max"), 1.0),
            "theorem2" => assert_eq!(s["holds"], "true"),
            "boundary" => assert_eq!(s["verdict"], "diverges"),
            other => panic!("unexpected command {other}"),
        }
        seen += 1;
    }
    assert_eq!(seen, 5);
}
