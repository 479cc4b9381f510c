use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mclab"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mclab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn error_json(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap()
}

const ANNULUS: &str = r#"{
  "domain": {"kind": "concentric_annulus", "R_I": 1.0, "R_E": 2.0, "n": 2},
  "source": {"kind": "constant", "H": -0.5},
  "solver": {"h": 0.05},
  "directions": [0.0, 1.5707963267948966]
}"#;

#[test]
fn malformed_config_exits_2_and_names_the_key() {
    let d = scratch("malformed");
    let cases = [
        (ANNULUS.replace(r#""h": 0.05"#, r#""h": 0.05, "smoothing": 2"#), "solver.smoothing"),
        (ANNULUS.replace(r#""h": 0.05"#, r#""h": 0"#), "solver.h"),
        (ANNULUS.replace(r#""R_I": 1.0"#, r#""R_I": 3.0"#), "domain"),
        (ANNULUS.replace(r#""n": 2}"#, r#""n": 2, "R": 1}"#), "domain.R"),
        (ANNULUS.replace(r#""H": -0.5"#, r#""H": -0.5, "b": 1"#), "source.b"),
    ];
    for (text, key) in cases {
        let out = d.join(key);
        let cfg = write_config(&d, &text);
        let o = run(&["solve"], Some(&cfg), &out);
        assert_eq!(o.status.code(), Some(2), "{key}");
        let e = error_json(&out);
        assert_eq!(e["error"], "Config");
        assert_eq!(e["key"], key);
        assert_eq!(e["exit_code"], 2);
    }
    let o = run(&["solve"], Some(&d.join("nope.json")), &d.join("missing"));
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["explode"], None, &d.join("bad-cmd"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_usage_and_domain_mismatch() {
    let d = scratch("verify-usage");
    let cfg = write_config(&d, ANNULUS);
    let o = run(&["verify"], Some(&cfg), &d.join("a"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&d.join("a"))["key"], "suite");
    let o = run(&["verify", "--suite", "T3.1"], Some(&cfg), &d.join("b"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&d.join("b"))["key"], "domain");
    let o = run(&["verify", "--suite", "X1"], Some(&cfg), &d.join("c"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&d.join("c"))["key"], "suite");
}

#[test]
fn runs_are_byte_identical() {
    let d = scratch("determinism");
    let cfg = write_config(&d, ANNULUS);
    let (a, b) = (d.join("a"), d.join("b"));
    for out in [&a, &b] {
        let o = run(&["nodal"], Some(&cfg), out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for n in ["scenario.json", "solve.json", "solution.csv", "mesh.txt", "critical.json", "branches.json", "nodal_00.csv", "nodal_01.csv"] {
        assert!(names.iter().any(|x| x == n), "{n} missing from {names:?}");
    }
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn oracle_emits_profile_and_summary() {
    let d = scratch("oracle");
    let cfg = write_config(&d, ANNULUS);
    let out = d.join("o");
    let o = run(&["oracle"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(csv.starts_with("r,u,du\n"));
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.first().unwrap()[0], 1.0);
    assert_eq!(rows.last().unwrap()[0], 2.0);
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    let c = s["c"].as_f64().unwrap();
    let r = s["r_star"].as_f64().unwrap();
    assert!((r - (-2.0 * c / -0.5).sqrt()).abs() < 1e-10);
    // u' changes sign at r*
    let i = rows.iter().position(|row| row[0] > r).unwrap();
    assert!(rows[i - 1][2] > 0.0 && rows[i][2] < 0.0);

    let ellipse = r#"{"domain": {"kind": "ellipse", "a": 1.5, "b": 1.0},
        "source": {"kind": "constant", "H": -1.0}, "solver": {"h": 0.05}}"#;
    let cfg = write_config(&d, ellipse);
    let o = run(&["oracle"], Some(&cfg), &d.join("e"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&d.join("e"))["key"], "domain");
}

#[test]
fn degenerate_field_is_flagged_and_refused() {
    let d = scratch("degenerate");
    let cfg = write_config(&d, &ANNULUS.replace("-0.5", "0.0"));
    let o = run(&["solve"], Some(&cfg), &d.join("s"));
    assert_eq!(o.status.code(), Some(0));
    let s: Value = serde_json::from_str(&fs::read_to_string(d.join("s/solve.json")).unwrap()).unwrap();
    assert_eq!(s["report"]["degenerate"], true);
    for cmd in ["critical", "nodal", "flow"] {
        let out = d.join(cmd);
        let o = run(&[cmd], Some(&cfg), &out);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        assert_eq!(error_json(&out)["error"], "DegenerateField", "{cmd}");
    }
}

#[test]
fn figures_need_their_artifacts() {
    let d = scratch("figures");
    let empty = d.join("empty");
    let o = run(&["figure", "--fig", "fig1"], None, &empty);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&empty);
    assert_eq!(e["error"], "MissingArtifacts");
    assert!(e["missing"].as_array().unwrap().iter().any(|m| m == "nodal_00.csv"));

    let cfg = write_config(&d, ANNULUS);
    let out = d.join("run");
    assert_eq!(run(&["nodal"], Some(&cfg), &out).status.code(), Some(0));
    for fig in ["fig1", "fig2", "fig3", "fig4", "fig5"] {
        let o = run(&["figure", "--fig", fig], None, &out);
        assert_eq!(o.status.code(), Some(0), "{fig}");
        let svg = fs::read_to_string(out.join(format!("{fig}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    let svg = fs::read_to_string(out.join("fig1.svg")).unwrap();
    // two branch points for θ = (1, 0)
    assert_eq!(svg.matches(r#"fill="seagreen""#).count(), 2);
    assert!(svg.contains("γ_I") && svg.contains("γ_E"));
}
