use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [[&str; 2]; 12] = [
    ["wiener", "cf"],
    ["wiener", "cm"],
    ["wiener", "malliavin"],
    ["chaos", "commutators"],
    ["chaos", "bridge"],
    ["gauss", "fourier"],
    ["gauss", "covariance"],
    ["sdyson", "verify"],
    ["sdyson", "mu"],
    ["geom", "riemann"],
    ["geom", "symplectic"],
    ["geom", "algebra"],
];

fn volforms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volforms"))
        .args(args)
        .env_remove("VOLFORMS_SEED")
        .output()
        .unwrap()
}

fn reports(dir: &Path) -> BTreeMap<String, serde_json::Value> {
    fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            if p.extension()? != "json" {
                return None;
            }
            let mut v: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
            v.as_object_mut().unwrap().remove("timestamp");
            Some((p.file_stem().unwrap().to_string_lossy().into_owned(), v))
        })
        .collect()
}

#[test]
fn all_is_the_union_of_the_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let whole = tmp.path().join("all");
    let parts = tmp.path().join("parts");
    let common = ["--seed", "7", "--n-samples", "4000", "--grid-n", "128"];

    let mut args = vec!["all"];
    args.extend(common);
    args.extend(["--output", whole.to_str().unwrap()]);
    let out = volforms(&args);
    assert!(
        out.status.code().unwrap() <= 1,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    for sub in SUBCOMMANDS {
        let mut args = sub.to_vec();
        args.extend(common);
        args.extend(["--output", parts.to_str().unwrap()]);
        let out = volforms(&args);
        assert!(
            out.status.code().unwrap() <= 1,
            "{sub:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let (a, b) = (reports(&whole), reports(&parts));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert_eq!(v, &b[k], "{k}");
    }
    assert!(a.len() >= 12);
}

#[test]
fn reports_carry_the_schema_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let out = volforms(&[
        "gauss",
        "fourier",
        "--Q",
        "2",
        "--s",
        "i",
        "--xprime",
        "1",
        "--output",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = reports(tmp.path());
    let v = &r["gaussian.fourier.si"];
    for key in ["identity", "equation", "lhs", "rhs", "discrepancy", "pass"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["pass"], true);
    let raw = fs::read_to_string(tmp.path().join("gaussian.fourier.si.json")).unwrap();
    assert!(raw.contains("\"timestamp\""));
}

#[test]
fn bad_input_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().to_str().unwrap();
    for args in [
        vec!["gauss", "covariance", "--Q", "1,2;3", "--output", o],
        vec!["gauss", "covariance", "--Q", "1,0;0,-1", "--output", o],
        vec!["sdyson", "verify", "--action", "phi1^0.5", "--output", o],
        vec!["geom", "riemann", "--manifold", "torus9", "--output", o],
        vec!["wiener", "cf", "--grid-n", "0", "--output", o],
        vec!["frobnicate"],
    ] {
        assert_eq!(volforms(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn failing_identity_exits_with_one() {
    // A threshold of 1e-9 sigma cannot be met by a Monte Carlo estimate.
    let tmp = tempfile::tempdir().unwrap();
    let out = volforms(&[
        "wiener",
        "cf",
        "--sigma-threshold",
        "1e-9",
        "--n-samples",
        "1000",
        "--output",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        reports(tmp.path())["wiener.characteristic_functional"]["pass"],
        false
    );
}

#[test]
fn seed_precedence_is_flag_then_config_then_env() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 11, "n_samples": 500}"#).unwrap();
    let seed_of = |args: &[&str], env: Option<&str>| {
        let out_dir = tmp.path().join("out");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_volforms"));
        cmd.args(["wiener", "cf", "--output", out_dir.to_str().unwrap()])
            .args(args)
            .env_remove("VOLFORMS_SEED");
        if let Some(e) = env {
            cmd.env("VOLFORMS_SEED", e);
        }
        let out = cmd.output().unwrap();
        assert!(
            out.status.code().unwrap() <= 1,
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        reports(&out_dir)["wiener.characteristic_functional"]["seed"]
            .as_u64()
            .unwrap()
    };
    let c = cfg.to_str().unwrap();
    assert_eq!(seed_of(&["--n-samples", "500"], None), 0);
    assert_eq!(seed_of(&["--n-samples", "500"], Some("5")), 5);
    assert_eq!(seed_of(&["--config", c], Some("5")), 11);
    assert_eq!(seed_of(&["--config", c, "--seed", "3"], Some("5")), 3);
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"sed": 1}"#).unwrap();
    let out = volforms(&[
        "wiener",
        "cf",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sed"));
}

#[test]
fn dump_paths_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = volforms(&[
        "wiener",
        "cf",
        "--n-samples",
        "100",
        "--grid-n",
        "16",
        "--dump-paths",
        "3",
        "--output",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.code().unwrap() <= 1);
    let dir = tmp
        .path()
        .join("paths")
        .join("wiener.characteristic_functional");
    let files: Vec<_> = fs::read_dir(&dir).unwrap().collect();
    assert_eq!(files.len(), 3);
    let text = fs::read_to_string(dir.join("path_0000.csv")).unwrap();
    assert_eq!(
        text.lines().filter(|l| !l.is_empty()).count(),
        17 + usize::from(text.starts_with('t'))
    );
}
