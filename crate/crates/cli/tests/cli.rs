use std::path::{Path, PathBuf};
use std::process::Command;

use isserlis::gaussian::{CholeskyFactor, CovarianceMatrix};
use isserlis::tensor::DenseTensor;
use isserlis_cli::{run, Outcome, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION};
use serde_json::{json, Value};
use tempfile::TempDir;

fn cli(args: &[&str]) -> Outcome {
    run(std::iter::once("isserlis").chain(args.iter().copied()))
}

fn ok_json(args: &[&str]) -> Value {
    let out = cli(args);
    assert_eq!(out.code, EXIT_OK, "{args:?}: {}", out.stderr);
    assert!(out.stderr.is_empty());
    serde_json::from_str(&out.stdout).unwrap()
}

fn error_kind(out: &Outcome) -> String {
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&out.stderr).expect("stderr is JSON");
    assert!(v["error"]["message"].is_string());
    v["error"]["kind"].as_str().unwrap().to_owned()
}

fn write(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, value.to_string()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pairings_count_of_four() {
    assert_eq!(ok_json(&["pairings", "--n", "4", "--count-only"]), json!({"count": 3}));
}

#[test]
fn pairings_listing_is_canonical_and_one_based() {
    let v = ok_json(&["pairings", "--n", "4"]);
    assert_eq!(
        v,
        json!({"n": 4, "count": 3, "pairings": [[[1,2],[3,4]], [[1,3],[2,4]], [[1,4],[2,3]]]})
    );
    let v = ok_json(&["pairings", "--n", "6", "--limit", "2"]);
    assert_eq!(v["count"], 15);
    assert_eq!(v["pairings"].as_array().unwrap().len(), 2);
}

#[test]
fn pairings_large_count_is_exact() {
    let out = cli(&["pairings", "--n", "60", "--count-only"]);
    assert_eq!(
        out.stdout.trim(),
        r#"{"count":29215606371473169285018060091249259296875}"#
    );
}

#[test]
fn pairings_guard_rail() {
    let out = cli(&["pairings", "--n", "22"]);
    assert_eq!(out.code, EXIT_VALIDATION);
    assert_eq!(error_kind(&out), "validation");
    let v = ok_json(&["pairings", "--n", "22", "--limit", "1"]);
    assert_eq!(v["pairings"][0][10], json!([21, 22]));
}

#[test]
fn moment_of_standard_normal() {
    let dir = TempDir::new().unwrap();
    let sigma = write(&dir, "s.json", &json!({"dim": 1, "sigma": [[1.0]]}));
    let v = ok_json(&["moment", "--sigma", s(&sigma), "--indices", "1,1,1,1,1,1"]);
    assert_eq!(v["value"], 15.0);
    assert_eq!(v["provenance"], "analytic");
    assert_eq!(v["samples"], Value::Null);
    assert_eq!(v["stderr"], Value::Null);
}

#[test]
fn moment_with_repeated_indices() {
    let dir = TempDir::new().unwrap();
    let sigma = write(&dir, "s.json", &json!({"dim": 2, "sigma": [[1.0, 0.5], [0.5, 2.0]]}));
    let v = ok_json(&["moment", "--sigma", s(&sigma), "--indices", "1,1,2,2"]);
    assert!((v["value"].as_f64().unwrap() - 2.5).abs() < 1e-15);
}

#[test]
fn vecmoment_matches_gram_formula() {
    let dir = TempDir::new().unwrap();
    let sigma = write(&dir, "s.json", &json!({"dim": 2, "sigma": [[1.0, 0.0], [0.0, 1.0]]}));
    let vectors = write(&dir, "v.json", &json!({"vectors": [[1,1],[1,1],[1,-1],[1,-1]]}));
    let v = ok_json(&["vecmoment", "--sigma", s(&sigma), "--vectors", s(&vectors)]);
    // <a,a><b,b> + 2<a,b>^2 with <a,b> = 0
    assert_eq!(v["value"], 4.0);
}

#[test]
fn expand_outputs() {
    assert_eq!(ok_json(&["expand", "--n", "3"]), json!({"expansion": "0"}));
    assert_eq!(
        ok_json(&["expand", "--n", "4"]),
        json!({"expansion": "E(Y1 Y2)E(Y3 Y4) + E(Y1 Y3)E(Y2 Y4) + E(Y1 Y4)E(Y2 Y3)"})
    );
    assert_eq!(
        ok_json(&["expand", "--n", "2", "--names", "X,Z"]),
        json!({"expansion": "E(X Z)"})
    );
    let v = ok_json(&["expand", "--n", "2", "--format", "latex"]);
    assert_eq!(v["expansion"], r"\mathsf{E}(Y_{1} Y_{2})");
    let out = cli(&["expand", "--n", "4", "--names", "a,b"]);
    assert_eq!(out.code, EXIT_VALIDATION);
    assert_eq!(error_kind(&out), "validation");
}

#[test]
fn validation_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let sigma = write(&dir, "s.json", &json!({"dim": 2, "sigma": [[1.0, 0.0], [0.0, 1.0]]}));
    let bad_psd = write(&dir, "b.json", &json!({"dim": 2, "sigma": [[1.0, 2.0], [2.0, 1.0]]}));
    let ragged = write(&dir, "r.json", &json!({"dim": 2, "sigma": [[1.0, 0.0], [0.0]]}));
    let malformed = dir.path().join("m.json");
    std::fs::write(&malformed, "{\"dim\": 2, ").unwrap();
    let short = write(&dir, "v.json", &json!({"vectors": [[1.0]]}));

    let cases: Vec<Vec<&str>> = vec![
        vec!["moment", "--sigma", s(&sigma), "--indices", "1,3"],
        vec!["moment", "--sigma", s(&sigma), "--indices", "0,1"],
        vec!["moment", "--sigma", s(&sigma), "--indices", "1,x"],
        vec!["moment", "--sigma", s(&bad_psd), "--indices", "1,2"],
        vec!["moment", "--sigma", s(&ragged), "--indices", "1,2"],
        vec!["moment", "--sigma", s(&malformed), "--indices", "1,2"],
        vec!["vecmoment", "--sigma", s(&sigma), "--vectors", s(&short)],
        vec!["ck", "--dist", "cube:1", "--dim", "3", "--k", "2", "--samples", "5000", "--seed", "1"],
        vec!["ck", "--dist", "std-gaussian", "--dim", "3", "--k", "0", "--samples", "5000", "--seed", "1"],
        vec!["ck", "--dist", "std-gaussian", "--dim", "2", "--k", "1", "--samples", "5000", "--seed", "1", "--direction", "0,0"],
        vec!["isotropy", "--dist", "sphere:-1", "--dim", "3", "--samples", "5000", "--seed", "1"],
    ];
    for args in cases {
        let out = cli(&args);
        assert_eq!(out.code, EXIT_VALIDATION, "{args:?}: {out:?}");
        assert_eq!(error_kind(&out), "validation", "{args:?}");
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["bogus"],
        vec!["pairings"],
        vec!["moment", "--indices", "1"],
        vec!["ck", "--dist", "std-gaussian", "--dim", "3", "--k", "2", "--samples", "10"],
        vec!["--threads", "0", "pairings", "--n", "2"],
    ] {
        let out = cli(&args);
        assert_eq!(out.code, EXIT_VALIDATION, "{args:?}");
        assert_eq!(error_kind(&out), "usage", "{args:?}");
    }
}

#[test]
fn numerical_failure_exits_three() {
    let out = cli(&["ck", "--dist", "sphere:0", "--dim", "3", "--k", "2", "--samples", "5000", "--seed", "1"]);
    assert_eq!(out.code, EXIT_NUMERICAL);
    assert_eq!(error_kind(&out), "numerical");
}

#[test]
fn factor_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let sigma = write(&dir, "s.json", &json!({"dim": 2, "sigma": [[4.0, 2.0], [2.0, 2.0]]}));
    let out = cli(&["factor", "--sigma", s(&sigma)]);
    assert_eq!(out.code, EXIT_OK);
    assert_eq!(out.stdout.trim(), r#"{"dim":2,"factor":[[2.0,0.0],[1.0,1.0]]}"#);

    let parsed: CholeskyFactor = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(serde_json::to_string(&parsed).unwrap(), out.stdout.trim());

    let factor = dir.path().join("a.json");
    std::fs::write(&factor, &out.stdout).unwrap();
    let tensor =
        DenseTensor::from_fn(4, 2, |idx| idx.iter().map(|&i| i as f64 + 0.5).product()).unwrap();
    let tensor_path = dir.path().join("t.json");
    std::fs::write(&tensor_path, serde_json::to_string(&tensor).unwrap()).unwrap();
    let reparsed: DenseTensor =
        serde_json::from_str(&std::fs::read_to_string(&tensor_path).unwrap()).unwrap();
    assert_eq!(reparsed, tensor);

    let via_sigma = ok_json(&["tensor-expect", "--tensor", s(&tensor_path), "--sigma", s(&sigma)]);
    for method in ["pairings", "contraction"] {
        let via_factor = ok_json(&[
            "tensor-expect", "--tensor", s(&tensor_path), "--factor", s(&factor), "--method", method,
        ]);
        let (a, b) = (via_sigma["value"].as_f64().unwrap(), via_factor["value"].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-10 * a.abs(), "{method}: {a} vs {b}");
    }
}

#[test]
fn sigma_file_round_trip() {
    let sigma = CovarianceMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
    let text = serde_json::to_string(&sigma).unwrap();
    let parsed: CovarianceMatrix = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&parsed).unwrap(), text);
}

#[test]
fn tensor_expect_methods() {
    let dir = TempDir::new().unwrap();
    let sigma = write(&dir, "s.json", &json!({"dim": 1, "sigma": [[1.0]]}));
    let ones = write(&dir, "t.json", &json!({"order": 4, "dim": 1, "entries": [1.0]}));
    for method in ["pairings", "contraction"] {
        let v = ok_json(&["tensor-expect", "--tensor", s(&ones), "--sigma", s(&sigma), "--method", method]);
        assert_eq!(v["value"], 3.0);
    }
    let v = ok_json(&[
        "tensor-expect", "--tensor", s(&ones), "--sigma", s(&sigma), "--method", "mc", "--seed", "9",
        "--samples", "200000",
    ]);
    assert_eq!(v["provenance"], "monte-carlo");
    assert_eq!(v["samples"], 200000);
    let (value, se) = (v["value"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((value - 3.0).abs() < 5.0 * se);

    let out = cli(&["tensor-expect", "--tensor", s(&ones), "--sigma", s(&sigma), "--method", "mc"]);
    assert_eq!(out.code, EXIT_VALIDATION);

    let wrong_dim = write(&dir, "w.json", &json!({"order": 2, "dim": 2, "entries": [1.0, 0.0, 0.0, 1.0]}));
    let out = cli(&["tensor-expect", "--tensor", s(&wrong_dim), "--sigma", s(&sigma)]);
    assert_eq!(out.code, EXIT_VALIDATION);
    let bad_len = write(&dir, "l.json", &json!({"order": 2, "dim": 2, "entries": [1.0]}));
    let out = cli(&["tensor-expect", "--tensor", s(&bad_len), "--sigma", s(&sigma)]);
    assert_eq!(out.code, EXIT_VALIDATION);
}

#[test]
fn ck_and_isotropy_reports() {
    let v = ok_json(&["ck", "--dist", "sphere:1", "--dim", "3", "--k", "2", "--samples", "200000", "--seed", "3"]);
    assert_eq!(v["k"], 2);
    assert_eq!(v["direction"], json!([1.0, 0.0, 0.0]));
    let (value, se) = (v["value"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((value - 0.6).abs() < 5.0 * se);

    let v = ok_json(&[
        "ck", "--dist", "std-gaussian", "--dim", "2", "--k", "1", "--samples", "5000", "--seed", "3",
        "--direction", "-1,2",
    ]);
    assert_eq!(v["value"], 1.0);

    let v = ok_json(&["isotropy", "--dist", "std-gaussian", "--dim", "3", "--samples", "100000", "--seed", "3"]);
    assert!((v["lambda_hat"].as_f64().unwrap() - 1.0).abs() < 0.02);
    assert_eq!(v["samples"], 100000);
}

#[test]
fn verify_z_scores_are_mostly_small() {
    let dir = TempDir::new().unwrap();
    let sigma = write(
        &dir,
        "s.json",
        &json!({"dim": 3, "sigma": [[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.5]]}),
    );
    let small = (1..=20)
        .filter(|seed| {
            let seed = seed.to_string();
            let v = ok_json(&[
                "verify", "--sigma", s(&sigma), "--indices", "1,2,2,3", "--samples", "100000", "--seed", &seed,
            ]);
            assert_eq!(v["analytic"]["provenance"], "analytic");
            assert_eq!(v["monte_carlo"]["provenance"], "monte-carlo");
            v["z"].as_f64().unwrap().abs() < 3.0
        })
        .count();
    assert!(small >= 19, "{small}/20 runs with |z| < 3");
}

#[test]
fn threads_flag_does_not_change_output() {
    let args = ["isotropy", "--dist", "ball:2", "--dim", "3", "--samples", "50000", "--seed", "11"];
    let base = cli(&args);
    for t in ["1", "3", "8"] {
        let mut with_threads = vec!["--threads", t];
        with_threads.extend(args);
        assert_eq!(cli(&with_threads), base);
    }
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_isserlis");
    let out = Command::new(exe).args(["pairings", "--n", "4", "--count-only"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "{\"count\":3}\n");

    let out = Command::new(exe).arg("nonsense").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");

    let out = Command::new(exe)
        .args(["ck", "--dist", "ball:0", "--dim", "2", "--k", "2", "--samples", "1000", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
