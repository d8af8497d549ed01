use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lognorm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lognorm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LOGNORM_OUT")
        .output()
        .expect("run lognorm")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn mu_table_for_first_matrix() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &["mu", "--matrix", "[[-11,10],[2,-3]]", "--kinds", "1,2,inf"],
    );
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mus: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(2).unwrap())
        .collect();
    assert_eq!(mus, ["7", "0.211103", "-1"]);
}

#[test]
fn mu_zero_and_rotation_matrices() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(dir.path(), &["mu", "--matrix", "[[0,0],[0,0]]", "--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["mu"] == 0.0 && r["norm"] == 0.0));
    let o = lognorm(
        dir.path(),
        &[
            "mu",
            "--matrix",
            "[[-1,3],[-3,-2]]",
            "--kinds",
            "2",
            "--json",
        ],
    );
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v[0]["mu"].as_f64().unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn mu_lyapunov_weight_matches_eigenvalue_formula() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "mu",
            "--matrix",
            "[[-11,10],[2,-3]]",
            "--kinds",
            "2",
            "--lyapunov",
            "--json",
        ],
    );
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[1]["kind"], "H");
    assert!(v[1]["mu"].as_f64().unwrap() < 0.0);
}

#[test]
fn mu_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&lognorm(dir.path(), &["mu", "--matrix", "[[1,2]"])), 2);
    assert_eq!(
        code(&lognorm(dir.path(), &["mu", "--matrix", "[[1,2]]"])),
        2
    );
    assert_eq!(
        code(&lognorm(
            dir.path(),
            &["mu", "--matrix", "[[1]]", "--kinds", "3"]
        )),
        2
    );
    assert_eq!(code(&lognorm(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn certify_exit_codes_follow_verdicts() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        code(&lognorm(
            dir.path(),
            &["certify", "--scenario", "example2", "--kinds", "2"]
        )),
        0
    );
    assert_eq!(
        code(&lognorm(
            dir.path(),
            &["certify", "--scenario", "example2", "--kinds", "1"]
        )),
        3
    );
    assert_eq!(
        code(&lognorm(
            dir.path(),
            &["certify", "--scenario", "example3", "--kinds", "2"]
        )),
        3
    );
    assert_eq!(
        code(&lognorm(dir.path(), &["certify", "--scenario", "nowhere"])),
        2
    );
    // A1 decreasing but short of the threshold on a short horizon.
    let o = lognorm(
        dir.path(),
        &["certify", "--scenario", "example2", "--horizon", "5"],
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn certificate_report_layout() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "certify",
            "--scenario",
            "example3",
            "--kinds",
            "2",
            "--simulate",
        ],
    );
    assert_eq!(code(&o), 3);
    let report = read_json(&dir.path().join("certify/example3_2.json"));
    assert_eq!(report["scenario"], "example3");
    assert_eq!(report["kind"], "2");
    assert_eq!(report["overall"], "not-certified");
    let ids: Vec<&str> = report["assumptions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["A1", "A2", "A3"]);
    assert_eq!(report["assumptions"][2]["verdict"], "fails");
    for a in report["assumptions"].as_array().unwrap() {
        assert!(a["rule"].as_str().is_some_and(|r| !r.is_empty()));
        let evidence = a["evidence_ref"].as_str().unwrap();
        assert!(dir.path().join("certify").join(evidence).is_file());
    }
    let sim = &report["simulation"];
    assert_eq!(sim["performed"], true);
    assert_eq!(sim["violations"], 0);
    assert!((sim["tail_norm"].as_f64().unwrap() - (1.0 - (-4.0f64).exp())).abs() < 1e-6);
    let (header, rows) = read_csv(&dir.path().join("certify/example3_2_A3.csv"));
    assert_eq!(header, ["t", "envelope_over_mu"]);
    assert!(rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-12));
}

#[test]
fn certify_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = [
        "certify",
        "--scenario",
        "example2",
        "--kinds",
        "2,inf",
        "--simulate",
        "--seed",
        "11",
    ];
    let oa = lognorm(a.path(), &args);
    let ob = lognorm(b.path(), &args);
    assert_eq!(code(&oa), 0);
    assert_eq!(oa.stdout, ob.stdout);
    for f in [
        "example2_2.json",
        "example2_inf.json",
        "example2_2_A1.csv",
        "example2_inf_A3.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join("certify").join(f)).unwrap(),
            fs::read(b.path().join("certify").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn simulate_example2_decays() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "example2",
            "--x0",
            "[-5,2]",
            "--tf",
            "5",
            "--envelope",
            "--dt",
            "0.05",
        ],
    );
    assert_eq!(code(&o), 0);
    let (header, rows) = read_csv(&dir.path().join("simulate/example2.csv"));
    assert_eq!(header, ["t", "x1", "x2", "envelope"]);
    assert_eq!(rows.len(), 101);
    let norm = |r: &Vec<f64>| r[1].hypot(r[2]);
    assert!(norm(rows.last().unwrap()) < norm(&rows[0]));
    for r in &rows {
        assert!(norm(r) <= r[3] * (1.0 + 1e-3), "t={}", r[0]);
    }
}

#[test]
fn simulate_example3_closed_form() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "example3",
            "--x0",
            "[0,0]",
            "--tf",
            "4",
        ],
    );
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&dir.path().join("simulate/example3.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], 4.0);
    assert!((last[1].hypot(last[2]) - (1.0 - (-4.0f64).exp())).abs() < 1e-3);
}

#[test]
fn simulate_zero_span_gives_single_row() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "example2",
            "--x0",
            "[0,0]",
            "--tf",
            "0",
        ],
    );
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&dir.path().join("simulate/example2.csv"));
    assert_eq!(rows, vec![vec![0.0, 0.0, 0.0]]);
}

#[test]
fn simulate_rejects_wrong_dimension() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &["simulate", "--scenario", "example2", "--x0", "[1,2,3]"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_blowup_writes_flagged_partial_trajectory() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("unstable.json");
    fs::write(
        &spec,
        r#"{"name": "unstable", "n": 1, "matrix": {"constant": [[800.0]]}}"#,
    )
    .unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            spec.to_str().unwrap(),
            "--x0",
            "[1]",
            "--tf",
            "2",
        ],
    );
    assert_eq!(code(&o), 5);
    let meta = read_json(&dir.path().join("simulate/unstable.json"));
    assert_eq!(meta["complete"], false);
    let (_, rows) = read_csv(&dir.path().join("simulate/unstable.csv"));
    assert!(!rows.is_empty() && rows.last().unwrap()[0] < 2.0);
}

#[test]
fn classify_known_class_members() {
    let dir = TempDir::new().unwrap();
    let verdicts = |o: &Output| -> Vec<(String, String)> {
        let v: Value = serde_json::from_str(&stdout(o)).unwrap();
        v.as_array()
            .unwrap()
            .iter()
            .map(|r| {
                (
                    r["class"].as_str().unwrap().into(),
                    r["verdict"].as_str().unwrap().into(),
                )
            })
            .collect()
    };
    let o = lognorm(
        dir.path(),
        &[
            "classify",
            "--fn",
            "oscillatory",
            "--classes",
            "D,AD",
            "--json",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        verdicts(&o),
        [
            ("D".into(), "tends-to-zero".into()),
            ("AD".into(), "bounded-away".into())
        ]
    );
    let o = lognorm(
        dir.path(),
        &["classify", "--fn", "needle", "--classes", "AD,V", "--json"],
    );
    assert_eq!(
        verdicts(&o),
        [
            ("AD".into(), "tends-to-zero".into()),
            ("V".into(), "bounded-away".into())
        ]
    );
    let o = lognorm(dir.path(), &["classify", "--fn", "zero", "--json"]);
    assert!(verdicts(&o).iter().all(|(_, v)| v == "tends-to-zero"));
    let sidecar = read_json(&dir.path().join("classify/needle_AD.json"));
    assert_eq!(sidecar["class"], "AD");
    assert_eq!(sidecar["verdict"], "tends-to-zero");
    assert!(sidecar["trend_slope"].as_f64().unwrap() < 0.0);
    assert_eq!(sidecar["params"]["function"], "needle");
}

#[test]
fn classify_unknown_function_is_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        code(&lognorm(dir.path(), &["classify", "--fn", "sawtooth"])),
        2
    );
    assert_eq!(code(&lognorm(dir.path(), &["classify"])), 2);
}

#[test]
fn classify_sampled_function() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("decay.csv");
    let mut text = String::from("t,h1,h2\n");
    for k in 0..=400 {
        let t = k as f64 * 0.05;
        text.push_str(&format!("{t},{},{}\n", (-t).exp(), 0.5 * (-t).exp()));
    }
    fs::write(&path, text).unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "classify",
            "--samples",
            path.to_str().unwrap(),
            "--classes",
            "V,AD",
            "--json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["verdict"] == "tends-to-zero"));
    assert!(dir.path().join("classify/decay_V.csv").is_file());
}

#[test]
fn reproduce_items_pass() {
    let dir = TempDir::new().unwrap();
    for item in ["example1", "example3", "lemma2"] {
        let o = lognorm(dir.path(), &["reproduce", item]);
        assert_eq!(code(&o), 0, "{item}: {}", stdout(&o));
        let summary = read_json(&dir.path().join("reproduce").join(item).join("summary.json"));
        assert_eq!(summary["pass"], true);
    }
    let summary = read_json(&dir.path().join("reproduce/example1/summary.json"));
    assert_eq!(summary["checks"].as_array().unwrap().len(), 9);
}

#[test]
fn reproduce_example2() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(dir.path(), &["reproduce", "example2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(dir
        .path()
        .join("reproduce/example2/trajectory.csv")
        .is_file());
}

#[test]
fn dumped_scenario_round_trips() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "example3",
            "--param",
            "lambda=2",
            "--dump-scenario",
            "--tf",
            "1",
            "--dt",
            "0.1",
        ],
    );
    assert_eq!(code(&o), 0);
    let original = fs::read(dir.path().join("simulate/example3.csv")).unwrap();
    let dumped = dir.path().join("scenarios/example3.json");
    assert_eq!(read_json(&dumped)["params"]["lambda"], 2.0);
    let o = lognorm(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            dumped.to_str().unwrap(),
            "--tf",
            "1",
            "--dt",
            "0.1",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(dir.path().join("simulate/example3.csv")).unwrap(),
        original
    );
}

#[test]
fn environment_overrides_out_flag() {
    let flag = TempDir::new().unwrap();
    let env = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lognorm"))
        .args(["classify", "--fn", "zero", "--classes", "V", "--out"])
        .arg(flag.path())
        .env("LOGNORM_OUT", env.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env.path().join("classify/zero_V.csv").is_file());
    assert!(!flag.path().join("classify").exists());
}

#[test]
fn tolerance_flag_validation() {
    let dir = TempDir::new().unwrap();
    let o = lognorm(
        dir.path(),
        &["simulate", "--scenario", "example3", "--tol", "abc"],
    );
    assert_eq!(code(&o), 2);
    let o = lognorm(
        dir.path(),
        &[
            "simulate",
            "--scenario",
            "example3",
            "--tol",
            "1e-8,1e-12",
            "--tf",
            "1",
        ],
    );
    assert_eq!(code(&o), 0);
}
