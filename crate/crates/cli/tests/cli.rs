#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survregime"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json output")
}

/// A cheap search so the debug binary finishes quickly.
const QUICK: &[&str] = &["--population", "20", "--generations", "25", "--restarts", "1"];

fn estimate_args<'a>(input: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec!["estimate", "--input", input, "--covariates", "karnof,cd40,age"];
    a.extend_from_slice(QUICK);
    a.extend_from_slice(extra);
    a
}

struct Rows {
    time: Vec<f64>,
    event: Vec<bool>,
    treated: Vec<bool>,
    x: Vec<[f64; 3]>,
}

fn read_actg() -> Rows {
    let text = std::fs::read_to_string(fixture("actg.csv")).unwrap();
    let mut r = Rows {
        time: vec![],
        event: vec![],
        treated: vec![],
        x: vec![],
    };
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        r.time.push(f[0]);
        r.event.push(f[1] == 1.0);
        r.treated.push(f[2] == 1.0);
        r.x.push([f[3], f[4], f[5]]);
    }
    r
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Taylor series below 3, the erfc continued fraction above. Good to about
/// 1e-12, plenty for the checks here.
fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term.abs() > 1e-17 * sum.abs() {
            k += 1.0;
            term *= -x * x / k;
            sum += term / (2.0 * k + 1.0);
        }
        return sum * 2.0 / std::f64::consts::PI.sqrt();
    }
    // erfc continued fraction, evaluated bottom up
    let mut f = 0.0;
    for k in (1..200).rev() {
        f = f64::from(k) / 2.0 / (x + f);
    }
    1.0 - (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
}

/// Smoothed IPSW product-limit value at `t` with a constant propensity,
/// written as a plain loop over distinct event times.
fn ipsw_loop(d: &Rows, eta: &[f64], c0: f64, t: f64) -> f64 {
    let n = d.time.len();
    let lp: Vec<f64> =
        d.x.iter()
            .map(|x| eta[0] + eta[1] * x[0] + eta[2] * x[1] + eta[3] * x[2])
            .collect();
    let mean = lp.iter().sum::<f64>() / n as f64;
    let sd = (lp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let h = c0 * (n as f64).powf(-1.0 / 3.0) * sd;
    let pi = (d.treated.iter().filter(|&&a| a).count() as f64 / n as f64).clamp(0.01, 0.99);
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let g = normal_cdf(lp[i] / h);
            if d.treated[i] {
                g / pi
            } else {
                (1.0 - g) / (1.0 - pi)
            }
        })
        .collect();
    let mut times: Vec<f64> = (0..n)
        .filter(|&i| d.event[i] && d.time[i] <= t)
        .map(|i| d.time[i])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut s = 1.0;
    for u in times {
        let mut dn = 0.0;
        let mut y = 0.0;
        for i in 0..n {
            if d.time[i] >= u {
                y += w[i];
            }
            if d.time[i] == u && d.event[i] {
                dn += w[i];
            }
        }
        s *= 1.0 - dn / y;
    }
    s
}

#[test]
fn reported_value_matches_a_hand_loop() {
    let input = fixture("actg.csv");
    let out = json(&run(&estimate_args(
        input.to_str().unwrap(),
        &["--method", "ipsw", "--ps", "constant", "--time", "600", "--time", "900"],
    )));
    let c0 = out["config"]["smoothing"]["c0"].as_f64().unwrap();
    let data = read_actg();
    let results = out["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    for r in results {
        let eta: Vec<f64> = r["eta"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let t = r["t"].as_f64().unwrap();
        let want = ipsw_loop(&data, &eta, c0, t);
        let got = r["value"].as_f64().unwrap();
        assert!((got - want).abs() < 1e-10, "t = {t}: {got} vs {want}");
        let w = &r["wald"];
        assert!(w["ci_lower"].as_f64().unwrap() < got && got < w["ci_upper"].as_f64().unwrap());
    }
    assert_eq!(
        results[0]["terms"],
        serde_json::json!(["intercept", "karnof", "cd40", "age"])
    );
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let input = fixture("actg.csv");
    let input = input.to_str().unwrap();
    let extra = ["--method", "ipsw", "--time", "700", "--bootstrap", "50"];
    let mut args = vec!["--threads", "1"];
    args.extend(estimate_args(input, &extra));
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    args[1] = "4";
    let c = run(&args);
    let strip = |o: &Output| {
        let mut v = json(o);
        v["config"]["threads"] = Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&c));
}

#[test]
fn compare_reports_both_simple_regimes() {
    let input = fixture("actg.csv");
    let mut args = vec![
        "compare",
        "--input",
        input.to_str().unwrap(),
        "--covariates",
        "cd40",
        "--time",
        "600",
    ];
    args.extend_from_slice(&["--method", "aipsw", "--bootstrap", "50"]);
    args.extend_from_slice(QUICK);
    let out = json(&run(&args));
    let r = &out["results"][0];
    assert_eq!(r["vs_treat_all"]["simple"], "treat_all");
    assert_eq!(r["vs_treat_none"]["simple"], "treat_none");
    assert_eq!(out["config"]["bootstrap"], 50);
}

#[test]
fn two_stage_estimate_names_its_features() {
    let input = fixture("two_stage.csv");
    let mut args = vec!["estimate", "--input", input.to_str().unwrap(), "--covariates", "x0"];
    args.extend_from_slice(&["--interim-covariates", "x1", "--two-stage", "--interim-time", "1"]);
    args.extend_from_slice(&["--time", "3", "--ps", "known=0.5", "--bootstrap", "50"]);
    args.extend_from_slice(QUICK);
    let out = json(&run(&args));
    let r = &out["results"][0];
    assert_eq!(r["terms1"], serde_json::json!(["intercept", "x0", "stage0_rule", "x1"]));
    assert_eq!(r["eta1"].as_array().unwrap().len(), 4);
    assert!(r["bootstrap"]["se"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("study");
    let out = run(&[
        "--output",
        prefix.to_str().unwrap(),
        "simulate",
        "--reps",
        "2",
        "--n",
        "100",
        "--n-mc",
        "100000",
        "--generations",
        "20",
        "--restarts",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("study.json")).unwrap()).unwrap();
    assert_eq!(j["config"]["estimators"], serde_json::json!(["S-I/T", "S-A/T"]));
    assert_eq!(j["report"]["rows"].as_array().unwrap().len(), 2);
    let text = std::fs::read_to_string(dir.path().join("study.txt")).unwrap();
    assert!(text.starts_with("# config "));
    assert!(text.contains("S-A/T"));
}

#[test]
fn oracle_of_the_true_rule_has_no_misclassification() {
    let out = json(&run(&["oracle", "--n-mc", "100000"]));
    assert_eq!(out["misclassification"], 0.0);
    assert_eq!(out["value"], out["optimal_value"]);
    let flipped = json(&run(&["oracle", "--n-mc", "100000", "--eta", "0,-0.7071,0.7071"]));
    assert!(flipped["misclassification"].as_f64().unwrap() > 0.99);
}

fn code(args: &[&str]) -> Option<i32> {
    run(args).status.code()
}

#[test]
fn exit_codes() {
    let input = fixture("actg.csv");
    let input = input.to_str().unwrap();
    assert_eq!(code(&["estimate", "--input", input, "--covariates", "karnof"]), Some(1));
    assert_eq!(
        code(&[
            "compare",
            "--input",
            input,
            "--covariates",
            "karnof",
            "--time",
            "600",
            "--bootstrap",
            "10"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&["simulate", "--design", "two-stage", "--scenario", "4", "--reps", "1"]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "estimate",
            "--input",
            "/no/such/file.csv",
            "--covariates",
            "x",
            "--time",
            "1"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&["estimate", "--input", input, "--covariates", "nope", "--time", "600"]),
        Some(1)
    );
    assert_eq!(code(&["--help"]), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("separated.csv");
    let mut csv = String::from("time,event,treatment,z\n");
    for i in 0..40 {
        let a = i % 2;
        csv += &format!("{},{},{a},{}\n", 1 + i, i % 3 != 0, a as f64 * 2.0 - 1.0);
    }
    std::fs::write(&path, csv.replace("true", "1").replace("false", "0")).unwrap();
    let p = path.to_str().unwrap();
    let fit = run(&[
        "estimate",
        "--input",
        p,
        "--covariates",
        "z",
        "--time",
        "20",
        "--method",
        "ipsw",
    ]);
    assert_eq!(fit.status.code(), Some(2), "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(String::from_utf8_lossy(&fit.stderr).contains("separat"));
}
