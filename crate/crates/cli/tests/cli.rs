use std::path::Path;
use std::process::{Command, Output};

fn quicksearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quicksearch"))
        .args(args)
        .env_remove("QUICKSEARCH_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const MEAN_CONFIG: &str =
    r#"{"test":"mean","n":500,"epsilon":0.02,"t_target":2,"budget_s":4,"max_refines":2,"alpha":0.5,"mu0":2.5}"#;

#[test]
fn schedule_reports_trimmed_stopping_time() {
    let text = stdout(&quicksearch(&["schedule", "--n", "10000", "--S", "2", "--K", "2", "--alpha", "0.5", "--Tn", "10"]));
    assert!(text.contains("k_star=2\n"));
    assert!(text.contains("nominal_tau=4\n"));
    assert!(text.contains("tau=3\n"));
    assert!(text.contains("total_samples=17512\n"));
    assert!(text.ends_with("1,10000,true\n2,5005,true\n3,2507,false\n"));
}

#[test]
fn schedule_notes_the_no_refinement_branch() {
    let text = stdout(&quicksearch(&["schedule", "--n", "10000", "--S", "2", "--K", "2", "--alpha", "0.9"]));
    assert!(text.contains("k_star=0\n"));
    assert!(text.contains("note:"));
}

#[test]
fn schedule_without_n_is_a_usage_error() {
    let out = quicksearch(&["schedule", "--S", "2", "--K", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_and_domain_errors_have_distinct_codes() {
    // refining 100 streams toward T=90 barely shrinks them, so two refinements exhaust S=1.2
    let out = quicksearch(&["schedule", "--n", "100", "--S", "1.2", "--K", "2", "--alpha", "0.1", "--Tn", "90"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let out = quicksearch(&["schedule", "--n", "100", "--S", "2", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_is_deterministic_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MEAN_CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, threads) in [(&a, "1"), (&b, "3")] {
        let out = quicksearch(&[
            "simulate", "--config", &cfg, "--trials", "200", "--seed", "7", "--threads", threads,
            "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let body = std::fs::read_to_string(&a).unwrap();
    assert_eq!(body, std::fs::read_to_string(&b).unwrap());
    assert_eq!(body.lines().next(), Some("trial,error,samples_used,n1,rare_retained_final"));
    assert_eq!(body.lines().count(), 201);
    assert!(!body.contains('\r'));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 7);
    assert_eq!(manifest["config"]["n"], 500);
    let digest = manifest["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MEAN_CONFIG);
    let run = |seed: &str| stdout(&quicksearch(&["simulate", "--config", &cfg, "--trials", "50", "--seed", seed]));
    assert_ne!(run("1"), run("2"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MEAN_CONFIG);
    let text = stdout(&quicksearch(&["simulate", "--config", &cfg, "--trials", "3", "--n", "300", "--K", "0"]));
    let row = text.lines().nth(1).unwrap();
    // K=0, S=4: four full rounds over 300 streams
    assert_eq!(row.split(',').nth(2), Some("1200"));
}

#[test]
fn zero_trials_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MEAN_CONFIG);
    let out = quicksearch(&["simulate", "--config", &cfg, "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"test\": \"mean\",\n  \"n\": 100\n  \"mu0\": 1\n}\n");
    let out = quicksearch(&["simulate", "--config", &cfg, "--trials", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");

    let cfg = write_config(dir.path(), r#"{"test":"mean","n":100,"bogus":1}"#);
    let out = quicksearch(&["simulate", "--config", &cfg, "--trials", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_stream_rare_never_errs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"test":"variance","n":200,"epsilon":1.0,"t_target":3,"budget_s":3,"a0":4}"#);
    let text = stdout(&quicksearch(&["simulate", "--config", &cfg, "--trials", "100"]));
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("false")));
}

#[test]
fn region_has_one_row_per_cell() {
    let text = stdout(&quicksearch(&["region", "--test", "variance", "--S", "4", "--K", "1", "--resolution", "7"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("axis1,axis2,threshold,detectable"));
    assert_eq!(lines.count(), 49);
}

#[test]
fn region_overlay_adds_error_column() {
    let text = stdout(&quicksearch(&[
        "region", "--test", "mean", "--S", "2", "--n", "200", "--resolution", "2", "--mc-trials", "20",
    ]));
    assert!(text.starts_with("axis1,axis2,threshold,detectable,empirical_error\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn extremes_limit_cdf_is_monotone() {
    for family in ["gaussian-min", "chi2-min", "chi2-max"] {
        let text = stdout(&quicksearch(&["extremes", "--family", family, "--k", "3", "--m", "500", "--samples", "500"]));
        let limit: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
        assert_eq!(limit.len(), 81);
        assert!(limit.windows(2).all(|w| w[0] <= w[1]), "{family}");
        assert!(limit.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}

#[test]
fn gains_first_row_brackets_one() {
    let text = stdout(&quicksearch(&["gains", "--kind", "agility", "--S", "20", "--alpha", "0.5", "--k-max", "4"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("K,lower,upper,asymptotic"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert!(first[1] <= 1.0 && 1.0 <= first[2] * (1.0 + 1e-9));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn scaling_gain_off_branch_is_a_domain_error() {
    let out = quicksearch(&["gains", "--kind", "scaling", "--S", "2", "--alpha", "0.9"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn baseline_emits_one_row_per_method_and_prior() {
    let text = stdout(&quicksearch(&[
        "baseline", "--test", "mean", "--n", "300", "--mu0", "3", "--S", "3", "--method", "nonadaptive,sprt,cusum",
        "--eps-exponents", "0.6,0.9", "--trials", "20", "--cusum-threshold", "5",
    ]));
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "method,epsilon_exponent,mean_budget,error_rate");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("nonadaptive,0.6,3,"));
}

#[test]
fn cusum_without_threshold_or_target_is_a_usage_error() {
    let out = quicksearch(&["baseline", "--test", "mean", "--n", "100", "--mu0", "2", "--epsilon", "0.05", "--method", "cusum"]);
    assert_eq!(out.status.code(), Some(2));
}
