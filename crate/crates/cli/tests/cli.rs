use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use broil_core::environments::{build_gridworld, reference_demo, GridworldSpec};
use broil_core::mdp::empirical_expert_feature_counts;
use broil_core::posterior::{posterior_from_samples, RewardPosterior};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn broil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_broil"))
        .args(args)
        .env_remove("BROIL_OUTPUT_DIR")
        .output()
        .expect("run binary")
}

fn ok(args: &[&str]) -> Output {
    let out = broil(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn machine_replacement_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("machine_replacement_experiment.json");
    ok(&["frontier", "--config", s(&cfg), "--output-dir", s(dir.path())]);
    let (header, rows) = read_csv(&dir.path().join("frontier.csv"));
    assert_eq!(header, ["lambda", "expected_psi", "cvar_psi", "sigma_star"]);
    assert_eq!(rows.len(), 11);
    for w in rows.windows(2) {
        assert!(w[1][1] >= w[0][1] - 1e-7);
    }

    ok(&["frontier", "--config", s(&cfg), "--lambda", "1", "--output-dir", s(dir.path())]);
    let (_, rows) = read_csv(&dir.path().join("frontier.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn invalid_alpha_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("machine_replacement_experiment.json");
    let out = broil(&["frontier", "--config", s(&cfg), "--alpha", "1", "--output-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!dir.path().join("frontier.csv").exists());
}

#[test]
fn missing_files_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = broil(&["solve", "--gridworld", s(&dir.path().join("nope.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = broil(&["solve"]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_point_mass(dir: &Path) -> PathBuf {
    let spec = GridworldSpec::reference();
    let mdp = build_gridworld(&spec).unwrap();
    let post = posterior_from_samples(vec![vec![-0.6, -0.8]; 5], &mdp, None).unwrap();
    let path = dir.join("point.json");
    std::fs::write(&path, post.to_json_string().unwrap()).unwrap();
    path
}

#[test]
fn point_mass_posterior_gives_flat_columns() {
    let dir = tempfile::tempdir().unwrap();
    let post = write_point_mass(dir.path());
    ok(&[
        "returns",
        "--gridworld",
        s(&configs().join("gridworld.json")),
        "--posterior",
        s(&post),
        "--algorithm",
        "broil-robust,lpal,mean-reward",
        "--lambda",
        "0.5",
        "--output-dir",
        s(dir.path()),
    ]);
    let (header, rows) = read_csv(&dir.path().join("returns.csv"));
    assert_eq!(header, ["broil-robust@0.5", "lpal", "mean-reward", "demonstrator"]);
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!(r, &rows[0]);
    }
}

fn tail_mean(sorted: &[f64], alpha: f64) -> f64 {
    let k = ((1.0 - alpha) * sorted.len() as f64).ceil() as usize;
    sorted[..k].iter().sum::<f64>() / k as f64
}

#[test]
fn gridworld_returns_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gridworld_experiment.json");
    ok(&[
        "returns",
        "--config",
        s(&cfg),
        "--algorithm",
        "broil-regret",
        "--measure",
        "return",
        "--lambda",
        "0,1",
        "--output-dir",
        s(dir.path()),
    ]);
    let (header, rows) = read_csv(&dir.path().join("returns.csv"));
    assert_eq!(header, ["broil-regret@0", "broil-regret@1", "demonstrator"]);
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    for j in 0..3 {
        assert!(col(j).windows(2).all(|w| w[0] <= w[1]));
    }

    // the demonstrator column is wᵢᵀμ̂_E, sorted
    ok(&["birl", "--config", s(&cfg), "--output-dir", s(dir.path())]);
    let post = RewardPosterior::from_json_str(
        &std::fs::read_to_string(dir.path().join("posterior.json")).unwrap(),
    )
    .unwrap();
    let spec = GridworldSpec::reference();
    let mdp = build_gridworld(&spec).unwrap();
    let mu = empirical_expert_feature_counts(&[reference_demo(&spec).unwrap()], &mdp).unwrap();
    let mut expected: Vec<f64> = post
        .weights()
        .unwrap()
        .iter()
        .map(|w| w[0] * mu[0] + w[1] * mu[1])
        .collect();
    expected.sort_by(f64::total_cmp);
    for (a, b) in col(2).iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }

    // risk-averse column has the better tail under the regret measure
    ok(&["returns", "--config", s(&cfg), "--algorithm", "broil-regret", "--lambda", "0,1", "--output-dir", s(dir.path())]);
    let (_, rows) = read_csv(&dir.path().join("returns.csv"));
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    assert!(tail_mean(&col(0), 0.95) >= tail_mean(&col(1), 0.95) - 1e-9);
}

#[test]
fn birl_is_deterministic_and_reports_chain_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gridworld_experiment.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["birl", "--config", s(&cfg), "--output-dir", s(&a)]);
    ok(&["birl", "--config", s(&cfg), "--output-dir", s(&b)]);
    let pa = std::fs::read(a.join("posterior.json")).unwrap();
    assert_eq!(pa, std::fs::read(b.join("posterior.json")).unwrap());
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("birl_diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["proposals"], 500 + 5 * 2000);
    let ratio = diag["accept_ratio"].as_f64().unwrap();
    assert!((0.25..=0.55).contains(&ratio), "accept ratio {ratio}");

    ok(&["birl", "--config", s(&cfg), "--seed", "3", "--output-dir", s(&b)]);
    assert_ne!(pa, std::fs::read(b.join("posterior.json")).unwrap());
}

#[test]
fn bench_rows_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["bench", "--states", "6", "--samples", "10,20", "--trials", "3", "--output-dir", s(dir.path())]);
    let (header, rows) = read_csv(&dir.path().join("bench.csv"));
    assert_eq!(header, ["num_states", "num_samples", "trial", "seconds"]);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[0] == 6.0 && r[3].is_finite()));
    let out = broil(&["bench", "--states", "1", "--output-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_policy_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gridworld_experiment.json");
    let out = ok(&["solve", "--config", s(&cfg), "--lambda", "0", "--output-dir", s(dir.path())]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("policy.json")).unwrap()).unwrap();
    assert_eq!(summary["algorithm"], "broil-regret");
    let policy = summary["policy"].as_array().unwrap();
    assert_eq!(policy.len(), 12);
    for row in policy {
        let total: f64 = row.as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let table = std::fs::read_to_string(dir.path().join("policy.txt")).unwrap();
    assert!(table.lines().nth(2).unwrap().ends_with('T'));
    assert!(String::from_utf8_lossy(&out.stdout).contains(&table));
}

#[test]
fn output_dir_defaults_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("machine_replacement_experiment.json");
    let status = Command::new(env!("CARGO_BIN_EXE_broil"))
        .args(["frontier", "--config", s(&cfg), "--lambda", "0.5"])
        .env("BROIL_OUTPUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("frontier.csv").is_file());
}
