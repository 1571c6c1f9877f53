use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bundlelearn::corpus::{load_trajectory_csv, load_trajectory_json, TrajectoryTable};
use bundlelearn::simulator::run;
use bundlelearn_cli::parse_config;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bundlelearn"));
    c.env_remove(bundlelearn_cli::OUT_DIR_ENV);
    c
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn call(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(strategy: &str, out: &Path) {
    let o = call(&["simulate", "--config", p(&fixture("biased_start.toml")), "--strategy", strategy, "--out", p(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn orthogonal_run_keeps_error_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    simulate("orthogonal", &out);
    let t = load_trajectory_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 20);
    assert_eq!(t.dim, 2);
    for r in &t.rows {
        assert!((r.mse - 0.05).abs() < 1e-15, "mse {}", r.mse);
        assert_eq!(r.mse, t.rows[0].mse);
        assert_eq!(r.beta, vec![0.9, 1.2]);
    }
}

#[test]
fn four_panels_match_library_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("biased_start.toml")).unwrap();
    let mut series = Vec::new();
    for strategy in ["orthogonal", "popularity", "correlation", "round-robin"] {
        let out = dir.path().join(format!("{strategy}.csv"));
        simulate(strategy, &out);
        let got = load_trajectory_csv(std::fs::File::open(&out).unwrap()).unwrap();
        let cfg = parse_config(&text, Some(strategy)).unwrap();
        let expect = TrajectoryTable::from(&run(&cfg.scenario, &cfg.strategy).unwrap());
        assert_eq!(got, expect, "{strategy}");
        series.push(got.rows.iter().map(|r| r.mse).collect::<Vec<_>>());
    }
    for t in 1..20 {
        assert!(series[0][t] >= series[1][t] - 1e-12);
        assert!(series[1][t] >= series[2][t] - 1e-12);
        assert!(series[2][t] >= series[3][t] - 1e-12);
    }
    assert!(series[3][1] < 1e-12);
}

#[test]
fn same_config_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noisy.toml");
    std::fs::write(
        &cfg,
        "[scenario]\nbeta = [1.0, -0.5, 0.25]\nhorizon = 40\n[noise]\nsigma2 = 0.5\nseed = 9\n[init]\nkind = \"warmup\"\n[strategy]\nkind = \"correlation\"\n",
    )
    .unwrap();
    for args in [vec!["--format", "json"], vec!["--format", "csv"], vec!["--sweep", "16", "--format", "csv"]] {
        let mut outs = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("run{k}"));
            let mut a = vec!["simulate", "--config", p(&cfg), "--out", p(&out)];
            a.extend(args.iter().copied());
            let o = call(&a);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            outs.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(outs[0], outs[1], "{args:?}");
    }
    let o = call(&["simulate", "--config", p(&cfg), "--seed", "10", "--format", "json"]);
    let t = load_trajectory_json(o.stdout.as_slice()).unwrap();
    assert_eq!(t.rows.len(), 40);
}

#[test]
fn sweep_rows_follow_seed_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noisy.toml");
    std::fs::write(&cfg, "[scenario]\nbeta = [1.0, 2.0]\nhorizon = 10\n[noise]\nsigma2 = 1.0\nseed = 100\n").unwrap();
    let o = call(&["simulate", "--config", p(&cfg), "--sweep", "8"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let seeds: Vec<u64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(seeds, (100..108).collect::<Vec<_>>());
    // each row matches a serial run of the same seed
    let base = parse_config(&std::fs::read_to_string(&cfg).unwrap(), None).unwrap();
    for (line, seed) in text.lines().skip(1).zip(100..) {
        let mut sc = base.scenario.clone();
        sc.noise.seed = seed;
        let mse = run(&sc, &base.strategy).unwrap().steps.last().unwrap().mse;
        let field: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(field, mse);
    }
}

#[test]
fn usage_errors_exit_two() {
    let o = call(&["simulate", "--config", "x.toml", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert!(o.stdout.is_empty());
    assert_eq!(call(&[]).status.code(), Some(2));
    assert_eq!(call(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_one_with_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[scenario]\nbeta = [1.0, 1.0]\n[noise]\nsigma2 = -1.0\n").unwrap();
    let o = call(&["simulate", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err, "E_CONFIG: noise.sigma2: must be ≥ 0\n");

    let o = call(&["replay", "--corpus", p(&dir.path().join("missing.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("E_IO: "));

    let o = call(&["replay", "--corpus", p(&fixture("sagas.csv")), "--min-appearances", "50"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("E_RANK: "));
}

#[test]
fn spectral_report_has_rankings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("centrality.json");
    let o = call(&["spectral", "--corpus", p(&fixture("sagas.csv")), "--report", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["full_rank_time"], 9);
    assert_eq!(v["ranking"].as_array().unwrap().len(), 9);
    let pop: Vec<f64> = v["ranking"].as_array().unwrap().iter().map(|r| r["popularity"].as_f64().unwrap()).collect();
    // descending, with entries tied within 1e-9 of the largest ordered by column
    assert!(pop.windows(2).all(|w| w[0] >= w[1] - 1e-9 * pop[0]));
}

#[test]
fn replay_honours_output_directory_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["replay", "--corpus", p(&fixture("sagas.csv")), "--format", "json"])
        .env(bundlelearn_cli::OUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let t = load_trajectory_json(std::fs::File::open(dir.path().join("replay.json")).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 20);
    assert_eq!(t.dim, 9);
}

#[test]
fn design_and_market_reports() {
    let o = call(&["design", "--config", p(&fixture("biased_start.toml"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema_version"], "1");
    let x: Vec<f64> = v["orthogonal_bundle"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect();
    // error (-0.1, 0.2): the no-learning bundle is proportional to (2, 1)
    assert!((x[0] / x[1] - 2.0).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.toml");
    std::fs::write(
        &cfg,
        "[scenario]\nbeta = [1.0, 0.0]\n[init]\nbeta0 = [0.5, 0.2]\n[market]\nstance = \"optimistic\"\nxi = 0.3\n",
    )
    .unwrap();
    let o = call(&["market", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["complete_information"]["mode"], "SellDirect");
    assert_eq!(v["complete_information"]["prices"][0], 0.5);
    assert_eq!(v["stationary_bundle"], serde_json::json!([1.0, 0.0]));
}
