use std::path::Path;
use std::process::{Command, Output};

use sisplan::harness::metrics::{read_csv, HEADER, SCHEMA_LINE};
use sisplan::neural::{ParamLayout, PredictorParams};

fn sisplan(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sisplan"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("SISPLAN_WORKERS", "1")
        .output()
        .unwrap()
}

#[test]
fn help_and_usage_errors() {
    let ok = Command::new(env!("CARGO_BIN_EXE_sisplan")).arg("--help").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(env!("CARGO_BIN_EXE_sisplan")).arg("nonsense").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sisplan(&["sis-fixed"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[domain]\nname = \"gac\"\n[planner]\nbudgett = 3\n").unwrap();
    let out = sisplan(&["sis-fixed", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budgett"));

    let timed = dir.path().join("timed.toml");
    std::fs::write(&timed, "[domain]\nname = \"gac\"\n[planner]\nbudget = { seconds = 0.01 }\n").unwrap();
    let out = sisplan(&["sis-fixed", "--config", timed.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = sisplan(
        &["eval-testloss", "--preset", "tiny-gac", "--theta", "/nonexistent/theta.json", "--test", "/nonexistent/x"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sis_fixed_writes_one_csv_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[domain]\nname = \"gac\"\noverrides = { n_fixed_agents = 4, horizon = 3 }\n\
         [planner]\nbudget = { sims = 20 }\nepisodes = 2\nruns = 3\n[selector]\nlambda = [0.0, 1.5]\n",
    )
    .unwrap();
    let out = sisplan(&["sis-fixed", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8_lossy(&out.stdout);
    assert_eq!(summary.lines().count(), 2);

    for name in ["sis-fixed-lambda-0.csv", "sis-fixed-lambda-1.5.csv"] {
        let path = dir.path().join(name);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SCHEMA_LINE));
        assert_eq!(lines.next(), Some(HEADER.join(",").as_str()));
        let rows = read_csv(&path).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.mean_step_time_ms.is_none()));
        let timed = read_csv(&path.with_extension("timed.csv")).unwrap();
        assert!(timed.iter().all(|r| r.mean_step_time_ms.is_some()));
        let runs: Vec<_> = rows.iter().map(|r| (r.run_id, r.episode)).collect();
        assert_eq!(runs, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]);
    }
}

#[test]
fn uniform_predictor_scores_sum_of_log_cardinalities() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("uniform.jsonl");
    let out = sisplan(
        &[
            "collect-offline",
            "--preset",
            "tiny-gac",
            "--episodes",
            "30",
            "--policy",
            "uniform",
            "--file",
            data.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success());

    let domain = sisplan::domains::GrabAChair::new(sisplan::domains::GacConfig::tiny()).unwrap();
    let zeros = PredictorParams::zeros(ParamLayout::for_domain(&domain, 8));
    let theta = dir.path().join("zeros.json");
    zeros.save(&theta).unwrap();
    let out = sisplan(
        &["eval-testloss", "--preset", "tiny-gac", "--theta", theta.to_str().unwrap(), "--test", data.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("testloss.csv")).unwrap();
    let loss: f64 = text.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12, "{loss}");
}

#[test]
fn offline_training_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let base = ["--preset", "tiny-gac"];
    let mut args = vec!["collect-offline"];
    args.extend(base);
    args.extend(["--episodes", "20", "--policy", "pomcp-gs", "--file", data.to_str().unwrap()]);
    assert!(sisplan(&args, dir.path()).status.success());

    let mut args = vec!["train-offline"];
    args.extend(base);
    args.extend(["--data", data.to_str().unwrap(), "--steps", "30", "--checkpoint-every", "10", "--limit", "15"]);
    let out = sisplan(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["theta-step0.json", "theta-step10.json", "theta-step20.json", "theta-step30.json", "theta-final.json"] {
        PredictorParams::load(&dir.path().join(name)).unwrap();
    }

    let mut args = vec!["eval-two-phase"];
    args.extend(base);
    let theta = dir.path().join("theta-final.json");
    args.extend(["--theta", theta.to_str().unwrap(), "--runs", "1", "--episodes", "2"]);
    let out = sisplan(&args, dir.path());
    assert!(out.status.success());
    let rows = read_csv(&dir.path().join("two-phase.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.mean_n_gs == Some(0.0) && r.buffer_size == 0));
}
