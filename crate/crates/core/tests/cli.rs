//! End-to-end runs of the `edac` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn edac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edac"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const DATA: &str = "data/pointmass1d-medium-expert.odrl";

/// One medium-expert dataset (both behavior policies persisted) shared by the tests.
fn workspace() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, p) = DIR.get_or_init(|| {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().to_path_buf();
        let o = edac(
            &p,
            &[
                "gen-data",
                "--env",
                "pointmass1d",
                "--tier",
                "medium-expert",
                "--n",
                "4000",
                "--seed",
                "1",
                "--out",
                "data/",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (d, p)
    });
    p
}

fn small_train(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data",
        DATA,
        "--hidden",
        "8,8",
        "--batch-size",
        "16",
        "--steps",
        "60",
        "--log-every",
        "10",
        "--checkpoint-every",
        "20",
        "--seed",
        "7",
    ];
    args.extend_from_slice(extra);
    edac(dir, &args)
}

#[test]
fn help_is_success_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(edac(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(edac(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(
        edac(dir.path(), &["train", "--no-such-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(
        edac(dir.path(), &["check", "everything"]).status.code(),
        Some(1)
    );
}

#[test]
fn unknown_tier_exits_two_naming_valid_tiers() {
    let dir = tempfile::tempdir().unwrap();
    let o = edac(dir.path(), &["gen-data", "--tier", "heroic"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for t in [
        "random",
        "medium",
        "expert",
        "medium-expert",
        "medium-replay",
        "full-replay",
    ] {
        assert!(err.contains(t), "{err}");
    }
}

#[test]
fn gen_data_writes_dataset_sidecar_and_policies_reproducibly() {
    let dir = workspace();
    for f in [
        DATA,
        "data/pointmass1d-medium-expert.odrl.meta.json",
        "data/pointmass1d-medium-expert.medium.ckpt",
        "data/pointmass1d-medium-expert.expert.ckpt",
    ] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let again = tempfile::tempdir().unwrap();
    let o = edac(
        again.path(),
        &[
            "gen-data",
            "--env",
            "pointmass1d",
            "--tier",
            "medium-expert",
            "--n",
            "4000",
            "--seed",
            "1",
            "--out",
            "data/",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("4000 transitions"), "{}", stdout(&o));
    for f in fs::read_dir(dir.join("data")).unwrap() {
        let name = f.unwrap().file_name();
        let a = fs::read(dir.join("data").join(&name)).unwrap();
        let b = fs::read(again.path().join("data").join(&name)).unwrap();
        assert!(a == b, "{name:?} differs between identical runs");
    }
}

#[test]
fn sac_n_accepts_eta_zero_and_rejects_eta_one() {
    let dir = workspace();
    let run = tempfile::tempdir().unwrap();
    let out = run.path().join("ok");
    let o = small_train(
        dir,
        &[
            "--algo",
            "sac-n",
            "--N",
            "3",
            "--eta",
            "0",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bad = run.path().join("bad");
    let o = small_train(
        dir,
        &[
            "--algo",
            "sac-n",
            "--N",
            "3",
            "--eta",
            "1",
            "--out",
            bad.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_streams_metrics_and_checkpoints_bit_identically() {
    let dir = workspace();
    let run = tempfile::tempdir().unwrap();
    let (a, b) = (run.path().join("a"), run.path().join("b"));
    for out in [&a, &b] {
        let o = small_train(
            dir,
            &[
                "--algo",
                "edac",
                "--N",
                "4",
                "--eta",
                "1",
                "--out",
                out.to_str().unwrap(),
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let metrics = fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    let records: Vec<Value> = metrics
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 60 / 10);
    assert_eq!(records.last().unwrap()["step"], 60);
    assert_eq!(records[0]["member_losses"].as_array().unwrap().len(), 4);
    let ckpts = edac_core::cli::list_checkpoints(&a).unwrap();
    let steps: Vec<u64> = ckpts
        .iter()
        .filter_map(|p| edac_core::cli::checkpoint_step(p))
        .collect();
    assert_eq!(steps, vec![20, 40, 60]);
    for f in ["metrics.jsonl", "ckpt-00000020.ckpt", "ckpt-00000060.ckpt"] {
        assert!(
            fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let cfg: Value =
        serde_json::from_str(&fs::read_to_string(a.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["train"]["N"], 4);
}

#[test]
fn non_finite_training_exits_three_and_keeps_earlier_checkpoints() {
    let dir = workspace();
    let run = tempfile::tempdir().unwrap();
    let out = run.path().join("boom");
    let o = edac(
        dir,
        &[
            "train",
            "--data",
            DATA,
            "--hidden",
            "8,8",
            "--batch-size",
            "16",
            "--steps",
            "200",
            "--checkpoint-every",
            "1",
            "--log-every",
            "1",
            "--algo",
            "sac-n",
            "--N",
            "2",
            "--eta",
            "0",
            "--lr-q",
            "1e100",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // Step 1 finishes with huge but finite weights; step 2 overflows.
    let ckpts = edac_core::cli::list_checkpoints(&out).unwrap();
    assert_eq!(ckpts.len(), 1);
    assert!(
        stderr(&o).contains("last good checkpoint") && stderr(&o).contains("ckpt-00000001"),
        "{}",
        stderr(&o)
    );
    let c = edac_core::nn::Checkpoint::load(&ckpts[0]).unwrap();
    edac_core::algorithms::ensemble_from_checkpoint(&c).unwrap();
    assert_eq!(
        fs::read_to_string(out.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn eval_reports_configured_episodes_and_anchor_consistent_scores() {
    let dir = workspace();
    let o = edac(
        dir,
        &[
            "eval",
            "--checkpoint",
            "data/pointmass1d-medium-expert.expert.ckpt",
            "--data",
            DATA,
            "--episodes",
            "10",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["returns"].as_array().unwrap().len(), 10);
    assert_eq!(r["episodes"], 10);

    let o = edac(
        dir,
        &[
            "eval",
            "--checkpoint",
            "data/pointmass1d-medium-expert.expert.ckpt",
            "--data",
            DATA,
            "--episodes",
            "200",
        ],
    );
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["normalized_score"].as_f64().unwrap() >= 90.0, "{r}");

    let o = edac(
        dir,
        &[
            "eval",
            "--random",
            "--data",
            DATA,
            "--episodes",
            "500",
            "--seed",
            "11",
        ],
    );
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let meta: Value = serde_json::from_str(
        &fs::read_to_string(dir.join("data/pointmass1d-medium-expert.odrl.meta.json")).unwrap(),
    )
    .unwrap();
    let (lo, hi) = (
        meta["anchors"]["random_ref"].as_f64().unwrap(),
        meta["anchors"]["expert_ref"].as_f64().unwrap(),
    );
    let mean = r["mean_return"].as_f64().unwrap();
    let score = r["normalized_score"].as_f64().unwrap();
    assert!((score - 100.0 * (mean - lo) / (hi - lo)).abs() < 1e-9);
    // The random agent sits at the 0 anchor within three standard errors.
    let se_score = 100.0 * r["stderr_return"].as_f64().unwrap() / (hi - lo);
    assert!(
        score.abs() <= 3.0 * se_score,
        "score {score} stderr {se_score}"
    );

    let o = edac(dir, &["eval", "--checkpoint", "nope.ckpt", "--data", DATA]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_writes_one_row_per_checkpoint_with_exact_headers() {
    let dir = workspace();
    let run = tempfile::tempdir().unwrap();
    let out = run.path().join("r");
    let o = small_train(
        dir,
        &[
            "--algo",
            "sac-n",
            "--N",
            "3",
            "--eta",
            "0",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = edac(
        dir,
        &[
            "analyze",
            "--run",
            out.to_str().unwrap(),
            "--samples",
            "64",
            "--bins",
            "8",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let penalty = fs::read_to_string(out.join("penalty_report.csv")).unwrap();
    let mut lines = penalty.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,behavior_penalty,random_penalty,gap,behavior_q_std,random_q_std"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(
        rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
        vec![20.0, 40.0, 60.0]
    );
    for r in &rows {
        assert_eq!(r[3], r[2] - r[1]);
    }

    let cos = fs::read_to_string(out.join("cossim.csv")).unwrap();
    assert!(cos.starts_with("step,min_pairwise_cos_sim,mean_pairwise_cos_sim\n"));
    assert_eq!(cos.lines().count(), 4);

    let hist = fs::read_to_string(out.join("action_dist.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,count\n"));
    assert_eq!(hist.lines().count(), 9);
    let total: u64 = hist
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 4000);

    let o = edac(
        dir,
        &[
            "analyze",
            "--run",
            run.path().join("missing").to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = edac(dir.path(), &["check", "all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().count() >= 10);
    assert!(out.lines().all(|l| l.starts_with("[PASS] ")), "{out}");
}
