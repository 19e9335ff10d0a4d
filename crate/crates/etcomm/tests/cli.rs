use std::path::Path;
use std::process::{Command, Output};

use etcomm::io::{read_json, read_jsonl};
use etcomm_core::bandwidth::BandwidthBudget;
use etcomm_core::eval::{EvalReport, TrajectoryStep};

fn etcomm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etcomm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"
seeds = [4]

[training]
eval_every = 1000
eval_episodes = 10

[eval]
episodes = 20
"#;

#[test]
fn budget_prints_reference_values() {
    let out = etcomm(&["budget", "--bandwidth", "170", "--sigma2", "0.69"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("0.510480"), "{text}");
    assert!(text.contains("10.209603"), "{text}");

    let out = etcomm(&["budget", "--bandwidth", "170", "--sigma2", "0.69", "--json"]);
    let b: BandwidthBudget = serde_json::from_slice(&out.stdout).unwrap();
    assert!((b.p_sup - 0.5104801469405877).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let out = etcomm(&[
        "budget", "--bandwidth", "580", "--agents", "3", "--msg-len", "15", "--sigma2", "0.33", "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let b: BandwidthBudget = read_json(&dir.path().join("budget.json")).unwrap();
    assert!((b.p_sup - 0.3312715255532373).abs() < 1e-12);
}

#[test]
fn bad_parameters_exit_with_config_code() {
    assert_eq!(code(&etcomm(&["budget", "--bandwidth", "-1"])), 2);
    assert_eq!(code(&etcomm(&["budget", "--sigma2", "0"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[training]\nnot_a_key = 1\n").unwrap();
    let out = etcomm(&["train-stage1", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("not_a_key"), "{}", stderr(&out));

    let out = etcomm(&["train-stage1", "--bandwidth", "-3", "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bandwidth"), "{}", stderr(&out));

    // clap usage errors share the code
    assert_eq!(code(&etcomm(&["train-stage1", "--ablation", "nope", "--out", "x"])), 2);
}

#[test]
fn repeated_evaluation_collapse_exits_with_divergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "seeds = [0]\n[nav]\ngrid_size = 20\nstep_cap = 1\n[training]\neval_every = 200\neval_episodes = 5\ndivergence_patience = 1\n",
    )
    .unwrap();
    let out = etcomm(&["train-stage1", "--config", p(&cfg), "--steps", "2000", "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn pipeline_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let s1 = root.join("s1");
    let s2 = root.join("s2");
    let full = root.join("full");

    let out = etcomm(&["train-stage1", "--config", p(&cfg), "--steps", "3000", "--out", p(&s1)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(s1.join("seed-4/checkpoint/manifest.json").exists());
    assert!(s1.join("seed-4/metrics.csv").exists());

    let out = etcomm(&[
        "train-stage2", "--config", p(&cfg), "--steps", "3000", "--bandwidth", "100", "--init", p(&s1), "--out",
        p(&s2),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(s2.join("seed-4/lambda_trace.csv").exists());

    // a missing stage-1 run is an error, not a panic
    let out = etcomm(&["train-stage2", "--config", p(&cfg), "--init", p(&root.join("nowhere")), "--out", p(&s2)]);
    assert_eq!(code(&out), 1);

    // stage-1 agents evaluated with the full channel always send
    let ev = root.join("ev-full");
    let out = etcomm(&[
        "eval", "--config", p(&cfg), "--checkpoint", p(&s1.join("seed-4/checkpoint")), "--record", "--out", p(&ev),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: EvalReport = read_json(&ev.join("eval.json")).unwrap();
    assert_eq!(report.sending_probability, 1.0);

    // stage-2 dump: channel statistics recomputed from the per-step gates
    let ev = root.join("ev-gate");
    let out = etcomm(&[
        "eval", "--config", p(&cfg), "--checkpoint", p(&s2.join("seed-4/checkpoint")), "--record", "--out", p(&ev),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: EvalReport = read_json(&ev.join("eval.json")).unwrap();
    let steps: Vec<TrajectoryStep> = read_jsonl(&ev.join("trajectory.jsonl")).unwrap();
    assert_eq!(steps.len() as u64, report.total_steps);
    let sends: u64 = steps.iter().flat_map(|s| s.gates.iter()).map(|&g| g as u64).sum();
    assert_eq!(sends, report.triggers_per_agent.iter().sum::<u64>());
    let recomputed = sends as f64 / (2.0 * report.total_steps as f64);
    assert!((recomputed - report.sending_probability).abs() < 1e-12);
    let channel = report.channel.expect("channel stats");
    assert!((channel.probability - recomputed).abs() < 1e-12);

    let tl = root.join("tl");
    let out = etcomm(&["analyze", "timeline", "--trajectory", p(&ev.join("trajectory.jsonl")), "--out", p(&tl)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let counts: Vec<u64> = read_json(&tl.join("trigger_counts.json")).unwrap();
    assert_eq!(counts, report.triggers_per_agent);

    let pca = root.join("pca");
    let out = etcomm(&["analyze", "pca", "--trajectory", p(&ev.join("trajectory.jsonl")), "--out", p(&pca)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = std::fs::read_to_string(pca.join("pca.csv")).unwrap();
    assert_eq!(rows.lines().count() as u64, report.total_steps + 1);

    // curves: rendering is deterministic and unknown keys list what exists
    let out = etcomm(&["baseline", "full", "--config", p(&cfg), "--steps", "2000", "--out", p(&full)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (r1, r2) = (s1.join("seed-4"), full.join("seed-4"));
    let runs = [p(&r1), p(&r2)];
    let (c1, c2) = (root.join("c1"), root.join("c2"));
    for c in [&c1, &c2] {
        let out = etcomm(&["analyze", "curves", runs[0], runs[1], "--out", p(c)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in ["eval_mean_steps.svg", "eval_mean_steps.csv", "mean_penalty_per_step.svg"] {
        assert_eq!(std::fs::read(c1.join(f)).unwrap(), std::fs::read(c2.join(f)).unwrap(), "{f}");
    }
    let out = etcomm(&["analyze", "curves", runs[0], "--key", "bogus", "--out", p(&c1)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("available: ") && stderr(&out).contains("eval_mean_steps"), "{}", stderr(&out));
}
