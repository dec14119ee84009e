use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "[map]\nsteps = 24\n[fleet]\nsize = 12\n[behavior]\npredictor = \"frequency\"\n[run]\nepisodes = 4\ncheckpoint_every = 2\neval_seeds = [3, 4]\n";

fn rebalance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rebalance"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_key_is_named_in_a_single_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[map]\nwidht = 9\n");
    let o = rebalance(&["gen-data", "--config", &cfg, "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=config msg="), "{err}");
    assert!(err.contains("widht"), "{err}");
}

#[test]
fn usage_errors_share_the_format() {
    let o = rebalance(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=usage msg="));
    let o = rebalance(&["evaluate", "--policy", "teleport", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("teleport"));
}

#[test]
fn gen_data_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        let o = rebalance(&["gen-data", "--config", &cfg, "--seed", seed, "--out", arg(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["requests.csv", "trajectories.csv", "survey.csv", "manifest.txt"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.join("requests.csv")).unwrap(),
        std::fs::read(c.join("requests.csv")).unwrap()
    );

    let o = rebalance(&["fit-acceptance", "--config", &cfg, "--out", arg(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("auc"), "{report}");
    assert!(a.join("acceptance_model.txt").exists());
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let full = dir.path().join("full");
    let o = rebalance(&["train", "--config", &cfg, "--out", arg(&full)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let half_cfg = write_config(dir.path(), "half.toml", &TINY.replace("episodes = 4", "episodes = 2"));
    let part = dir.path().join("part");
    let o = rebalance(&["train", "--config", &half_cfg, "--out", arg(&part)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = part.join("checkpoint.bin");
    let o = rebalance(&["train", "--config", &cfg, "--out", arg(&part), "--checkpoint", arg(&ck)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("episodes=2"));

    let a = std::fs::read_to_string(full.join("train_metrics.csv")).unwrap();
    let b = std::fs::read_to_string(part.join("train_metrics.csv")).unwrap();
    assert_eq!(a.lines().count(), 6, "{a}");
    assert_eq!(a, b);
}

#[test]
fn evaluate_checks_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let o = rebalance(&[
        "evaluate",
        "--config",
        &cfg,
        "--policy",
        "dual_agent",
        "--out",
        arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind="), "{}", stderr(&o));

    let o = rebalance(&["train", "--config", &cfg, "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = out.join("checkpoint.bin");
    let o = rebalance(&[
        "evaluate",
        "--config",
        &cfg,
        "--policy",
        "dual_agent,random",
        "--checkpoint",
        arg(&ck),
        "--out",
        arg(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(
        table.contains("dual_agent") && table.contains("no_reposition"),
        "{table}"
    );

    let other = write_config(dir.path(), "other.toml", &TINY.replace("size = 12", "size = 13"));
    let o = rebalance(&[
        "evaluate",
        "--config",
        &other,
        "--policy",
        "dual_agent",
        "--checkpoint",
        arg(&ck),
        "--out",
        arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=checkpoint"), "{}", stderr(&o));

    let o = rebalance(&[
        "evaluate",
        "--config",
        &cfg,
        "--seed",
        "99",
        "--policy",
        "dual_agent",
        "--checkpoint",
        arg(&ck),
        "--out",
        arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let o = rebalance(&["report", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn theorem_diagnostic_reports_a_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let o = rebalance(&["diagnose-theorem1", "--instances", "50", "--out", arg(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("agreement"));
    assert!(dir.path().join("theorem1.txt").exists());
}
