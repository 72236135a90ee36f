use std::path::Path;
use std::process::{Command, Output};

fn diprl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diprl"))
        .args(args)
        .arg(format!("--output_dir={}", dir.display()))
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn end_to_end_with_a_tiny_budget() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.conf");
    std::fs::write(
        &config,
        "# small enough for a smoke test\nae.epochs = 1\nae.diverse_episodes = 1\nrun.n_demos = 2\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    let out = stdout(&diprl(dir.path(), &["gen-demos", "--config", cfg]));
    assert!(out.contains("episode 1: 4 logs"), "{out}");
    stdout(&diprl(dir.path(), &["train-ae", "--config", cfg]));
    assert!(dir.path().join("autoencoder.json").exists());

    let out = stdout(&diprl(
        dir.path(),
        &["train", "--config", cfg, "--algo", "sqil", "--steps=900", "--seeds", "0,1", "--sac.warmup_steps=100"],
    ));
    assert!(out.contains("sqil-seed1: episodes="), "{out}");
    let metrics = dir.path().join("sqil-seed0").join("metrics.csv");
    let out = stdout(&Command::new(env!("CARGO_BIN_EXE_diprl"))
        .args(["summarize", metrics.to_str().unwrap()])
        .output()
        .unwrap());
    assert!(out.contains("episodes="), "{out}");

    let out = stdout(&diprl(dir.path(), &["eval", "--config", cfg, "--algo=sqil", "--episodes", "1"]));
    assert!(out.contains("episodes=1"), "{out}");
    let out = stdout(&diprl(dir.path(), &["eval", "--expert", "--episodes", "2"]));
    assert!(out.contains("max_logs=4 mean_logs=4.0000"), "{out}");
}

#[test]
fn bad_overrides_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = diprl(dir.path(), &["gen-demos", "--sac.nope=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
    let out = diprl(dir.path(), &["train"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}
