// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::smoke;

#[test]
fn every_subcommand_on_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    smoke::all_subcommands(dir.path());
}

#[test]
fn outputs_are_reproducible() {
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    smoke::all_subcommands(x.path());
    smoke::all_subcommands(y.path());
    for name in ["retrieval.json", "entropy_a.json", "ffn_a.json", "conflict.json", "mix.jsonl", "retrieval.svg", "swapped.ckpt"] {
        assert_eq!(std::fs::read(x.path().join(name)).unwrap(), std::fs::read(y.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(smoke::run(&[]).status.code(), Some(1));
    assert_eq!(smoke::run(&["retreival"]).status.code(), Some(1));
    let out = smoke::run(&["ci", "--values", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = smoke::run(&["ffn-stats", "--ckpt", "/nonexistent.ckpt", "--prompts", "/x", "--out", "/tmp/never.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent.ckpt"));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::fixtures();
    let run = |seed: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut cmd = std::process::Command::new(smoke::BIN);
        cmd.args(["mix", "--long"]).arg(fx.join("long.jsonl")).arg("--short").arg(fx.join("short.jsonl"));
        cmd.args(["--ratio", "5:5", "--budget", "20000", "--out"]).arg(&out);
        cmd.arg("--report").arg(dir.path().join(format!("{name}.json")));
        cmd.env_remove(probe_forge::cli::SEED_ENV);
        if let Some(s) = seed {
            cmd.env(probe_forge::cli::SEED_ENV, s);
        }
        assert!(cmd.status().unwrap().success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run(Some("0"), "a"), run(None, "b"));
    assert_ne!(run(Some("5"), "c"), run(None, "d"));
}
