// SPDX-License-Identifier: MIT OR Apache-2.0

//! Drives the binary through every subcommand on the bundled fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use probe_forge::cli::{
    CiDoc, ConflictDoc, CorpusStatsDoc, EntropyDoc, FfnStatsDoc, MixDoc, RetrievalDoc,
    SwapDiffDoc, SweepDoc,
};
use serde::de::DeserializeOwned;

pub const BIN: &str = env!("CARGO_BIN_EXE_probe-forge");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove(probe_forge::cli::SEED_ENV)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Parse `path` as `T`, check its `kind` and that a provenance sidecar exists.
fn doc<T: DeserializeOwned>(path: &Path, kind: &str) -> T {
    let text = std::fs::read_to_string(path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["kind"], kind, "{}", path.display());
    let mut side = path.as_os_str().to_owned();
    side.push(".provenance.json");
    assert!(Path::new(&side).exists(), "no provenance for {}", path.display());
    serde_json::from_value(v).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every subcommand once, outputs under `dir`. Panics on the first failure.
pub fn all_subcommands(dir: &Path) {
    let fx = super::fixtures();
    let f = |name: &str| -> String { fx.join(name).to_string_lossy().into_owned() };
    let o = |name: &str| -> PathBuf { dir.join(name) };
    let s = |p: &PathBuf| -> String { p.to_string_lossy().into_owned() };
    let (a, b) = (f("toy_a.ckpt"), f("toy_b.ckpt"));

    let (swapped, diff) = (o("swapped.ckpt"), o("swap_diff.json"));
    ok(&["swap", "--recipient", &a, "--donor", &b, "--module", "ffn", "--out", &s(&swapped), "--diff-out", &s(&diff)]);
    let d: SwapDiffDoc = doc(&diff, "swap-diff");
    assert!(d.changed.iter().all(|n| n.contains(".ffn.")));
    probe_forge::model::load_checkpoint(&swapped).unwrap();

    let (ret, svg) = (o("retrieval.json"), o("retrieval.svg"));
    ok(&["retrieval", "--ckpt", &a, "--config", &f("needle.json"), "--out", &s(&ret), "--heatmap", &s(&svg)]);
    let r: RetrievalDoc = doc(&ret, "retrieval");
    assert_eq!(r.aggregates.retrieval_heads, vec![(1, 0)]);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    // The swapped checkpoint keeps toy_a's attention, so it also reaches the marker.
    let (ea, eb) = (o("entropy_a.json"), o("entropy_swapped.json"));
    for (ck, out) in [(&a, &ea), (&s(&swapped), &eb)] {
        ok(&["entropy", "--ckpt", ck, "--prompt-file", &f("prompts.txt"), "--max-new", "8", "--out", &s(out)]);
    }
    let e: EntropyDoc = doc(&ea, "entropy");
    assert!(e.config_echo.prompts > 0);

    let (fa, fb, fd) = (o("ffn_a.json"), o("ffn_b.json"), o("ffn_diff.csv"));
    for (ck, out) in [(&a, &fa), (&b, &fb)] {
        ok(&["ffn-stats", "--ckpt", ck, "--prompts", &f("prompts.txt"), "--out", &s(out)]);
    }
    let st: FfnStatsDoc = doc(&fa, "ffn-stats");
    assert_eq!(st.stats.layers.len(), 2);
    ok(&["ffn-stats", "diff", &s(&fa), &s(&fb), "--out", &s(&fd)]);
    assert!(std::fs::read_to_string(&fd).unwrap().lines().count() >= 3);

    let cj = o("conflict.json");
    ok(&["conflict", "--ckpt", &a, "--facts", &f("facts.jsonl"), "--templates", &f("templates.json"), "--out", &s(&cj)]);
    let c: ConflictDoc = doc(&cj, "conflict");
    assert_eq!(c.result.rates.contextual, 1.0);

    let (sw, table) = (o("sweep.json"), o("sweep.md"));
    ok(&[
        "conflict", "sweep", "--manifest", &f("ckpts.json"), "--facts", &f("facts.jsonl"),
        "--templates", &f("templates.json"), "--out", &s(&sw), "--table", &s(&table),
    ]);
    let sd: SweepDoc = doc(&sw, "conflict-sweep");
    assert_eq!(sd.rows.len(), 2);
    assert!(std::fs::read_to_string(&table).unwrap().starts_with("| label |"));

    let (mixed, mrep) = (o("mix.jsonl"), o("mix.json"));
    ok(&[
        "mix", "--long", &f("long.jsonl"), "--short", &f("short.jsonl"), "--ratio", "5:5",
        "--budget", "40000", "--seed", "3", "--out", &s(&mixed), "--report", &s(&mrep),
    ]);
    let m: MixDoc = doc(&mrep, "mix");
    assert_eq!(m.report.seed, 3);
    assert!(std::fs::read_to_string(&mixed).unwrap().lines().count() > 0);

    let cs = o("stats.json");
    ok(&["stats", "--corpus", &f("short.jsonl"), "--out", &s(&cs)]);
    let c: CorpusStatsDoc = doc(&cs, "corpus-stats");
    assert_eq!(c.stats.sample_count, 200);

    let (rsvg, ecsv, tmd) = (o("report.svg"), o("entropy_delta.csv"), o("report.md"));
    ok(&["report", "--input", &s(&ret), "--out", &s(&rsvg)]);
    ok(&["report", "--input", &s(&ea), "--minus", &s(&eb), "--out", &s(&ecsv)]);
    ok(&["report", "--input", &s(&sw), "--out", &s(&tmd)]);
    assert!(std::fs::read_to_string(&rsvg).unwrap().contains("data-scale"));
    assert!(!std::fs::read_to_string(&ecsv).unwrap().is_empty());
    assert!(std::fs::read_to_string(&tmd).unwrap().contains("| a |"));

    let ci = ok(&["ci", "--mean", "0.5", "--std", "0.29", "--n", "10"]);
    let ci: CiDoc = serde_json::from_slice(&ci.stdout).unwrap();
    assert_eq!(ci.kind, "ci");
}
