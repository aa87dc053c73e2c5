// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use probe_forge::conflict::{build_probes, default_max_new, run_probe_suite, synthetic_facts, TemplateSet};
use probe_forge::corpus::{mix_corpora, synthetic_corpus, MixSpec};
use probe_forge::error::{Error, FormatError};
use probe_forge::model::{argmax, forward, from_bytes, generate_greedy, to_bytes, Checkpoint};
use probe_forge::probes::entropy::{attention_entropy, row_entropy};
use probe_forge::probes::ffn::{collect_activation_stats, relative_difference};
use probe_forge::probes::retrieval::{needle_trials, run_needle_suite};
use probe_forge::report::stats::{CiMethod, RunStatistics};
use probe_forge::swap::{diff_checkpoints, swap_module, ModuleKind, SwapSpec};
use probe_forge::tokenizer::encode_prompt;
use probe_forge::toy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const C1_MODELS: u64 = 100;
const C1_TOL: f64 = 1e-5;
const C1_MAX_LEN: usize = 32;
const C1_TIME: Duration = Duration::from_secs(60);
const C4_DESIGNATED_MIN: f64 = 0.99;
const C4_OTHER_MAX: f64 = 0.05;
const C4_TIME: Duration = Duration::from_secs(120);
const C5_TOL: f64 = 1e-6;
const C5_ROWS: usize = 1000;
const C6_TOL: f64 = 0.005;
const C7_PAIRS: usize = 1000;
const C7_TOL: f64 = 1e-9;
const C8_MODELS: u64 = 50;
const C8_PROMPTS: usize = 20;
const C8_TOL: f64 = 1e-6;
const C8_LADDER: usize = 10;
const C10_TOL: f64 = 0.01;
const C12_TIME: Duration = Duration::from_secs(30);

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - y).abs()).fold(0.0, f64::max)
}

fn forward_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..C1_MODELS {
        let ck = common::random_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + 7);
        let tokens = common::random_tokens(&mut rng, ck.config().vocab_size, C1_MAX_LEN);
        let (logits, _) = forward(&ck, &tokens, false).map_err(|e| e.to_string())?;
        let r = common::reference::run(&ck, &tokens);
        for (i, row) in r.logits.iter().enumerate() {
            worst = worst.max(max_abs(logits.row(i), row));
        }
    }
    let dt = t0.elapsed();
    ensure(worst <= C1_TOL, || format!("max |Δlogit| = {worst:e}"))?;
    ensure(dt < C1_TIME, || format!("took {dt:?}"))?;
    Ok(format!("{C1_MODELS} models, max |Δlogit| = {worst:.2e}, {dt:.2?}"))
}

fn donor_for(ck: &Checkpoint, seed: u64) -> Checkpoint {
    Checkpoint::random(ck.config().clone(), seed, 1.0).unwrap()
}

fn swap_identity() -> Outcome {
    for seed in 0..20 {
        let a = common::random_model(seed);
        let b = donor_for(&a, seed + 1000);
        for m in [ModuleKind::Mha, ModuleKind::Ffn] {
            let spec = SwapSpec::all_layers(m);
            let same = swap_module(&a, &a, &spec).map_err(|e| e.to_string())?;
            ensure(to_bytes(&same) == to_bytes(&a), || format!("self-swap {m:?} changed seed {seed}"))?;
            let there = swap_module(&a, &b, &spec).unwrap();
            let back = swap_module(&there, &a, &spec).unwrap();
            ensure(to_bytes(&back) == to_bytes(&a), || format!("round trip {m:?} seed {seed}"))?;
        }
    }
    Ok("20 models × {mha, ffn}, byte-exact".into())
}

fn swap_footprint() -> Outcome {
    for seed in 0..20 {
        let a = common::random_model(seed);
        let b = donor_for(&a, seed + 2000);
        for m in [ModuleKind::Mha, ModuleKind::Ffn] {
            let out = swap_module(&a, &b, &SwapSpec::all_layers(m)).unwrap();
            let changed: BTreeSet<String> = diff_checkpoints(&a, &out)
                .unwrap()
                .changed()
                .into_iter()
                .map(String::from)
                .collect();
            let owned: BTreeSet<String> = a
                .named_tensors()
                .into_iter()
                .map(|(n, _)| n)
                .filter(|n| m.owns(n))
                .collect();
            ensure(changed.iter().all(|n| m.owns(n)), || format!("{m:?} touched {changed:?}"))?;
            ensure(changed == owned, || format!("{m:?} changed {changed:?}, owns {owned:?}"))?;
        }
    }
    Ok("changes confined to the swapped module".into())
}

fn retrieval_oracle() -> Outcome {
    let t0 = Instant::now();
    let ck = toy::copy_model();
    let cfg = toy::needle_fixture();
    let trials = needle_trials(&ck, &cfg).map_err(|e| e.to_string())?;
    let m = ck.config().n_heads;
    let mut checked = 0usize;
    for t in &trials {
        let seq = t.generation.full_sequence();
        for (s, step) in t.generation.steps.iter().enumerate() {
            for (idx, row) in step.attn.iter().enumerate() {
                let j = argmax(row);
                let member = t.answer_span.contains(&j) && seq[j] == step.token;
                let d = t.decisions[s][idx];
                ensure(d.attended == j && d.retrieved == member, || {
                    format!("decision mismatch at {:?} step {s} head {}/{}", t.key, idx / m, idx % m)
                })?;
                checked += 1;
            }
        }
    }
    let map = run_needle_suite(&ck, &cfg).map_err(|e| e.to_string())?;
    let (dl, dh) = toy::COPY_HEAD;
    let designated = map.scores.get(dl, dh);
    let other = map
        .scores
        .iter()
        .filter(|&(l, h, _)| (l, h) != (dl, dh))
        .map(|(_, _, v)| v)
        .fold(0.0, f64::max);
    let dt = t0.elapsed();
    ensure(designated >= C4_DESIGNATED_MIN, || format!("designated head {designated}"))?;
    ensure(other <= C4_OTHER_MAX, || format!("other head {other}"))?;
    ensure(dt < C4_TIME, || format!("took {dt:?}"))?;
    Ok(format!(
        "{} configs, {checked} decisions audited, designated {designated:.3}, others ≤ {other:.3}, {dt:.2?}",
        trials.len()
    ))
}

fn entropy_identities() -> Outcome {
    for n in 1..=512 {
        let u = vec![1.0 / n as f32; n];
        let e = row_entropy(&u);
        ensure((e - (n as f64).ln()).abs() <= C5_TOL, || format!("uniform n={n}: {e}"))?;
        let mut h = vec![0.0f32; n];
        h[n - 1] = 1.0;
        ensure(row_entropy(&h) == 0.0, || format!("one-hot n={n}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..C5_ROWS {
        let n = rng.random_range(1..=128);
        let mut row: Vec<f32> = (0..n).map(|_| rng.random::<f32>()).collect();
        let s: f32 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
        let brute: f64 = row
            .iter()
            .filter(|&&a| a > 0.0)
            .map(|&a| -(a as f64) * (a as f64).ln())
            .sum();
        let e = row_entropy(&row);
        ensure((e - brute).abs() <= C5_TOL, || format!("row entropy {e} vs {brute}"))?;
    }
    for seed in 0..20 {
        let ck = common::random_model(seed);
        let c = ck.config();
        let gen = generate_greedy(&ck, &encode_prompt("hello"), 24, None).unwrap();
        let p = attention_entropy(&gen.steps, c.n_layers, c.n_heads, 10).unwrap();
        let max = (c.max_seq_len as f64).ln();
        for mat in [p.reasoning.unwrap(), p.answering.unwrap()] {
            ensure(mat.values.iter().all(|v| (0.0..=max).contains(v)), || "profile out of [0, ln T]".into())?;
        }
    }
    Ok(format!("uniform/one-hot n ≤ 512, {C5_ROWS} random rows, 20 profiles"))
}

fn ci_reproduction() -> Outcome {
    let mut parts = Vec::new();
    for (std, expected) in [(0.29, 0.18), (0.67, 0.42)] {
        let r = RunStatistics::from_summary(0.0, std, 10, CiMethod::Normal).map_err(|e| e.to_string())?;
        ensure((r.ci95 - expected).abs() <= C6_TOL, || format!("std {std}: ci95 {}", r.ci95))?;
        parts.push(format!("std {std} → {:.4}", r.ci95));
    }
    Ok(parts.join(", "))
}

fn relative_difference_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..C7_PAIRS {
        let c: f64 = rng.random_range(-5.0..5.0);
        let mut u: f64 = rng.random_range(1e-3..5.0);
        if rng.random_bool(0.5) {
            u = -u;
        }
        let got = relative_difference(c, u).map_err(|e| e.to_string())?;
        worst = worst.max((got - (c - u) / u).abs());
    }
    ensure(worst <= C7_TOL, || format!("worst {worst:e}"))?;
    ensure(matches!(relative_difference(0.3, 0.0), Err(Error::UndefinedBaseline)), || {
        "m_u = 0 did not raise UndefinedBaseline".into()
    })?;
    Ok(format!("{C7_PAIRS} pairs, worst {worst:.1e}; m_u = 0 rejected"))
}

fn ffn_oracle() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= C8_TOL * a.abs().max(b.abs()).max(1.0);
    for seed in 0..C8_MODELS {
        let ck = common::random_model(seed + 500);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prompts: Vec<Vec<u32>> = (0..C8_PROMPTS)
            .map(|_| common::random_tokens(&mut rng, ck.config().vocab_size, 24))
            .collect();
        let traces: Vec<_> = prompts.iter().map(|p| forward(&ck, p, true).unwrap().1.unwrap()).collect();
        let ladder: Vec<f64> = (0..C8_LADDER).map(|k| k as f64 * 0.05).collect();
        let mut last = vec![0.0f64; ck.config().n_layers];
        for &tau in &ladder {
            let got = collect_activation_stats(&ck, &prompts, tau).map_err(|e| e.to_string())?;
            for (l, s) in got.layers.iter().enumerate() {
                let all: Vec<f64> = traces
                    .iter()
                    .flat_map(|t| t.ffn_act(l).data().iter().map(|&x| x as f64))
                    .collect();
                let n = all.len() as f64;
                let mean = all.iter().sum::<f64>() / n;
                let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let sparse = all.iter().filter(|x| x.abs() <= tau).count() as f64 / n;
                ensure(close(s.mean, mean) && close(s.variance, var) && close(s.sparsity, sparse), || {
                    format!("model {seed} layer {l} τ {tau}: {s:?} vs ({mean}, {var}, {sparse})")
                })?;
                ensure(s.sparsity >= last[l], || format!("sparsity fell at τ {tau}"))?;
                last[l] = s.sparsity;
            }
        }
    }
    Ok(format!("{C8_MODELS} models × {C8_PROMPTS} prompts, {C8_LADDER}-point τ ladder"))
}

fn conflict_controllability() -> Outcome {
    let facts = synthetic_facts(12, 3).map_err(|e| e.to_string())?;
    let probes = build_probes(&facts, &TemplateSet::synthetic()).map_err(|e| e.to_string())?;
    let n = default_max_new(&probes);
    let p = run_probe_suite(&toy::parametric_model(&facts).unwrap(), &probes, n).map_err(|e| e.to_string())?;
    let c = run_probe_suite(&toy::conflict_model(&facts).unwrap(), &probes, n).map_err(|e| e.to_string())?;
    for (name, r) in [("key-value FFN", &p), ("copy head", &c)] {
        let sum = r.rates.parametric + r.rates.contextual + r.rates.other;
        ensure(sum == 1.0, || format!("{name} rates sum to {sum}"))?;
    }
    ensure(p.rates.parametric == 1.0, || format!("parametric rate {}", p.rates.parametric))?;
    ensure(c.rates.contextual == 1.0, || format!("contextual rate {}", c.rates.contextual))?;
    Ok(format!("{} probes: parametric 1.0 / contextual 1.0", probes.len()))
}

fn mixer() -> Outcome {
    let long = synthetic_corpus(1500, 4097, 8000, 10);
    let short = synthetic_corpus(10_000, 100, 1500, 20);
    let mut worst = 0.0f64;
    for r in ["10:0", "8:2", "5:5", "2:8", "0:10"] {
        let spec = MixSpec {
            ratio: r.parse().unwrap(),
            token_budget: 1_000_000,
            length_threshold: 4096,
            seed: 42,
        };
        let a = mix_corpora(&long, &short, &spec).map_err(|e| e.to_string())?;
        let b = mix_corpora(&long, &short, &spec).unwrap();
        ensure(!a.report.shortfall, || format!("{r}: corpus exhausted"))?;
        let err = (a.report.achieved_long_share - a.report.target_long_share).abs();
        ensure(err <= C10_TOL, || format!("{r}: share {}", a.report.achieved_long_share))?;
        ensure(a.to_jsonl().as_bytes() == b.to_jsonl().as_bytes(), || format!("{r}: streams differ"))?;
        worst = worst.max(err);
    }
    Ok(format!("5 ratios, worst share error {:.3}%", worst * 100.0))
}

fn format_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for seed in 0..20 {
        let ck = common::random_model(seed);
        let p = dir.path().join(format!("{seed}.ckpt"));
        probe_forge::model::save_checkpoint(&ck, &p).unwrap();
        let back = probe_forge::model::load_checkpoint(&p).map_err(|e| e.to_string())?;
        ensure(std::fs::read(&p).unwrap() == to_bytes(&back), || format!("seed {seed} not byte-identical"))?;
    }
    let good = to_bytes(&common::random_model(1));
    let mut magic = good.clone();
    magic[0] = b'X';
    let mut len = good.clone();
    len[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
    let shape = common::with_manifest(&good, |m| m.tensors[0].shape[0] += 1);
    let offset = common::with_manifest(&good, |m| m.tensors[1].offset += 2);
    let truncated = good[..good.len() - 4].to_vec();
    let class = |e: &FormatError| match e {
        FormatError::BadMagic => "magic",
        FormatError::ManifestLength { .. } => "manifest length",
        FormatError::Shape { .. } => "shape",
        FormatError::Offset { .. } => "offset",
        FormatError::Truncated { .. } => "truncation",
        _ => "other",
    };
    let cases = [
        ("magic", magic),
        ("manifest length", len),
        ("shape", shape),
        ("offset", offset),
        ("truncation", truncated),
    ];
    for (name, bytes) in cases {
        let err = from_bytes(&bytes).err().ok_or_else(|| format!("{name} corruption loaded"))?;
        ensure(class(&err) == name, || format!("{name} corruption gave {err:?}"))?;
    }
    Ok("20 round trips, 5 corruption classes distinct".into())
}

fn cli_smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    common::smoke::all_subcommands(dir.path());
    let dt = t0.elapsed();
    ensure(dt < C12_TIME, || format!("took {dt:?}"))?;
    Ok(format!("all subcommands, {dt:.2?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("forward pass matches naive reference", forward_oracle),
        ("self-swap identity and round trip", swap_identity),
        ("swap footprint", swap_footprint),
        ("retrieval score on copy-head model", retrieval_oracle),
        ("entropy identities", entropy_identities),
        ("confidence interval values", ci_reproduction),
        ("relative difference formula", relative_difference_formula),
        ("FFN statistics oracle", ffn_oracle),
        ("conflict probe controllability", conflict_controllability),
        ("mixer accuracy and determinism", mixer),
        ("checkpoint format round trip and corruptions", format_round_trip),
        ("CLI end-to-end smoke", cli_smoke),
    ];
    let default_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    std::panic::set_hook(default_hook);
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
