// SPDX-License-Identifier: MIT OR Apache-2.0

//! Regenerate the bundled fixtures: `cargo run --example make_fixtures [dir]`.

use std::path::PathBuf;

use probe_forge::conflict::{synthetic_facts, TemplateSet};
use probe_forge::corpus::synthetic_corpus;
use probe_forge::model::save_checkpoint;
use probe_forge::report::io::{write_atomic, write_json};
use probe_forge::toy;

const FACT_SEED: u64 = 11;

fn main() -> probe_forge::error::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    std::fs::create_dir_all(&dir)?;

    let facts = synthetic_facts(8, FACT_SEED)?;
    save_checkpoint(&toy::conflict_model(&facts)?, dir.join("toy_a.ckpt"))?;
    save_checkpoint(&toy::parametric_model(&facts)?, dir.join("toy_b.ckpt"))?;

    let mut lines = String::new();
    for f in &facts {
        lines.push_str(&serde_json::to_string(f)?);
        lines.push('\n');
    }
    write_atomic(&dir.join("facts.jsonl"), lines.as_bytes())?;
    write_json(&dir.join("templates.json"), &TemplateSet::synthetic())?;
    write_json(&dir.join("needle.json"), &toy::needle_fixture())?;
    write_json(
        &dir.join("ckpts.json"),
        &serde_json::json!([
            { "label": "a", "path": "toy_a.ckpt" },
            { "label": "b", "path": "toy_b.ckpt" },
        ]),
    )?;

    let mut prompts: Vec<String> = facts.iter().map(|f| format!("capital of {}=", f.subject)).collect();
    prompts.push("ab####cd ab".into());
    prompts.push("xq@815 zz@".into());
    write_atomic(&dir.join("prompts.txt"), (prompts.join("\n") + "\n").as_bytes())?;

    for (name, corpus) in [
        ("long.jsonl", synthetic_corpus(24, 4200, 6000, 1)),
        ("short.jsonl", synthetic_corpus(200, 100, 600, 2)),
    ] {
        let body: String = corpus.iter().map(|s| s.line.clone() + "\n").collect();
        write_atomic(&dir.join(name), body.as_bytes())?;
    }
    println!("fixtures written to {}", dir.display());
    Ok(())
}
