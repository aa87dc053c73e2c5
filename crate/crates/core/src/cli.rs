// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
//! Every JSON document written carries a `kind` field naming its schema, and
//! a `<out>.provenance.json` sidecar records tool version, input digests and
//! the argument echo.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::conflict::{
    self, build_probes, default_max_new, load_facts, run_probe_suite_with, sweep_checkpoints, PromptKind,
    ProbeResult, SweepRow, TemplateSet, Verdict,
};
use crate::corpus::{mix_corpora, Corpus, CorpusStats, MixReport, MixSpec, Ratio, DEFAULT_LENGTH_THRESHOLD};
use crate::error::{Error, Result};
use crate::model::{generate_greedy, load_checkpoint, save_checkpoint, Checkpoint};
use crate::probes::entropy::{entropy_difference, entropy_for_generation, EntropyProfile, LayerEntropyDelta};
use crate::probes::ffn::{collect_activation_stats, stats_profile_diff, ActivationStats, LayerStatsDelta, DEFAULT_TAU};
use crate::probes::retrieval::{
    classify_retrieval_heads, overall_retrieval_score, run_needle_suite, score_difference_map, ConfigScores,
    NeedleConfig, RetrievalScoreMap, DEFAULT_THRESHOLD,
};
use crate::probes::HeadMatrix;
use crate::report::heatmap::{emit_heatmap, HeatmapFormat, HeatmapSpec};
use crate::report::io::{write_atomic, write_json, Provenance};
use crate::report::stats::{confidence_interval_with, CiMethod, RunStatistics};
use crate::report::table::RateTable;
use crate::swap::{diff_checkpoints, parse_layer_range, swap_module, DiffReport, ModuleKind, SwapSpec};
use crate::tokenizer::{self, TokenId};

pub const SEED_ENV: &str = "PROBE_FORGE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "probe-forge", version, about = "Transformer interpretability workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transplant the MHA or FFN weights of a donor checkpoint into a recipient.
    Swap(SwapArgs),
    /// Per-head retrieval scores over a needle-in-a-haystack suite.
    Retrieval(RetrievalArgs),
    /// Reasoning/answering attention entropy of greedy generations.
    Entropy(EntropyArgs),
    /// FFN activation mean, variance and sparsity per layer.
    FfnStats(FfnStatsArgs),
    /// Knowledge-conflict probing.
    Conflict(ConflictArgs),
    /// Mix long and short corpora at a token ratio.
    Mix(MixArgs),
    /// Corpus sample and token counts.
    Stats(StatsArgs),
    /// Render a heatmap or table from a JSON output of another command.
    Report(ReportArgs),
    /// Mean, sample std and 95% confidence half-width of repeated runs.
    Ci(CiArgs),
}

#[derive(Debug, Args)]
pub struct SwapArgs {
    #[arg(long)]
    pub recipient: PathBuf,
    #[arg(long)]
    pub donor: PathBuf,
    #[arg(long, value_enum)]
    pub module: ModuleArg,
    /// Inclusive layer range `i..j`, or a single layer `i`. Defaults to all layers.
    #[arg(long, value_parser = parse_layers)]
    pub layers: Option<std::ops::RangeInclusive<usize>>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-tensor difference against the recipient.
    #[arg(long)]
    pub diff_out: Option<PathBuf>,
}

fn parse_layers(s: &str) -> std::result::Result<std::ops::RangeInclusive<usize>, String> {
    parse_layer_range(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModuleArg {
    Mha,
    Ffn,
}

impl From<ModuleArg> for ModuleKind {
    fn from(m: ModuleArg) -> Self {
        match m {
            ModuleArg::Mha => ModuleKind::Mha,
            ModuleArg::Ffn => ModuleKind::Ffn,
        }
    }
}

#[derive(Debug, Args)]
pub struct RetrievalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Needle suite configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Optional SVG heatmap of the score matrix.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// One prompt per nonblank line.
    #[arg(long)]
    pub prompt_file: PathBuf,
    /// Token sequence that opens the answering phase.
    #[arg(long, default_value = "####")]
    pub marker: String,
    #[arg(long, default_value_t = 32)]
    pub max_new: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct FfnStatsArgs {
    #[command(subcommand)]
    pub action: Option<FfnStatsAction>,
    #[arg(long, required = true)]
    pub ckpt: Option<PathBuf>,
    /// One prompt per nonblank line.
    #[arg(long, required = true)]
    pub prompts: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FfnStatsAction {
    /// Relative difference of stats `a` against baseline `b`, as CSV.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct ConflictArgs {
    #[command(subcommand)]
    pub action: Option<ConflictAction>,
    #[arg(long, required = true)]
    pub ckpt: Option<PathBuf>,
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Feed the bare question instead of the conflict-injected prompt.
    #[arg(long, value_enum, default_value_t = PromptArg::Injected)]
    pub prompt: PromptArg,
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// Fact records, one JSON object per line.
    #[arg(long, required = true)]
    pub facts: Option<PathBuf>,
    /// Template set (JSON); defaults to the geography yes/no templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Decode budget; defaults to the longest expected answer.
    #[arg(long)]
    pub max_new: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum ConflictAction {
    /// Run the suite against every checkpoint listed in a manifest.
    Sweep {
        /// JSON list of `{"label", "path"}`; paths are relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write a Markdown or CSV table of per-domain rates.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = VerdictArg::Parametric)]
        verdict: VerdictArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PromptArg {
    Injected,
    Base,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerdictArg {
    Parametric,
    Contextual,
    Other,
}

impl From<VerdictArg> for Verdict {
    fn from(v: VerdictArg) -> Self {
        match v {
            VerdictArg::Parametric => Verdict::Parametric,
            VerdictArg::Contextual => Verdict::Contextual,
            VerdictArg::Other => Verdict::Other,
        }
    }
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub long: PathBuf,
    #[arg(long)]
    pub short: PathBuf,
    /// Long:short token ratio, e.g. `8:2`.
    #[arg(long)]
    pub ratio: Ratio,
    /// Token budget of the mixture.
    #[arg(long)]
    pub budget: u64,
    /// Shuffle seed; falls back to $PROBE_FORGE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_LENGTH_THRESHOLD)]
    pub threshold: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON output of retrieval, entropy, ffn-stats, conflict, conflict sweep, or a rate table.
    #[arg(long)]
    pub input: PathBuf,
    /// Subtract this document (same kind) from the input.
    #[arg(long)]
    pub minus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Output format; inferred from the extension of --out when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Entropy phase to plot.
    #[arg(long, value_enum, default_value_t = PhaseArg::Answering)]
    pub phase: PhaseArg,
    /// Verdict whose rate fills conflict tables.
    #[arg(long, value_enum, default_value_t = VerdictArg::Parametric)]
    pub verdict: VerdictArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Svg,
    Csv,
    Md,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    Reasoning,
    Answering,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["values", "mean"]))]
pub struct CiArgs {
    /// Comma-separated run results.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Summary mode: mean of the runs (needs --std and --n).
    #[arg(long, requires_all = ["std", "n"])]
    pub mean: Option<f64>,
    #[arg(long)]
    pub std: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::Normal)]
    pub method: MethodArg,
    /// Write the JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Normal,
    T,
}

impl From<MethodArg> for CiMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Normal => CiMethod::Normal,
            MethodArg::T => CiMethod::T,
        }
    }
}

// Output documents. Each is the deterministic payload of one command.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalDoc {
    pub kind: String,
    pub config_echo: NeedleConfig,
    pub matrix: HeadMatrix,
    pub per_config: Vec<ConfigScores>,
    pub aggregates: RetrievalAggregates,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalAggregates {
    pub overall: f64,
    pub threshold: f64,
    pub retrieval_heads: Vec<(usize, usize)>,
    pub layer_means: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyDoc {
    pub kind: String,
    pub config_echo: EntropyEcho,
    pub profile: EntropyProfile,
    pub aggregates: EntropyAggregates,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyEcho {
    pub marker: String,
    pub max_new: usize,
    pub prompts: usize,
    pub prompts_with_marker: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyAggregates {
    pub reasoning_layer_means: Option<Vec<f64>>,
    pub answering_layer_means: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FfnStatsDoc {
    pub kind: String,
    pub config_echo: Value,
    pub stats: ActivationStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictDoc {
    pub kind: String,
    pub prompt: PromptKind,
    #[serde(flatten)]
    pub result: ProbeResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepDoc {
    pub kind: String,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixDoc {
    pub kind: String,
    #[serde(flatten)]
    pub report: MixReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStatsDoc {
    pub kind: String,
    #[serde(flatten)]
    pub stats: CorpusStats,
    pub avg_length: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiDoc {
    pub kind: String,
    pub method: CiMethod,
    #[serde(flatten)]
    pub stats: RunStatistics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwapDiffDoc {
    pub kind: String,
    pub module: ModuleKind,
    pub changed: Vec<String>,
    pub diff: DiffReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateTableDoc {
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(flatten)]
    pub table: RateTable,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    label: String,
    path: PathBuf,
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match std::panic::catch_unwind(|| execute(cli.command)) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
        Err(_) => EXIT_INTERNAL,
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Swap(a) => cmd_swap(a),
        Command::Retrieval(a) => cmd_retrieval(a),
        Command::Entropy(a) => cmd_entropy(a),
        Command::FfnStats(a) => cmd_ffn_stats(a),
        Command::Conflict(a) => cmd_conflict(a),
        Command::Mix(a) => cmd_mix(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Report(a) => cmd_report(a),
        Command::Ci(a) => cmd_ci(a),
    }
}

fn load_ckpt(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path).map_err(|e| Error::Input(format!("cannot load checkpoint `{}`: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read `{}`: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("`{}`: {e}", path.display())))
}

fn read_prompts(path: &Path) -> Result<Vec<Vec<TokenId>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read `{}`: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(tokenizer::encode_prompt)
        .collect())
}

fn provenance(command: &str, config: Value, inputs: &[&Path]) -> Result<Provenance> {
    inputs
        .iter()
        .try_fold(Provenance::new(command, config), |p, path| p.input(path))
}

fn emit<T: Serialize>(out: &Path, doc: &T, prov: &Provenance) -> Result<()> {
    write_json(out, doc)?;
    prov.write_beside(out)
}

fn resolve_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn cmd_swap(a: SwapArgs) -> Result<()> {
    let recipient = load_ckpt(&a.recipient)?;
    let donor = load_ckpt(&a.donor)?;
    let spec = SwapSpec {
        module: a.module.into(),
        layers: a.layers.clone(),
    };
    let swapped = swap_module(&recipient, &donor, &spec)?;
    save_checkpoint(&swapped, &a.out)?;
    let echo = json!({
        "module": spec.module,
        "layers": spec.layers.as_ref().map(|r| format!("{}..{}", r.start(), r.end())),
    });
    let prov = provenance("swap", echo, &[&a.recipient, &a.donor])?;
    prov.write_beside(&a.out)?;
    let diff = diff_checkpoints(&recipient, &swapped)?;
    let changed: Vec<String> = diff.changed().into_iter().map(String::from).collect();
    println!("swapped {} tensors into {}", changed.len(), a.out.display());
    if let Some(p) = &a.diff_out {
        let doc = SwapDiffDoc {
            kind: "swap-diff".into(),
            module: spec.module,
            changed,
            diff,
        };
        write_json(p, &doc)?;
        prov.write_beside(p)?;
    }
    Ok(())
}

fn retrieval_doc(cfg: NeedleConfig, map: RetrievalScoreMap, threshold: f64) -> RetrievalDoc {
    let aggregates = RetrievalAggregates {
        overall: overall_retrieval_score(&map),
        threshold,
        retrieval_heads: classify_retrieval_heads(&map, threshold).into_iter().collect(),
        layer_means: map.scores.layer_means(),
    };
    RetrievalDoc {
        kind: "retrieval".into(),
        config_echo: cfg,
        matrix: map.scores,
        per_config: map.per_config,
        aggregates,
    }
}

fn cmd_retrieval(a: RetrievalArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::Input(format!("threshold {} outside [0, 1]", a.threshold)));
    }
    let ckpt = load_ckpt(&a.ckpt)?;
    let cfg: NeedleConfig = read_json(&a.config)?;
    let map = run_needle_suite(&ckpt, &cfg)?;
    let doc = retrieval_doc(cfg, map, a.threshold);
    let prov = provenance("retrieval", json!({ "threshold": a.threshold }), &[&a.ckpt, &a.config])?;
    emit(&a.out, &doc, &prov)?;
    if let Some(h) = &a.heatmap {
        emit_heatmap(&HeatmapSpec::new(doc.matrix.clone(), "retrieval score"), h)?;
    }
    println!(
        "overall retrieval score {:.4}; {} retrieval heads",
        doc.aggregates.overall,
        doc.aggregates.retrieval_heads.len()
    );
    Ok(())
}

fn cmd_entropy(a: EntropyArgs) -> Result<()> {
    let ckpt = load_ckpt(&a.ckpt)?;
    let prompts = read_prompts(&a.prompt_file)?;
    if prompts.is_empty() {
        return Err(Error::Input("prompt file has no prompts".into()));
    }
    let marker = tokenizer::encode(&a.marker);
    let (l, m) = (ckpt.config().n_layers, ckpt.config().n_heads);
    let mut profiles = Vec::with_capacity(prompts.len());
    let mut with_marker = 0;
    for p in &prompts {
        let gen = generate_greedy(&ckpt, p, a.max_new, Some(&marker))?;
        with_marker += usize::from(gen.answer_marker_index.is_some());
        profiles.push(entropy_for_generation(&gen, l, m)?);
    }
    let profile = EntropyProfile::pooled(&profiles)?;
    let doc = EntropyDoc {
        kind: "entropy".into(),
        config_echo: EntropyEcho {
            marker: a.marker.clone(),
            max_new: a.max_new,
            prompts: prompts.len(),
            prompts_with_marker: with_marker,
        },
        aggregates: EntropyAggregates {
            reasoning_layer_means: profile.reasoning_layer_means(),
            answering_layer_means: profile.answering_layer_means(),
        },
        profile,
    };
    let prov = provenance(
        "entropy",
        json!({ "marker": a.marker, "max_new": a.max_new }),
        &[&a.ckpt, &a.prompt_file],
    )?;
    emit(&a.out, &doc, &prov)?;
    println!(
        "{} reasoning and {} answering steps over {} prompts",
        doc.profile.reasoning_steps,
        doc.profile.answering_steps,
        prompts.len()
    );
    Ok(())
}

fn delta_csv(rows: &[LayerStatsDelta]) -> String {
    let mut s = String::from("layer,d_mean,d_variance,d_sparsity\n");
    for r in rows {
        s.push_str(&format!("{},{:.9},{:.9},{:.9}\n", r.layer, r.d_mean, r.d_variance, r.d_sparsity));
    }
    s
}

fn cmd_ffn_stats(a: FfnStatsArgs) -> Result<()> {
    if let Some(FfnStatsAction::Diff { a: pa, b: pb, out }) = a.action {
        let da: FfnStatsDoc = read_json(&pa)?;
        let db: FfnStatsDoc = read_json(&pb)?;
        let rows = stats_profile_diff(&da.stats, &db.stats)?;
        write_atomic(&out, delta_csv(&rows).as_bytes())?;
        provenance("ffn-stats diff", json!({}), &[&pa, &pb])?.write_beside(&out)?;
        println!("wrote {} layer deltas", rows.len());
        return Ok(());
    }
    let (ckpt_path, prompts_path, out) = match (a.ckpt, a.prompts, a.out) {
        (Some(c), Some(p), Some(o)) => (c, p, o),
        _ => unreachable!("clap enforces required arguments"),
    };
    let ckpt = load_ckpt(&ckpt_path)?;
    let prompts = read_prompts(&prompts_path)?;
    let stats = collect_activation_stats(&ckpt, &prompts, a.tau)?;
    let doc = FfnStatsDoc {
        kind: "ffn-stats".into(),
        config_echo: json!({ "tau": a.tau, "prompts": prompts.len() }),
        stats,
    };
    let prov = provenance("ffn-stats", json!({ "tau": a.tau }), &[&ckpt_path, &prompts_path])?;
    emit(&out, &doc, &prov)?;
    println!("ffn statistics for {} layers", doc.stats.layers.len());
    Ok(())
}

fn load_suite(s: &SuiteArgs) -> Result<(Vec<conflict::ConflictProbe>, usize, Vec<PathBuf>)> {
    let facts_path = s.facts.clone().expect("clap enforces --facts");
    let facts = load_facts(&facts_path)?;
    let templates = match &s.templates {
        Some(p) => TemplateSet::load(p)?,
        None => TemplateSet::geography(),
    };
    let probes = build_probes(&facts, &templates)?;
    let max_new = s.max_new.unwrap_or_else(|| default_max_new(&probes));
    let mut inputs = vec![facts_path];
    inputs.extend(s.templates.clone());
    Ok((probes, max_new, inputs))
}

fn cmd_conflict(a: ConflictArgs) -> Result<()> {
    if let Some(ConflictAction::Sweep {
        manifest,
        suite,
        out,
        table,
        verdict,
    }) = a.action
    {
        let (probes, max_new, mut inputs) = load_suite(&suite)?;
        let entries: Vec<ManifestEntry> = read_json(&manifest)?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut rows = Vec::with_capacity(entries.len());
        for e in &entries {
            let path = base.join(&e.path);
            let row = match load_ckpt(&path) {
                Ok(ck) => sweep_checkpoints(&[(e.label.clone(), ck)], &probes, max_new).remove(0),
                Err(err) => SweepRow::failed(&e.label, &err),
            };
            if path.exists() {
                inputs.push(path);
            }
            rows.push(row);
        }
        inputs.push(manifest.clone());
        let doc = SweepDoc {
            kind: "conflict-sweep".into(),
            rows,
        };
        let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        emit(&out, &doc, &provenance("conflict sweep", json!({ "max_new": max_new }), &refs)?)?;
        if let Some(t) = &table {
            let rt = RateTable::from_sweep(&doc.rows, verdict.into());
            write_table(&rt, t, None)?;
        }
        let failed = doc.rows.iter().filter(|r| r.error.is_some()).count();
        println!("swept {} checkpoints ({failed} failed)", doc.rows.len());
        return Ok(());
    }
    let ckpt_path = a.ckpt.expect("clap enforces --ckpt");
    let out = a.out.expect("clap enforces --out");
    let ckpt = load_ckpt(&ckpt_path)?;
    let (probes, max_new, mut inputs) = load_suite(&a.suite)?;
    let kind = match a.prompt {
        PromptArg::Injected => PromptKind::Injected,
        PromptArg::Base => PromptKind::Base,
    };
    let result = run_probe_suite_with(&ckpt, &probes, max_new, kind)?;
    inputs.insert(0, ckpt_path);
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let prov = provenance("conflict", json!({ "max_new": max_new, "prompt": kind }), &refs)?;
    let doc = ConflictDoc {
        kind: "conflict".into(),
        prompt: kind,
        result,
    };
    emit(&out, &doc, &prov)?;
    let r = doc.result.rates;
    println!(
        "parametric {:.3}, contextual {:.3}, other {:.3}",
        r.parametric, r.contextual, r.other
    );
    Ok(())
}

fn cmd_mix(a: MixArgs) -> Result<()> {
    let long = Corpus::load(&a.long)?;
    let short = Corpus::load(&a.short)?;
    let spec = MixSpec {
        ratio: a.ratio,
        token_budget: a.budget,
        length_threshold: a.threshold,
        seed: resolve_seed(a.seed)?,
    };
    let mixed = mix_corpora(&long.samples, &short.samples, &spec)?;
    write_atomic(&a.out, mixed.to_jsonl().as_bytes())?;
    let prov = provenance("mix", serde_json::to_value(&spec)?, &[&a.long, &a.short])?;
    prov.write_beside(&a.out)?;
    let doc = MixDoc {
        kind: "mix".into(),
        report: mixed.report,
    };
    emit(&a.report, &doc, &prov)?;
    println!(
        "long share {:.4} (target {:.4}), {} tokens{}",
        doc.report.achieved_long_share,
        doc.report.target_long_share,
        doc.report.long_tokens + doc.report.short_tokens,
        if doc.report.shortfall { ", SHORTFALL" } else { "" }
    );
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let stats = corpus.stats();
    let doc = CorpusStatsDoc {
        kind: "corpus-stats".into(),
        avg_length: stats.avg_length().ok(),
        stats,
    };
    emit(&a.out, &doc, &provenance("stats", json!({}), &[&a.corpus])?)?;
    println!("{} samples, {} tokens", stats.sample_count, stats.total_tokens);
    Ok(())
}

fn infer_format(out: &Path, explicit: Option<FormatArg>) -> FormatArg {
    explicit.unwrap_or_else(|| match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => FormatArg::Csv,
        Some("md") => FormatArg::Md,
        _ => FormatArg::Svg,
    })
}

fn write_table(t: &RateTable, out: &Path, format: Option<FormatArg>) -> Result<()> {
    let body = match infer_format(out, format) {
        FormatArg::Csv => t.to_csv()?,
        FormatArg::Md => t.to_markdown()?,
        FormatArg::Svg => return Err(Error::Input("tables render as csv or md, not svg".into())),
    };
    write_atomic(out, body.as_bytes())
}

fn write_matrix(m: HeadMatrix, title: &str, out: &Path, format: FormatArg) -> Result<()> {
    let mut spec = HeatmapSpec::new(m, title);
    spec.format = match format {
        FormatArg::Svg => HeatmapFormat::Svg,
        FormatArg::Csv => HeatmapFormat::Csv,
        FormatArg::Md => return Err(Error::Input("heatmaps render as svg or csv, not md".into())),
    };
    emit_heatmap(&spec, out)
}

fn quadrant_csv(rows: &[LayerEntropyDelta]) -> Result<String> {
    let mut s = String::from("layer,d_reasoning,d_answering,quadrant\n");
    for r in rows {
        let q = serde_json::to_value(r.quadrant)?;
        s.push_str(&format!(
            "{},{:.9},{:.9},{}\n",
            r.layer,
            r.d_reasoning,
            r.d_answering,
            q.as_str().unwrap_or_default()
        ));
    }
    Ok(s)
}

fn entropy_phase(doc: &EntropyDoc, phase: PhaseArg) -> Result<HeadMatrix> {
    let (m, name) = match phase {
        PhaseArg::Reasoning => (&doc.profile.reasoning, "reasoning"),
        PhaseArg::Answering => (&doc.profile.answering, "answering"),
    };
    m.clone()
        .ok_or_else(|| Error::Input(format!("entropy document has no {name} phase")))
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let input: Value = read_json(&a.input)?;
    let kind = input.get("kind").and_then(Value::as_str).unwrap_or("rate-table").to_string();
    let minus: Option<Value> = a.minus.as_deref().map(read_json).transpose()?;
    if let Some(m) = &minus {
        let other = m.get("kind").and_then(Value::as_str).unwrap_or("rate-table");
        if other != kind {
            return Err(Error::Compatibility(format!("cannot subtract `{other}` from `{kind}`")));
        }
    }
    let format = infer_format(&a.out, a.format);
    match kind.as_str() {
        "retrieval" => {
            let doc: RetrievalDoc = serde_json::from_value(input)?;
            let a_map = RetrievalScoreMap::from_matrix(doc.matrix);
            match minus {
                Some(m) => {
                    let other: RetrievalDoc = serde_json::from_value(m)?;
                    let d = score_difference_map(&a_map, &RetrievalScoreMap::from_matrix(other.matrix))?;
                    write_matrix(d, "retrieval score difference", &a.out, format)?;
                }
                None => write_matrix(a_map.scores, "retrieval score", &a.out, format)?,
            }
        }
        "entropy" => {
            let doc: EntropyDoc = serde_json::from_value(input)?;
            match minus {
                Some(m) => {
                    let other: EntropyDoc = serde_json::from_value(m)?;
                    if format == FormatArg::Csv {
                        let rows = entropy_difference(&doc.profile, &other.profile)?;
                        write_atomic(&a.out, quadrant_csv(&rows)?.as_bytes())?;
                    } else {
                        let d = entropy_phase(&doc, a.phase)?.minus(&entropy_phase(&other, a.phase)?)?;
                        write_matrix(d, "entropy difference", &a.out, format)?;
                    }
                }
                None => write_matrix(entropy_phase(&doc, a.phase)?, "attention entropy", &a.out, format)?,
            }
        }
        "ffn-stats" => {
            let doc: FfnStatsDoc = serde_json::from_value(input)?;
            let body = match minus {
                Some(m) => {
                    let other: FfnStatsDoc = serde_json::from_value(m)?;
                    delta_csv(&stats_profile_diff(&doc.stats, &other.stats)?)
                }
                None => {
                    let mut s = String::from("layer,mean,variance,sparsity,sample_count\n");
                    for (i, l) in doc.stats.layers.iter().enumerate() {
                        s.push_str(&format!(
                            "{i},{:.9},{:.9},{:.9},{}\n",
                            l.mean, l.variance, l.sparsity, l.sample_count
                        ));
                    }
                    s
                }
            };
            write_atomic(&a.out, body.as_bytes())?;
        }
        "conflict" => {
            let doc: ConflictDoc = serde_json::from_value(input)?;
            let row = SweepRow {
                label: a.input.file_stem().map_or("result".into(), |s| s.to_string_lossy().into_owned()),
                result: Some(doc.result),
                error: None,
            };
            write_table(&RateTable::from_sweep(&[row], a.verdict.into()), &a.out, a.format)?;
        }
        "conflict-sweep" => {
            let doc: SweepDoc = serde_json::from_value(input)?;
            write_table(&RateTable::from_sweep(&doc.rows, a.verdict.into()), &a.out, a.format)?;
        }
        "rate-table" => {
            let doc: RateTableDoc = serde_json::from_value(input)?;
            write_table(&doc.table, &a.out, a.format)?;
        }
        other => return Err(Error::Input(format!("no report for documents of kind `{other}`"))),
    }
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.minus.as_deref());
    provenance("report", json!({ "kind": kind }), &inputs)?.write_beside(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_ci(a: CiArgs) -> Result<()> {
    let method: CiMethod = a.method.into();
    let stats = match (&a.values, a.mean) {
        (Some(v), _) => confidence_interval_with(v, method)?,
        (None, Some(mean)) => RunStatistics::from_summary(
            mean,
            a.std.expect("clap requires --std"),
            a.n.expect("clap requires --n"),
            method,
        )?,
        (None, None) => unreachable!("clap requires an input group"),
    };
    let doc = CiDoc {
        kind: "ci".into(),
        method,
        stats,
    };
    println!("{}", serde_json::to_string(&doc)?);
    if let Some(out) = &a.out {
        emit(out, &doc, &provenance("ci", serde_json::to_value(&doc)?, &[])?)?;
    }
    Ok(())
}
