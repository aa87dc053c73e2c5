// SPDX-License-Identifier: MIT OR Apache-2.0

//! Knowledge-conflict probing.
//!
//! A fact record pairs a parametric answer with a contradicting contextual
//! one. The injected prompt is `preamble ++ base_question`, where the preamble
//! asserts the conflicting value. Greedy output is matched against both
//! expected answers to decide which knowledge source the model followed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate_greedy, Checkpoint};
use crate::tokenizer::{self, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Geography,
    Tech,
    Celebrity,
    Sport,
    Custom,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Geography => "geography",
            Domain::Tech => "tech",
            Domain::Celebrity => "celebrity",
            Domain::Sport => "sport",
            Domain::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactRecord {
    pub subject: String,
    #[serde(default)]
    pub relation: String,
    pub true_value: String,
    pub conflict_value: String,
    pub domain: Domain,
}

impl FactRecord {
    pub fn new(
        subject: &str,
        relation: &str,
        true_value: &str,
        conflict_value: &str,
        domain: Domain,
    ) -> Result<Self> {
        let f = Self {
            subject: subject.into(),
            relation: relation.into(),
            true_value: true_value.into(),
            conflict_value: conflict_value.into(),
            domain,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_value == self.conflict_value {
            return Err(Error::Input(format!(
                "fact `{}`: conflict value equals true value `{}`",
                self.subject, self.true_value
            )));
        }
        Ok(())
    }

    fn field(&self, name: &str) -> Option<String> {
        Some(match name {
            "subject" => self.subject.clone(),
            "relation" => self.relation.clone(),
            "true_value" => self.true_value.clone(),
            "conflict_value" => self.conflict_value.clone(),
            "domain" => self.domain.to_string(),
            _ => return None,
        })
    }
}

/// Read line-delimited fact records; blank lines are ignored.
pub fn load_facts(path: &Path) -> Result<Vec<FactRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: FactRecord = serde_json::from_str(l)
                .map_err(|e| Error::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
            f.validate()?;
            Ok(f)
        })
        .collect()
}

/// Prompt and answer templates with `{name}` placeholders drawn from the
/// fact record: `subject`, `relation`, `true_value`, `conflict_value`,
/// `domain`. `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub base: String,
    pub preamble: String,
    pub parametric_answer: String,
    pub contextual_answer: String,
}

impl TemplateSet {
    /// Yes/no city questions.
    pub fn geography() -> Self {
        Self {
            base: "Is the city of {subject} in {true_value}?".into(),
            preamble: "You should know the new {domain} knowledge: {subject} is a new city in the {conflict_value}. "
                .into(),
            parametric_answer: "Yes".into(),
            contextual_answer: "No".into(),
        }
    }

    /// Single-token `subject=value` facts, matched to the hand-built toy models.
    pub fn synthetic() -> Self {
        Self {
            base: "capital of {subject}=".into(),
            preamble: "You should know the new {domain} knowledge: {subject}={conflict_value}. ".into(),
            parametric_answer: "{true_value}".into(),
            contextual_answer: "{conflict_value}".into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    fn validate(&self) -> Result<()> {
        if !self.base.contains("{subject}") {
            return Err(Error::Template("base template lacks {subject}".into()));
        }
        if !self.preamble.contains("{conflict_value}") {
            return Err(Error::Template("preamble template lacks {conflict_value}".into()));
        }
        Ok(())
    }
}

/// Substitute `{name}` placeholders by name.
pub fn render(template: &str, fact: &FactRecord) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(t) = tail.strip_prefix("{{") {
            out.push('{');
            rest = t;
        } else if let Some(t) = tail.strip_prefix("}}") {
            out.push('}');
            rest = t;
        } else if tail.starts_with('}') {
            return Err(Error::Template(format!("stray `}}` in `{template}`")));
        } else {
            let close = tail
                .find('}')
                .ok_or_else(|| Error::Template(format!("unclosed `{{` in `{template}`")))?;
            let name = &tail[1..close];
            let value = fact
                .field(name)
                .ok_or_else(|| Error::Template(format!("unknown placeholder `{{{name}}}`")))?;
            out.push_str(&value);
            rest = &tail[close + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictProbe {
    pub id: String,
    pub domain: Domain,
    pub base_question: String,
    pub injected_prompt: String,
    pub expected_parametric: String,
    pub expected_contextual: String,
    pub parametric_tokens: Vec<TokenId>,
    pub contextual_tokens: Vec<TokenId>,
}

pub fn build_probe(fact: &FactRecord, templates: &TemplateSet) -> Result<ConflictProbe> {
    fact.validate()?;
    templates.validate()?;
    let base_question = render(&templates.base, fact)?;
    let injected_prompt = render(&templates.preamble, fact)? + &base_question;
    let expected_parametric = render(&templates.parametric_answer, fact)?;
    let expected_contextual = render(&templates.contextual_answer, fact)?;
    if normalize(&expected_parametric).is_empty() || normalize(&expected_contextual).is_empty() {
        return Err(Error::Template("expected answers must be nonblank".into()));
    }
    Ok(ConflictProbe {
        id: format!("{}:{}", fact.domain, fact.subject),
        domain: fact.domain,
        parametric_tokens: tokenizer::encode(&expected_parametric),
        contextual_tokens: tokenizer::encode(&expected_contextual),
        base_question,
        injected_prompt,
        expected_parametric,
        expected_contextual,
    })
}

pub fn build_probes(facts: &[FactRecord], templates: &TemplateSet) -> Result<Vec<ConflictProbe>> {
    facts.iter().map(|f| build_probe(f, templates)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Parametric,
    Contextual,
    Other,
}

/// Trim leading whitespace and collapse internal runs to one space.
fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Classify `output` by which expected answer it begins with. When both
/// match, the longer answer wins.
pub fn verdict_for(output: &str, parametric: &str, contextual: &str) -> Verdict {
    let out = normalize(output);
    let (p, c) = (normalize(parametric), normalize(contextual));
    match (out.starts_with(&p), out.starts_with(&c)) {
        (true, true) if c.len() > p.len() => Verdict::Contextual,
        (true, _) => Verdict::Parametric,
        (false, true) => Verdict::Contextual,
        (false, false) => Verdict::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub parametric: usize,
    pub contextual: usize,
    pub other: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Parametric => self.parametric += 1,
            Verdict::Contextual => self.contextual += 1,
            Verdict::Other => self.other += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.parametric + self.contextual + self.other
    }

    pub fn rates(&self) -> Rates {
        let n = self.total().max(1) as f64;
        Rates {
            parametric: self.parametric as f64 / n,
            contextual: self.contextual as f64 / n,
            other: self.other as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub parametric: f64,
    pub contextual: f64,
    pub other: f64,
}

impl Rates {
    pub fn get(&self, v: Verdict) -> f64 {
        match v {
            Verdict::Parametric => self.parametric,
            Verdict::Contextual => self.contextual,
            Verdict::Other => self.other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub id: String,
    pub domain: Domain,
    pub verdict: Verdict,
    pub output: String,
    /// The prompt plus decode budget exceeded the context window.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub per_probe: Vec<ProbeOutcome>,
    pub counts: VerdictCounts,
    pub rates: Rates,
    pub by_domain: BTreeMap<Domain, VerdictCounts>,
}

impl ProbeResult {
    fn from_outcomes(per_probe: Vec<ProbeOutcome>) -> Self {
        let mut counts = VerdictCounts::default();
        let mut by_domain: BTreeMap<Domain, VerdictCounts> = BTreeMap::new();
        for o in &per_probe {
            counts.add(o.verdict);
            by_domain.entry(o.domain).or_default().add(o.verdict);
        }
        Self {
            rates: counts.rates(),
            per_probe,
            counts,
            by_domain,
        }
    }
}

/// Which rendering of each probe to feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    /// Conflict preamble followed by the question.
    Injected,
    /// The bare question.
    Base,
}

/// Decode budget covering the longer expected answer.
pub fn default_max_new(probes: &[ConflictProbe]) -> usize {
    probes
        .iter()
        .map(|p| p.parametric_tokens.len().max(p.contextual_tokens.len()))
        .max()
        .unwrap_or(1)
}

fn run_one(ckpt: &Checkpoint, probe: &ConflictProbe, max_new: usize, kind: PromptKind) -> Result<ProbeOutcome> {
    let text = match kind {
        PromptKind::Injected => &probe.injected_prompt,
        PromptKind::Base => &probe.base_question,
    };
    let prompt = tokenizer::encode_prompt(text);
    let mut outcome = ProbeOutcome {
        id: probe.id.clone(),
        domain: probe.domain,
        verdict: Verdict::Other,
        output: String::new(),
        overflow: false,
    };
    if prompt.len() + max_new > ckpt.config().max_seq_len {
        outcome.overflow = true;
        return Ok(outcome);
    }
    let gen = generate_greedy(ckpt, &prompt, max_new, None)?;
    outcome.output = tokenizer::decode(&gen.generated_tokens);
    outcome.verdict = verdict_for(&outcome.output, &probe.expected_parametric, &probe.expected_contextual);
    Ok(outcome)
}

pub fn run_probe_suite_with(
    ckpt: &Checkpoint,
    probes: &[ConflictProbe],
    max_new: usize,
    kind: PromptKind,
) -> Result<ProbeResult> {
    if probes.is_empty() {
        return Err(Error::Input("probe suite is empty".into()));
    }
    let outcomes = probes
        .par_iter()
        .map(|p| run_one(ckpt, p, max_new, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeResult::from_outcomes(outcomes))
}

/// Greedy-decode every injected prompt and tally verdicts.
pub fn run_probe_suite(ckpt: &Checkpoint, probes: &[ConflictProbe], max_new: usize) -> Result<ProbeResult> {
    run_probe_suite_with(ckpt, probes, max_new, PromptKind::Injected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<ProbeResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(label: &str, err: &Error) -> Self {
        Self {
            label: label.into(),
            result: None,
            error: Some(err.to_string()),
        }
    }
}

/// One row per checkpoint; a failing checkpoint yields an error row and the
/// sweep continues.
pub fn sweep_checkpoints(
    ckpts: &[(String, Checkpoint)],
    probes: &[ConflictProbe],
    max_new: usize,
) -> Vec<SweepRow> {
    ckpts
        .iter()
        .map(|(label, ck)| match run_probe_suite(ck, probes, max_new) {
            Ok(r) => SweepRow {
                label: label.clone(),
                result: Some(r),
                error: None,
            },
            Err(e) => SweepRow::failed(label, &e),
        })
        .collect()
}

/// `n` single-letter facts (distinct uppercase subjects, lowercase values)
/// spread over the tech, celebrity and sport domains.
pub fn synthetic_facts(n: usize, seed: u64) -> Result<Vec<FactRecord>> {
    if n > 26 {
        return Err(Error::Input(format!("at most 26 synthetic facts, asked for {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects: Vec<u8> = (b'A'..=b'Z').collect();
    subjects.shuffle(&mut rng);
    let domains = [Domain::Tech, Domain::Celebrity, Domain::Sport];
    subjects[..n]
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut values: Vec<u8> = (b'a'..=b'z').collect();
            values.shuffle(&mut rng);
            FactRecord::new(
                &(s as char).to_string(),
                "capital",
                &(values[0] as char).to_string(),
                &(values[1] as char).to_string(),
                domains[i % domains.len()],
            )
        })
        .collect()
}
