// SPDX-License-Identifier: MIT OR Apache-2.0

//! Needle-in-a-haystack retrieval scores per attention head.
//!
//! For one trial the needle (carrying the answer `k`) is inserted into
//! `context_length` filler tokens at a depth fraction, the question is
//! appended and the model decodes greedily. At every decode step each head's
//! argmax-attended position is inspected: the position joins the head's
//! retrieved set `g_h` when it lies inside the answer span *and* holds the
//! same token id the model emits at that step. The head's trial score is
//! `|g_h ∩ k| / |k|`, with `k` the set of answer-span positions, so a
//! repeated answer token is never counted twice. Scores are averaged over
//! every (context length, depth, repetition) trial.
//!
//! Prompt layout: `BOS ++ filler[..ins] ++ needle ++ filler[ins..] ++ question`
//! with `ins = round(depth * context_length)`.

use std::collections::BTreeSet;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HeadMatrix;
use crate::error::{Error, Result};
use crate::model::{argmax, generate_greedy, Checkpoint, GenerationOutput};
use crate::tokenizer::{self, TokenId, BOS};

/// Default retrieval-head threshold: heads scoring strictly above it count.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

pub fn default_context_lengths() -> Vec<usize> {
    vec![0, 64, 128, 256, 512]
}

pub fn default_depth_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

/// Needle insertion depths: an explicit grid, or seeded random draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthFractions {
    Grid(Vec<f64>),
    Random { random: RandomDepths },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomDepths {
    pub count: usize,
    pub seed: u64,
}

impl Default for DepthFractions {
    fn default() -> Self {
        DepthFractions::Grid(default_depth_grid())
    }
}

/// One needle-in-a-haystack suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleConfig {
    /// Carrier sentence containing the answer.
    pub needle: String,
    /// The answer `k`; must occur inside `needle`.
    pub answer: String,
    pub question: String,
    /// Filler text, cycled to the requested context length.
    pub haystack_source: String,
    #[serde(default = "default_context_lengths")]
    pub context_lengths: Vec<usize>,
    #[serde(default)]
    pub depth_fractions: DepthFractions,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Decode budget per trial; defaults to the answer length.
    #[serde(default)]
    pub max_new: Option<usize>,
}

fn one() -> usize {
    1
}

/// Identifies one trial of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialKey {
    pub repetition: usize,
    pub context_length: usize,
    pub depth: f64,
}

impl TrialKey {
    fn sort_key(&self) -> (usize, usize, u64) {
        (self.repetition, self.context_length, self.depth.to_bits())
    }
}

impl NeedleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.answer.is_empty() {
            return Err(Error::Config("needle answer must be nonempty".into()));
        }
        if !self.needle.contains(&self.answer) {
            return Err(Error::Config(format!(
                "answer `{}` does not occur in the needle",
                self.answer
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.context_lengths.is_empty() {
            return Err(Error::Config("context_lengths is empty".into()));
        }
        if self.haystack_source.is_empty() && self.context_lengths.iter().any(|&c| c > 0) {
            return Err(Error::Config("haystack_source is empty".into()));
        }
        match &self.depth_fractions {
            DepthFractions::Grid(g) => {
                if g.is_empty() {
                    return Err(Error::Config("depth grid is empty".into()));
                }
                if let Some(d) = g.iter().find(|d| !(0.0..=1.0).contains(*d)) {
                    return Err(Error::Config(format!("depth {d} outside [0, 1]")));
                }
            }
            DepthFractions::Random { random } if random.count == 0 => {
                return Err(Error::Config("random depth count must be positive".into()));
            }
            DepthFractions::Random { .. } => {}
        }
        Ok(())
    }

    fn answer_tokens(&self) -> usize {
        tokenizer::token_len(&self.answer)
    }

    pub fn decode_budget(&self) -> usize {
        self.max_new.unwrap_or_else(|| self.answer_tokens())
    }

    /// Every trial key, sorted by (repetition, context length, depth).
    pub fn trial_keys(&self) -> Vec<TrialKey> {
        let mut keys = Vec::new();
        let mut rng = match &self.depth_fractions {
            DepthFractions::Random { random } => Some(ChaCha8Rng::seed_from_u64(random.seed)),
            DepthFractions::Grid(_) => None,
        };
        for repetition in 0..self.repetitions {
            let depths: Vec<f64> = match (&self.depth_fractions, rng.as_mut()) {
                (DepthFractions::Grid(g), _) => g.clone(),
                (DepthFractions::Random { random }, Some(rng)) => {
                    (0..random.count).map(|_| rng.random_range(0.0..=1.0)).collect()
                }
                (DepthFractions::Random { .. }, None) => unreachable!(),
            };
            for &context_length in &self.context_lengths {
                for &depth in &depths {
                    keys.push(TrialKey {
                        repetition,
                        context_length,
                        depth,
                    });
                }
            }
        }
        keys.sort_by_key(TrialKey::sort_key);
        keys
    }

    /// Prompt tokens and the answer-span positions for one trial.
    pub fn render_trial(&self, key: &TrialKey) -> Result<(Vec<TokenId>, Range<usize>)> {
        let pool = tokenizer::encode(&self.haystack_source);
        let filler: Vec<TokenId> = if key.context_length == 0 {
            Vec::new()
        } else {
            // each repetition starts the filler at a different place in the pool
            let start = (key.repetition * 7919) % pool.len();
            pool.iter()
                .cycle()
                .skip(start)
                .take(key.context_length)
                .copied()
                .collect()
        };
        let ins = (key.depth * key.context_length as f64).round() as usize;
        let ins = ins.min(filler.len());
        let needle = tokenizer::encode(&self.needle);
        let answer_at = self
            .needle
            .find(&self.answer)
            .ok_or_else(|| Error::Config("answer not in needle".into()))?;

        let mut prompt = Vec::with_capacity(1 + filler.len() + needle.len() + self.question.len());
        prompt.push(BOS);
        prompt.extend_from_slice(&filler[..ins]);
        let needle_start = prompt.len();
        prompt.extend_from_slice(&needle);
        prompt.extend_from_slice(&filler[ins..]);
        prompt.extend(tokenizer::encode(&self.question));
        let span_start = needle_start + answer_at;
        Ok((prompt, span_start..span_start + self.answer_tokens()))
    }
}

/// Argmax position of one head at one step and whether it was retrieved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDecision {
    pub attended: usize,
    pub retrieved: bool,
}

/// Full record of one needle trial.
#[derive(Debug, Clone)]
pub struct NeedleTrial {
    pub key: TrialKey,
    pub answer_span: Range<usize>,
    pub generation: GenerationOutput,
    /// `decisions[step][layer * heads + head]`.
    pub decisions: Vec<Vec<HeadDecision>>,
    pub scores: HeadMatrix,
}

/// Per-configuration scores plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScoreMap {
    pub scores: HeadMatrix,
    pub per_config: Vec<ConfigScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigScores {
    pub key: TrialKey,
    pub scores: HeadMatrix,
}

impl RetrievalScoreMap {
    /// Mean of per-configuration maps.
    pub fn from_configs(per_config: Vec<ConfigScores>) -> Result<Self> {
        let first = per_config
            .first()
            .ok_or_else(|| Error::Input("no retrieval configurations".into()))?;
        let mut scores = HeadMatrix::zeros(first.scores.layers, first.scores.heads);
        for c in &per_config {
            scores.ensure_same_shape(&c.scores)?;
            for (acc, v) in scores.values.iter_mut().zip(&c.scores.values) {
                *acc += v;
            }
        }
        let n = per_config.len() as f64;
        scores.values.iter_mut().for_each(|v| *v /= n);
        Ok(Self { scores, per_config })
    }

    /// Map built directly from a score matrix (no per-configuration detail).
    pub fn from_matrix(scores: HeadMatrix) -> Self {
        Self {
            scores,
            per_config: Vec::new(),
        }
    }
}

/// Run one trial and record every membership decision.
pub fn run_trial(ckpt: &Checkpoint, cfg: &NeedleConfig, key: &TrialKey) -> Result<NeedleTrial> {
    let (prompt, span) = cfg.render_trial(key)?;
    let budget = cfg.decode_budget();
    let max = ckpt.config().max_seq_len;
    if prompt.len() + budget > max {
        return Err(Error::Config(format!(
            "needle does not fit: context {} + needle + question + {budget} decode tokens = {} > max_seq_len {max}",
            key.context_length,
            prompt.len() + budget
        )));
    }
    let generation = generate_greedy(ckpt, &prompt, budget, None)?;
    let seq = generation.full_sequence();
    let n_layers = ckpt.config().n_layers;
    let n_heads = ckpt.config().n_heads;

    let mut retrieved: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_layers * n_heads];
    let mut decisions = Vec::with_capacity(generation.steps.len());
    for step in &generation.steps {
        let row: Vec<HeadDecision> = step
            .attn
            .iter()
            .enumerate()
            .map(|(idx, attn)| {
                let attended = argmax(attn);
                let hit = span.contains(&attended) && seq[attended] == step.token;
                if hit {
                    retrieved[idx].insert(attended);
                }
                HeadDecision {
                    attended,
                    retrieved: hit,
                }
            })
            .collect();
        decisions.push(row);
    }
    let k = span.len() as f64;
    let values = retrieved.iter().map(|g| g.len() as f64 / k).collect();
    Ok(NeedleTrial {
        key: *key,
        answer_span: span,
        generation,
        decisions,
        scores: HeadMatrix::new(n_layers, n_heads, values)?,
    })
}

/// Every trial of the suite, in sorted key order. Trials run concurrently.
pub fn needle_trials(ckpt: &Checkpoint, cfg: &NeedleConfig) -> Result<Vec<NeedleTrial>> {
    cfg.validate()?;
    cfg.trial_keys()
        .par_iter()
        .map(|key| run_trial(ckpt, cfg, key))
        .collect()
}

pub fn run_needle_suite(ckpt: &Checkpoint, cfg: &NeedleConfig) -> Result<RetrievalScoreMap> {
    let per_config = needle_trials(ckpt, cfg)?
        .into_iter()
        .map(|t| ConfigScores {
            key: t.key,
            scores: t.scores,
        })
        .collect();
    RetrievalScoreMap::from_configs(per_config)
}

/// Heads whose score is strictly above `threshold`.
pub fn classify_retrieval_heads(map: &RetrievalScoreMap, threshold: f64) -> BTreeSet<(usize, usize)> {
    map.scores
        .iter()
        .filter(|&(_, _, v)| v > threshold)
        .map(|(l, h, _)| (l, h))
        .collect()
}

/// Heads classified as retrieval heads in every map.
pub fn retrieval_head_intersection(
    maps: &[RetrievalScoreMap],
    threshold: f64,
) -> Result<BTreeSet<(usize, usize)>> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| Error::Input("intersection of zero score maps".into()))?;
    let mut acc = classify_retrieval_heads(first, threshold);
    for m in rest {
        first.scores.ensure_same_shape(&m.scores)?;
        let heads = classify_retrieval_heads(m, threshold);
        acc.retain(|h| heads.contains(h));
    }
    Ok(acc)
}

/// Sum of every per-head score.
pub fn overall_retrieval_score(map: &RetrievalScoreMap) -> f64 {
    map.scores.values.iter().sum()
}

/// Elementwise `a - b`.
pub fn score_difference_map(a: &RetrievalScoreMap, b: &RetrievalScoreMap) -> Result<HeadMatrix> {
    a.scores.minus(&b.scores)
}
