// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention entropy split into reasoning and answering phases.
//!
//! Entropy of one attention row is `-Σ α log α` in nats with `0 log 0 = 0`.
//! Decode steps before the phase split are reasoning; the split step and
//! everything after it (the answer marker included) are answering.

use serde::{Deserialize, Serialize};

use super::HeadMatrix;
use crate::error::{Error, Result};
use crate::model::{GenerationOutput, StepTrace};

/// Shannon entropy of an attention row, clamped to `[0, ln(len)]`.
///
/// The clamp only absorbs f32 rounding of a row that sums to one.
pub fn row_entropy(row: &[f32]) -> f64 {
    let s: f64 = row
        .iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| {
            let a = a as f64;
            -a * a.ln()
        })
        .sum();
    let max = (row.len().max(1) as f64).ln();
    s.clamp(0.0, max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    /// Mean reasoning-phase entropy per head; absent when no step precedes the split.
    pub reasoning: Option<HeadMatrix>,
    /// Mean answering-phase entropy per head; absent when no step follows it.
    pub answering: Option<HeadMatrix>,
    pub reasoning_steps: usize,
    pub answering_steps: usize,
}

impl EntropyProfile {
    pub fn reasoning_layer_means(&self) -> Option<Vec<f64>> {
        self.reasoning.as_ref().map(HeadMatrix::layer_means)
    }

    pub fn answering_layer_means(&self) -> Option<Vec<f64>> {
        self.answering.as_ref().map(HeadMatrix::layer_means)
    }

    /// Step-weighted mean of several profiles, as if their steps were pooled.
    pub fn pooled(profiles: &[EntropyProfile]) -> Result<EntropyProfile> {
        fn pool<'a>(
            items: impl Iterator<Item = (&'a Option<HeadMatrix>, usize)>,
        ) -> Result<(Option<HeadMatrix>, usize)> {
            let mut acc: Option<HeadMatrix> = None;
            let mut total = 0;
            for (m, n) in items {
                let Some(m) = m else { continue };
                let a = acc.get_or_insert_with(|| HeadMatrix::zeros(m.layers, m.heads));
                a.ensure_same_shape(m)?;
                for (x, v) in a.values.iter_mut().zip(&m.values) {
                    *x += v * n as f64;
                }
                total += n;
            }
            if let Some(a) = acc.as_mut() {
                a.values.iter_mut().for_each(|v| *v /= total as f64);
            }
            Ok((acc, total))
        }
        let (reasoning, reasoning_steps) =
            pool(profiles.iter().map(|p| (&p.reasoning, p.reasoning_steps)))?;
        let (answering, answering_steps) =
            pool(profiles.iter().map(|p| (&p.answering, p.answering_steps)))?;
        Ok(EntropyProfile {
            reasoning,
            answering,
            reasoning_steps,
            answering_steps,
        })
    }
}

fn phase_mean(steps: &[StepTrace], n_layers: usize, n_heads: usize) -> Result<Option<HeadMatrix>> {
    if steps.is_empty() {
        return Ok(None);
    }
    let mut m = HeadMatrix::zeros(n_layers, n_heads);
    for step in steps {
        if step.attn.len() != n_layers * n_heads {
            return Err(Error::Shape(format!(
                "step has {} attention rows, expected {}",
                step.attn.len(),
                n_layers * n_heads
            )));
        }
        for (acc, row) in m.values.iter_mut().zip(&step.attn) {
            *acc += row_entropy(row);
        }
    }
    let n = steps.len() as f64;
    m.values.iter_mut().for_each(|v| *v /= n);
    Ok(Some(m))
}

/// Per-head mean entropy of `steps[..phase_split]` and `steps[phase_split..]`.
pub fn attention_entropy(
    steps: &[StepTrace],
    n_layers: usize,
    n_heads: usize,
    phase_split: usize,
) -> Result<EntropyProfile> {
    if phase_split > steps.len() {
        return Err(Error::Input(format!(
            "phase split {phase_split} beyond {} decode steps",
            steps.len()
        )));
    }
    let (reasoning, answering) = steps.split_at(phase_split);
    Ok(EntropyProfile {
        reasoning: phase_mean(reasoning, n_layers, n_heads)?,
        answering: phase_mean(answering, n_layers, n_heads)?,
        reasoning_steps: reasoning.len(),
        answering_steps: answering.len(),
    })
}

/// Profile of one generation, split at its answer marker. Without a marker
/// every step counts as reasoning.
pub fn entropy_for_generation(
    out: &GenerationOutput,
    n_layers: usize,
    n_heads: usize,
) -> Result<EntropyProfile> {
    let split = out.answer_marker_index.unwrap_or(out.steps.len());
    attention_entropy(&out.steps, n_layers, n_heads, split)
}

/// Sign quadrant of a layer's `(Δreasoning, Δanswering)`, read from the
/// point of view of the first profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrant {
    /// More diffuse reasoning, sharper answers.
    Favorable,
    /// Sharper reasoning, more diffuse answers.
    Adverse,
    /// Both phases sharper.
    Focused,
    /// Both phases more diffuse.
    Diffuse,
    /// At least one difference is exactly zero.
    Neutral,
}

impl Quadrant {
    pub fn classify(d_reasoning: f64, d_answering: f64) -> Self {
        use std::cmp::Ordering::*;
        match (d_reasoning.partial_cmp(&0.0), d_answering.partial_cmp(&0.0)) {
            (Some(Greater), Some(Less)) => Quadrant::Favorable,
            (Some(Less), Some(Greater)) => Quadrant::Adverse,
            (Some(Less), Some(Less)) => Quadrant::Focused,
            (Some(Greater), Some(Greater)) => Quadrant::Diffuse,
            _ => Quadrant::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntropyDelta {
    pub layer: usize,
    pub d_reasoning: f64,
    pub d_answering: f64,
    pub quadrant: Quadrant,
}

/// Per-layer `a − b` of mean reasoning and answering entropy.
pub fn entropy_difference(a: &EntropyProfile, b: &EntropyProfile) -> Result<Vec<LayerEntropyDelta>> {
    let phase = |p: &EntropyProfile, reasoning: bool| -> Result<HeadMatrix> {
        let m = if reasoning { &p.reasoning } else { &p.answering };
        m.clone().ok_or_else(|| {
            Error::Input(format!(
                "profile has no {} phase",
                if reasoning { "reasoning" } else { "answering" }
            ))
        })
    };
    let (ar, aa, br, ba) = (phase(a, true)?, phase(a, false)?, phase(b, true)?, phase(b, false)?);
    ar.ensure_same_shape(&br)?;
    aa.ensure_same_shape(&ba)?;
    let dr = ar.minus(&br)?.layer_means();
    let da = aa.minus(&ba)?.layer_means();
    Ok(dr
        .into_iter()
        .zip(da)
        .enumerate()
        .map(|(layer, (d_reasoning, d_answering))| LayerEntropyDelta {
            layer,
            d_reasoning,
            d_answering,
            quadrant: Quadrant::classify(d_reasoning, d_answering),
        })
        .collect())
}
