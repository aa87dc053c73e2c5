// SPDX-License-Identifier: MIT OR Apache-2.0

//! Greedy decoding with per-step attention and FFN capture.

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::forward::forward;
use crate::error::{Error, Result};
use crate::tokenizer::{find_subsequence, TokenId};

/// What the model looked at while producing one generated token.
///
/// Step `s` runs the model on `prompt ++ generated[..s]`; the query is the
/// last position of that sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    /// Position of the query row (sequence length minus one).
    pub query_position: usize,
    /// Token emitted at this step.
    pub token: TokenId,
    /// Attention row of the query for every head, indexed
    /// `layer * n_heads + head`; each has `query_position + 1` entries.
    pub attn: Vec<Vec<f32>>,
    /// FFN activations of the query position, one row per layer.
    pub ffn_act: Vec<Vec<f32>>,
}

impl StepTrace {
    pub fn attn_row(&self, n_heads: usize, layer: usize, head: usize) -> &[f32] {
        &self.attn[layer * n_heads + head]
    }
}

/// Result of [`generate_greedy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub prompt_tokens: Vec<TokenId>,
    pub generated_tokens: Vec<TokenId>,
    pub steps: Vec<StepTrace>,
    /// Index into `generated_tokens` of the first token of the first
    /// occurrence of the answer marker.
    pub answer_marker_index: Option<usize>,
}

impl GenerationOutput {
    /// Prompt followed by the generated tokens.
    pub fn full_sequence(&self) -> Vec<TokenId> {
        let mut all = self.prompt_tokens.clone();
        all.extend(&self.generated_tokens);
        all
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy (argmax) decoding of `max_new` tokens after `prompt`.
///
/// The prompt plus all generated tokens must fit in `max_seq_len`.
pub fn generate_greedy(
    ckpt: &Checkpoint,
    prompt: &[TokenId],
    max_new: usize,
    answer_marker: Option<&[TokenId]>,
) -> Result<GenerationOutput> {
    if prompt.is_empty() {
        return Err(Error::Input("generate_greedy: empty prompt".into()));
    }
    let max = ckpt.config().max_seq_len;
    if prompt.len() + max_new > max {
        return Err(Error::Capacity {
            needed: prompt.len() + max_new,
            max,
        });
    }
    let mut seq = prompt.to_vec();
    let mut steps = Vec::with_capacity(max_new);
    for _ in 0..max_new {
        let (logits, trace) = forward(ckpt, &seq, true)?;
        let q = seq.len() - 1;
        let token = argmax(logits.row(q)) as TokenId;
        let (attn, ffn) = trace.expect("trace requested").into_parts();
        steps.push(StepTrace {
            query_position: q,
            token,
            attn: attn.iter().map(|a| a.row(q)[..=q].to_vec()).collect(),
            ffn_act: ffn.iter().map(|f| f.row(q).to_vec()).collect(),
        });
        seq.push(token);
    }
    let generated_tokens = seq.split_off(prompt.len());
    let answer_marker_index = answer_marker.and_then(|m| find_subsequence(&generated_tokens, m));
    Ok(GenerationOutput {
        prompt_tokens: seq,
        generated_tokens,
        steps,
        answer_marker_index,
    })
}
