// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-built two-layer models with known circuits.
//!
//! Every token `t` gets a 9-dimensional ±1 code `c(t)` (bit `b` of `t`), so
//! `c(x)·c(y)` is 9 when `x == y` and at most 7 otherwise. The residual
//! stream is laid out as
//!
//! ```text
//! 0..9    CODE      c(token)
//! 9       ONE       constant 1
//! 10      BOS_FLAG  1 on the BOS token only
//! 11..20  PREV      c(previous token), written by layer 0 head 0
//! 20..29  OUT       read by the output head: logit(t) = c(t)·OUT
//! ```
//!
//! Layer 0 head 0 is a previous-token head driven purely by RoPE phase.
//! Layer 0's FFN is a key-value memory: one relu neuron per fact fires on
//! `PREV = c(subject)` and `CODE = c('=')` and writes `0.5·c(value)`.
//! Layer 1 head 0 is an induction head: the query `c(token)` matches keys
//! `PREV`, so the head attends to whatever followed the previous occurrence
//! of the current token and copies it into `OUT` with weight 1. With no match
//! it parks on BOS, whose value is zero.
//! Layer 1's FFN holds a single neuron with no output weights.

use crate::conflict::FactRecord;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig};
use crate::probes::retrieval::NeedleConfig;
use crate::tensor::{Activation, Tensor};
use crate::tokenizer::{TokenId, BOS, PAD, VOCAB_SIZE};

pub const BITS: usize = 9;
pub const CODE: usize = 0;
pub const ONE: usize = 9;
pub const BOS_FLAG: usize = 10;
pub const PREV: usize = 11;
pub const OUT: usize = 20;

/// The head that copies answers in the copy and conflict models.
pub const COPY_HEAD: (usize, usize) = (1, 0);

/// Byte separating a subject from its value in fact prompts.
pub const CUE: u8 = b'=';

const D_HEAD: usize = 24;
/// Query scale of the previous-token head.
const S_PREV: f32 = 320.0;
/// Query scale of the copy head.
const S_COPY: f32 = 150.0;
/// Pre-activation scale of the fact neurons.
const S_FACT: f32 = 4.0;
/// Strength of a recalled fact relative to a copied token.
const FACT_WEIGHT: f32 = 0.5;
/// First RoPE pair used for copy-head content; these pairs barely rotate.
const COPY_PAIR: usize = 7;

pub fn toy_config() -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 48,
        d_head: D_HEAD,
        d_ffn: 32,
        vocab_size: VOCAB_SIZE,
        rope_base: 1e9,
        activation: Activation::Relu,
        use_norm: false,
        max_seq_len: 640,
    }
}

/// ±1 code of a token id.
pub fn code(t: TokenId) -> [f32; BITS] {
    std::array::from_fn(|b| if (t >> b) & 1 == 1 { 1.0 } else { -1.0 })
}

fn tensor<'a>(ck: &'a mut Checkpoint, name: &str) -> &'a mut Tensor {
    ck.tensor_mut(name).expect("toy tensor names are canonical")
}

fn base() -> Checkpoint {
    let mut ck = Checkpoint::zeros(toy_config()).expect("toy config is valid");
    let emb = tensor(&mut ck, "embed.tok");
    for t in 0..VOCAB_SIZE {
        let c = code(t as TokenId);
        for b in 0..BITS {
            emb.set(t, CODE + b, c[b]);
        }
        emb.set(t, ONE, 1.0);
    }
    emb.set(BOS as usize, BOS_FLAG, 1.0);
    let head = tensor(&mut ck, "head.out");
    for t in 0..VOCAB_SIZE {
        let c = code(t as TokenId);
        for b in 0..BITS {
            head.set(OUT + b, t, c[b]);
        }
    }
    add_previous_token_head(&mut ck);
    add_idle_neuron(&mut ck);
    ck
}

/// A layer-1 neuron with no output weights, active at `1 ± 0.5` depending
/// on the lowest code bit. It leaves predictions unchanged and gives layer 1
/// nonzero activation statistics.
fn add_idle_neuron(ck: &mut Checkpoint) {
    let w_in = tensor(ck, "layer.1.ffn.in");
    w_in.set(ONE, 0, 1.0);
    w_in.set(CODE, 0, 0.5);
}

/// Value map `CODE - c(BOS)·BOS_FLAG` into head dims `0..9`, zero on BOS.
fn set_code_values(v: &mut Tensor) {
    let cb = code(BOS);
    for b in 0..BITS {
        v.set(CODE + b, b, 1.0);
        v.set(BOS_FLAG, b, -cb[b]);
    }
}

/// Layer 0 head 0. For pair `p` with frequency `w`, the query is
/// `(s, 0)` and the key `(cos w, sin w)`; after rotation their product is
/// `s·cos((i - j - 1)·w)`, peaking at `j = i - 1` across the first five pairs.
fn add_previous_token_head(ck: &mut Checkpoint) {
    let cfg = ck.config().clone();
    let q = tensor(ck, "layer.0.attn.q");
    for p in 0..5 {
        q.set(ONE, 2 * p, S_PREV);
    }
    let k = tensor(ck, "layer.0.attn.k");
    for p in 0..5 {
        let w = cfg.rope_base.powf(-2.0 * p as f64 / D_HEAD as f64);
        k.set(ONE, 2 * p, w.cos() as f32);
        k.set(ONE, 2 * p + 1, w.sin() as f32);
    }
    set_code_values(tensor(ck, "layer.0.attn.v"));
    let o = tensor(ck, "layer.0.attn.o");
    for b in 0..BITS {
        o.set(b, PREV + b, 1.0);
    }
}

/// Layer 1 head 0. Content lives in dims `14..23`, the BOS sink in dim 23:
/// a match scores `9s`, BOS `8s`, anything else at most `7s`.
fn add_copy_head(ck: &mut Checkpoint) {
    let c0 = 2 * COPY_PAIR;
    let sink = c0 + BITS;
    let q = tensor(ck, "layer.1.attn.q");
    for b in 0..BITS {
        q.set(CODE + b, c0 + b, S_COPY);
    }
    q.set(ONE, sink, 8.0 * S_COPY);
    let k = tensor(ck, "layer.1.attn.k");
    for b in 0..BITS {
        k.set(PREV + b, c0 + b, 1.0);
    }
    k.set(BOS_FLAG, sink, 1.0);
    set_code_values(tensor(ck, "layer.1.attn.v"));
    let o = tensor(ck, "layer.1.attn.o");
    for b in 0..BITS {
        o.set(b, OUT + b, 1.0);
    }
}

fn single_byte(s: &str, what: &str) -> Result<TokenId> {
    match s.as_bytes() {
        [b] => Ok(*b as TokenId),
        _ => Err(Error::Input(format!("toy facts need single-byte {what}s, got `{s}`"))),
    }
}

/// One neuron per fact: pre-activation `S(c(subj)·PREV + c(=)·CODE - 17)`
/// is `S` on an exact match and at most `-S` otherwise.
fn add_fact_memory(ck: &mut Checkpoint, facts: &[FactRecord]) -> Result<()> {
    let d_ffn = ck.config().d_ffn;
    if facts.len() > d_ffn {
        return Err(Error::Capacity {
            needed: facts.len(),
            max: d_ffn,
        });
    }
    let cue = code(CUE as TokenId);
    for (n, f) in facts.iter().enumerate() {
        let subj = code(single_byte(&f.subject, "subject")?);
        let value = code(single_byte(&f.true_value, "value")?);
        single_byte(&f.conflict_value, "value")?;
        let w_in = tensor(ck, "layer.0.ffn.in");
        for b in 0..BITS {
            w_in.set(PREV + b, n, S_FACT * subj[b]);
            w_in.set(CODE + b, n, S_FACT * cue[b]);
        }
        w_in.set(ONE, n, -17.0 * S_FACT);
        let w_out = tensor(ck, "layer.0.ffn.out");
        for b in 0..BITS {
            w_out.set(n, OUT + b, FACT_WEIGHT * value[b] / S_FACT);
        }
    }
    Ok(())
}

/// Recalls facts from its FFN and ignores context.
pub fn parametric_model(facts: &[FactRecord]) -> Result<Checkpoint> {
    let mut ck = base();
    add_fact_memory(&mut ck, facts)?;
    Ok(ck)
}

/// Same fact memory plus the copy head; a value stated in context outweighs
/// the recalled one.
pub fn conflict_model(facts: &[FactRecord]) -> Result<Checkpoint> {
    let mut ck = parametric_model(facts)?;
    add_copy_head(&mut ck);
    Ok(ck)
}

/// Copy head only.
pub fn copy_model() -> Checkpoint {
    let mut ck = base();
    add_copy_head(&mut ck);
    ck
}

/// Always predicts PAD, so decoded output is empty.
pub fn degenerate_model() -> Checkpoint {
    let mut ck = Checkpoint::zeros(toy_config()).expect("toy config is valid");
    let emb = tensor(&mut ck, "embed.tok");
    for t in 0..VOCAB_SIZE {
        emb.set(t, ONE, 1.0);
    }
    tensor(&mut ck, "head.out").set(ONE, PAD as usize, 1.0);
    ck
}

/// Maps each digit to the next one (`9` wraps to `0`) through FFN neurons.
pub fn successor_model() -> Checkpoint {
    let mut ck = base();
    for d in 0..10u32 {
        let this = code(b'0' as TokenId + d);
        let next = code(b'0' as TokenId + (d + 1) % 10);
        let w_in = tensor(&mut ck, "layer.0.ffn.in");
        for b in 0..BITS {
            w_in.set(CODE + b, d as usize, S_FACT * this[b]);
        }
        w_in.set(ONE, d as usize, -8.0 * S_FACT);
        let w_out = tensor(&mut ck, "layer.0.ffn.out");
        for b in 0..BITS {
            w_out.set(d as usize, OUT + b, next[b] / S_FACT);
        }
    }
    ck
}

/// Filler text with no digits and no `@`.
pub const FILLER: &str = "The river bends past the old mill where children play in the long grass. \
Swallows circle the barn roof while the baker carries bread along the lane. ";

/// Needle suite matched to [`copy_model`]: the question ends with the byte
/// that precedes the answer in the needle.
pub fn needle_fixture() -> NeedleConfig {
    NeedleConfig {
        needle: " The secret is @4729. ".into(),
        answer: "4729".into(),
        question: " What is the secret? @".into(),
        haystack_source: FILLER.into(),
        context_lengths: crate::probes::retrieval::default_context_lengths(),
        depth_fractions: Default::default(),
        repetitions: 1,
        max_new: None,
    }
}
