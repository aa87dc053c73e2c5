// SPDX-License-Identifier: MIT OR Apache-2.0

//! Instrumented forward pass.
//!
//! Per layer `l`:
//!
//! ```text
//! H~_l = MHA(H_{l-1}) + H_{l-1}
//! H_l  = FFN(H~_l)    + H~_l
//! MHA(H) = Concat_i(A_i V_i) W_O,   A_i = softmax(rope(Q_i) rope(K_i)^T / sqrt(d_head))
//! FFN(H) = g(H W_in) W_out
//! ```
//!
//! Logits are `H_L · head.out`. With `use_norm`, each sub-block input and the
//! final state pass through an RMS norm first.

use super::checkpoint::{Checkpoint, LayerWeights};
use super::rope::{inverse_frequencies, rotate_row};
use crate::error::{Error, Result};
use crate::tensor::{activation, masked_softmax_rows, matmul, Tensor};
use crate::tokenizer::TokenId;

const RMS_EPS: f64 = 1e-6;

/// Attention matrices, FFN activations and hidden states captured during one
/// forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    n_layers: usize,
    n_heads: usize,
    /// `T × T` attention weights, indexed `layer * n_heads + head`.
    attn: Vec<Tensor>,
    /// `T × d_ffn` activations `g(H~ W_in)` per layer.
    ffn_act: Vec<Tensor>,
    /// `T × d_model` output `H_l` of each layer.
    hidden: Vec<Tensor>,
}

impl TraceRecord {
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn attn(&self, layer: usize, head: usize) -> &Tensor {
        &self.attn[layer * self.n_heads + head]
    }

    pub fn ffn_act(&self, layer: usize) -> &Tensor {
        &self.ffn_act[layer]
    }

    pub fn hidden(&self, layer: usize) -> &Tensor {
        &self.hidden[layer]
    }

    pub(crate) fn into_parts(self) -> (Vec<Tensor>, Vec<Tensor>) {
        (self.attn, self.ffn_act)
    }
}

/// Run the model over `tokens`, returning `T × vocab` logits and, when
/// `trace` is set, the full [`TraceRecord`].
pub fn forward(
    ckpt: &Checkpoint,
    tokens: &[TokenId],
    trace: bool,
) -> Result<(Tensor, Option<TraceRecord>)> {
    let cfg = ckpt.config();
    if tokens.is_empty() {
        return Err(Error::Input("forward: empty token sequence".into()));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::Capacity {
            needed: tokens.len(),
            max: cfg.max_seq_len,
        });
    }
    if let Some((pos, &t)) = tokens
        .iter()
        .enumerate()
        .find(|(_, &t)| t as usize >= cfg.vocab_size)
    {
        return Err(Error::Input(format!(
            "token id {t} at position {pos} is outside the vocabulary of {}",
            cfg.vocab_size
        )));
    }

    let d = cfg.d_model;
    let emb = ckpt.token_embedding();
    let mut hidden = Tensor::zeros(vec![tokens.len(), d]);
    for (i, &t) in tokens.iter().enumerate() {
        hidden.row_mut(i).copy_from_slice(emb.row(t as usize));
    }

    let freqs = inverse_frequencies(cfg.d_head, cfg.rope_base);
    let mut rec = trace.then(|| TraceRecord {
        n_layers: cfg.n_layers,
        n_heads: cfg.n_heads,
        attn: Vec::with_capacity(cfg.n_layers * cfg.n_heads),
        ffn_act: Vec::with_capacity(cfg.n_layers),
        hidden: Vec::with_capacity(cfg.n_layers),
    });

    for layer in ckpt.layers() {
        let (mha, probs) = attention_block(ckpt, layer, &hidden, &freqs)?;
        let h_tilde = hidden.add(&mha)?;
        let ffn_in = rms_norm(&h_tilde, layer.ffn_norm.as_ref());
        let act = activation(&matmul(&ffn_in, &layer.ffn_in)?, cfg.activation)?;
        let ffn = matmul(&act, &layer.ffn_out)?;
        hidden = h_tilde.add(&ffn)?;
        if let Some(r) = rec.as_mut() {
            r.attn.extend(probs);
            r.ffn_act.push(act);
            r.hidden.push(hidden.clone());
        }
    }

    let out = rms_norm(&hidden, ckpt.final_norm());
    let logits = matmul(&out, ckpt.output_head())?;
    Ok((logits, rec))
}

fn attention_block(
    ckpt: &Checkpoint,
    layer: &LayerWeights,
    hidden: &Tensor,
    freqs: &[f64],
) -> Result<(Tensor, Vec<Tensor>)> {
    let cfg = ckpt.config();
    let t_len = hidden.rows();
    let dh = cfg.d_head;
    let x = rms_norm(hidden, layer.attn_norm.as_ref());
    let q = matmul(&x, &layer.q)?;
    let k = matmul(&x, &layer.k)?;
    let v = matmul(&x, &layer.v)?;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut concat = Tensor::zeros(vec![t_len, cfg.d_model]);
    let mut probs = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let mut qh = q.column_block(h * dh, dh)?;
        let mut kh = k.column_block(h * dh, dh)?;
        let vh = v.column_block(h * dh, dh)?;
        for i in 0..t_len {
            rotate_row(qh.row_mut(i), i, freqs);
            rotate_row(kh.row_mut(i), i, freqs);
        }
        let mut scores = Tensor::zeros(vec![t_len, t_len]);
        for i in 0..t_len {
            let qi = qh.row(i);
            for j in 0..=i {
                let s: f64 = qi
                    .iter()
                    .zip(kh.row(j))
                    .map(|(a, b)| f64::from(*a) * f64::from(*b))
                    .sum();
                scores.set(i, j, (s * scale) as f32);
            }
        }
        let a = masked_softmax_rows(&scores, true)?;
        let mut acc = vec![0.0f64; dh];
        for i in 0..t_len {
            acc.iter_mut().for_each(|x| *x = 0.0);
            for (j, &w) in a.row(i)[..=i].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (o, &vv) in acc.iter_mut().zip(vh.row(j)) {
                    *o += f64::from(w) * f64::from(vv);
                }
            }
            for (o, &val) in concat.row_mut(i)[h * dh..(h + 1) * dh].iter_mut().zip(&acc) {
                *o = val as f32;
            }
        }
        probs.push(a);
    }
    Ok((matmul(&concat, &layer.o)?, probs))
}

fn rms_norm(x: &Tensor, scale: Option<&Tensor>) -> Tensor {
    let Some(scale) = scale else {
        return x.clone();
    };
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let ms = row.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>() / row.len() as f64;
        let inv = 1.0 / (ms + RMS_EPS).sqrt();
        for (v, s) in row.iter_mut().zip(scale.data()) {
            *v = (f64::from(*v) * inv * f64::from(*s)) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn zero_weights_give_zero_logits() {
        let ck = Checkpoint::zeros(ModelConfig::byte_level(2, 2, 4, 8)).unwrap();
        let (logits, _) = forward(&ck, &[1, 2, 3], false).unwrap();
        assert_eq!(logits.shape(), &[3, 259]);
        assert!(logits.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trace_structure() {
        let ck = Checkpoint::random(ModelConfig::byte_level(2, 2, 4, 8), 5, 1.0).unwrap();
        let (_, tr) = forward(&ck, &[257, 10, 20, 30, 40, 50], true).unwrap();
        let tr = tr.unwrap();
        for l in 0..2 {
            assert_eq!(tr.ffn_act(l).shape(), &[6, 8]);
            for h in 0..2 {
                let a = tr.attn(l, h);
                assert_eq!(a.shape(), &[6, 6]);
                for i in 0..6 {
                    let s: f32 = a.row(i).iter().sum();
                    assert!((s - 1.0).abs() < 1e-6);
                    assert!(a.row(i)[i + 1..].iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn input_errors() {
        let mut cfg = ModelConfig::byte_level(1, 1, 2, 2);
        cfg.max_seq_len = 3;
        let ck = Checkpoint::zeros(cfg).unwrap();
        assert!(matches!(forward(&ck, &[259], false), Err(Error::Input(_))));
        assert!(matches!(forward(&ck, &[], false), Err(Error::Input(_))));
        assert!(matches!(
            forward(&ck, &[1, 2, 3, 4], false),
            Err(Error::Capacity { needed: 4, max: 3 })
        ));
    }

    #[test]
    fn norm_path_runs_and_stays_finite() {
        let mut cfg = ModelConfig::byte_level(2, 2, 4, 8);
        cfg.use_norm = true;
        cfg.activation = crate::tensor::Activation::Gelu;
        let ck = Checkpoint::random(cfg, 2, 1.0).unwrap();
        let (logits, _) = forward(&ck, &[1, 2, 3, 4], false).unwrap();
        assert!(logits.is_finite());
    }
}
