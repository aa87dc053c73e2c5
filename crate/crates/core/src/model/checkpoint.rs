// SPDX-License-Identifier: MIT OR Apache-2.0

//! Parameter container for one decoder-only model.
//!
//! Weights act on row vectors: a hidden state `h[1×d_model]` is projected as
//! `h · W`. Tensors are addressed by their canonical names:
//!
//! | name                    | shape               |
//! |-------------------------|---------------------|
//! | `embed.tok`             | `vocab × d_model`   |
//! | `layer.{l}.norm.attn`   | `d_model` (norm on) |
//! | `layer.{l}.attn.{q,k,v,o}` | `d_model × d_model` |
//! | `layer.{l}.norm.ffn`    | `d_model` (norm on) |
//! | `layer.{l}.ffn.in`      | `d_model × d_ffn`   |
//! | `layer.{l}.ffn.out`     | `d_ffn × d_model`   |
//! | `final.norm`            | `d_model` (norm on) |
//! | `head.out`              | `d_model × vocab`   |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of one transformer layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Option<Tensor>,
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    /// Output projection applied to the concatenated heads.
    pub o: Tensor,
    pub ffn_norm: Option<Tensor>,
    pub ffn_in: Tensor,
    pub ffn_out: Tensor,
}

/// A full parameter set plus its architecture config.
///
/// Fields are private so that every tensor keeps the shape its config
/// dictates; contents are mutable through [`Checkpoint::tensor_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    config: ModelConfig,
    token_embedding: Tensor,
    layers: Vec<LayerWeights>,
    final_norm: Option<Tensor>,
    output_head: Tensor,
}

/// Canonical tensor names for `config`, in file order.
pub fn tensor_names(config: &ModelConfig) -> Vec<String> {
    let mut names = vec!["embed.tok".to_string()];
    for l in 0..config.n_layers {
        if config.use_norm {
            names.push(format!("layer.{l}.norm.attn"));
        }
        for p in ["q", "k", "v", "o"] {
            names.push(format!("layer.{l}.attn.{p}"));
        }
        if config.use_norm {
            names.push(format!("layer.{l}.norm.ffn"));
        }
        names.push(format!("layer.{l}.ffn.in"));
        names.push(format!("layer.{l}.ffn.out"));
    }
    if config.use_norm {
        names.push("final.norm".to_string());
    }
    names.push("head.out".to_string());
    names
}

/// Shape a tensor called `name` must have under `config`.
pub fn expected_shape(config: &ModelConfig, name: &str) -> Option<Vec<usize>> {
    let d = config.d_model;
    match name {
        "embed.tok" => return Some(vec![config.vocab_size, d]),
        "head.out" => return Some(vec![d, config.vocab_size]),
        "final.norm" => return config.use_norm.then(|| vec![d]),
        _ => {}
    }
    let rest = name.strip_prefix("layer.")?;
    let (idx, part) = rest.split_once('.')?;
    let l: usize = idx.parse().ok()?;
    if l >= config.n_layers || idx != l.to_string() {
        return None;
    }
    match part {
        "attn.q" | "attn.k" | "attn.v" | "attn.o" => Some(vec![d, d]),
        "ffn.in" => Some(vec![d, config.d_ffn]),
        "ffn.out" => Some(vec![config.d_ffn, d]),
        "norm.attn" | "norm.ffn" => config.use_norm.then(|| vec![d]),
        _ => None,
    }
}

impl Checkpoint {
    /// All-zero weights (norm scales, when enabled, are ones).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let ones = || config.use_norm.then(|| Tensor::new(vec![d], vec![1.0; d]).unwrap());
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                attn_norm: ones(),
                q: Tensor::zeros(vec![d, d]),
                k: Tensor::zeros(vec![d, d]),
                v: Tensor::zeros(vec![d, d]),
                o: Tensor::zeros(vec![d, d]),
                ffn_norm: ones(),
                ffn_in: Tensor::zeros(vec![d, config.d_ffn]),
                ffn_out: Tensor::zeros(vec![config.d_ffn, d]),
            })
            .collect();
        Ok(Self {
            token_embedding: Tensor::zeros(vec![config.vocab_size, d]),
            output_head: Tensor::zeros(vec![d, config.vocab_size]),
            final_norm: ones(),
            layers,
            config,
        })
    }

    /// Weights drawn uniformly from `[-scale/sqrt(fan_in), scale/sqrt(fan_in)]`
    /// with a seeded ChaCha stream; norm scales drawn near 1.
    pub fn random(config: ModelConfig, seed: u64, scale: f32) -> Result<Self> {
        let mut ckpt = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for name in tensor_names(&ckpt.config) {
            let t = ckpt.tensor_mut(&name).expect("canonical name");
            let is_norm = name.contains("norm");
            let fan_in = if name == "embed.tok" { 1 } else { t.shape()[0] };
            let bound = scale / (fan_in as f32).sqrt();
            for v in t.data_mut() {
                *v = if is_norm {
                    rng.random_range(0.5f32..1.5)
                } else {
                    rng.random_range(-bound..=bound)
                };
            }
        }
        Ok(ckpt)
    }

    /// Assemble a checkpoint from named tensors, checking names and shapes.
    pub fn from_named<I>(config: ModelConfig, tensors: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Tensor)>,
    {
        let mut ckpt = Self::zeros(config)?;
        let mut seen = std::collections::BTreeSet::new();
        for (name, t) in tensors {
            let want = expected_shape(&ckpt.config, &name)
                .ok_or_else(|| Error::Shape(format!("unexpected tensor `{name}`")))?;
            if t.shape() != want.as_slice() {
                return Err(Error::Shape(format!(
                    "tensor `{name}` has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Shape(format!("duplicate tensor `{name}`")));
            }
            *ckpt.slot_mut(&name).expect("validated name") = t;
        }
        let missing: Vec<String> = tensor_names(&ckpt.config)
            .into_iter()
            .filter(|n| !seen.contains(n))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Shape(format!("missing tensors: {}", missing.join(", "))));
        }
        Ok(ckpt)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn token_embedding(&self) -> &Tensor {
        &self.token_embedding
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn final_norm(&self) -> Option<&Tensor> {
        self.final_norm.as_ref()
    }

    pub fn output_head(&self) -> &Tensor {
        &self.output_head
    }

    /// `(name, tensor)` pairs in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        tensor_names(&self.config)
            .into_iter()
            .map(|n| {
                let t = self.tensor(&n).expect("canonical name");
                (n, t)
            })
            .collect()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        expected_shape(&self.config, name)?;
        match name {
            "embed.tok" => return Some(&self.token_embedding),
            "head.out" => return Some(&self.output_head),
            "final.norm" => return self.final_norm.as_ref(),
            _ => {}
        }
        let (l, part) = split_layer_name(name)?;
        let layer = &self.layers[l];
        match part {
            "attn.q" => Some(&layer.q),
            "attn.k" => Some(&layer.k),
            "attn.v" => Some(&layer.v),
            "attn.o" => Some(&layer.o),
            "ffn.in" => Some(&layer.ffn_in),
            "ffn.out" => Some(&layer.ffn_out),
            "norm.attn" => layer.attn_norm.as_ref(),
            "norm.ffn" => layer.ffn_norm.as_ref(),
            _ => None,
        }
    }

    /// Mutable access to a tensor's values; its shape cannot change.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slot_mut(name)
    }

    fn slot_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        expected_shape(&self.config, name)?;
        match name {
            "embed.tok" => return Some(&mut self.token_embedding),
            "head.out" => return Some(&mut self.output_head),
            "final.norm" => return self.final_norm.as_mut(),
            _ => {}
        }
        let (l, part) = split_layer_name(name)?;
        let layer = &mut self.layers[l];
        match part {
            "attn.q" => Some(&mut layer.q),
            "attn.k" => Some(&mut layer.k),
            "attn.v" => Some(&mut layer.v),
            "attn.o" => Some(&mut layer.o),
            "ffn.in" => Some(&mut layer.ffn_in),
            "ffn.out" => Some(&mut layer.ffn_out),
            "norm.attn" => layer.attn_norm.as_mut(),
            "norm.ffn" => layer.ffn_norm.as_mut(),
            _ => None,
        }
    }
}

fn split_layer_name(name: &str) -> Option<(usize, &str)> {
    let rest = name.strip_prefix("layer.")?;
    let (idx, part) = rest.split_once('.')?;
    Some((idx.parse().ok()?, part))
}
