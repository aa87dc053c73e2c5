// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-layer FFN activation statistics: mean, population variance and
//! sparsity (fraction of activations with `|a| <= tau`).
//!
//! Each prompt is reduced to one accumulator per layer; accumulators are then
//! merged left to right in prompt order, so results do not depend on how the
//! prompts were scheduled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, Checkpoint};
use crate::tokenizer::TokenId;

pub const DEFAULT_TAU: f64 = 1e-3;

/// Streaming mean/variance (Welford, merged with Chan's update) plus an
/// inactive-value counter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub inactive: u64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64, tau: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
        if x.abs() <= tau {
            self.inactive += 1;
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
        self.inactive += other.inactive;
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn sparsity(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.inactive as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub mean: f64,
    pub variance: f64,
    pub sparsity: f64,
    pub sample_count: u64,
}

impl From<&Accumulator> for LayerStats {
    fn from(a: &Accumulator) -> Self {
        Self {
            mean: a.mean,
            variance: a.variance(),
            sparsity: a.sparsity(),
            sample_count: a.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationStats {
    pub tau: f64,
    pub layers: Vec<LayerStats>,
}

fn prompt_accumulators(ckpt: &Checkpoint, prompt: &[TokenId], tau: f64) -> Result<Vec<Accumulator>> {
    let (_, trace) = forward(ckpt, prompt, true)?;
    let trace = trace.expect("trace requested");
    Ok((0..ckpt.config().n_layers)
        .map(|l| {
            let mut acc = Accumulator::default();
            for &a in trace.ffn_act(l).data() {
                acc.push(a as f64, tau);
            }
            acc
        })
        .collect())
}

/// Statistics of `g(H̃ W_in)` pooled over every token and neuron of every prompt.
pub fn collect_activation_stats(
    ckpt: &Checkpoint,
    prompts: &[Vec<TokenId>],
    tau: f64,
) -> Result<ActivationStats> {
    if prompts.is_empty() {
        return Err(Error::Input("no prompts given".into()));
    }
    if !(tau >= 0.0) {
        return Err(Error::Input(format!("tau must be >= 0, got {tau}")));
    }
    let partials: Vec<Vec<Accumulator>> = prompts
        .par_iter()
        .map(|p| prompt_accumulators(ckpt, p, tau))
        .collect::<Result<_>>()?;
    let mut total = vec![Accumulator::default(); ckpt.config().n_layers];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(ActivationStats {
        tau,
        layers: total.iter().map(LayerStats::from).collect(),
    })
}

/// `(m_c - m_u) / m_u`.
pub fn relative_difference(m_c: f64, m_u: f64) -> Result<f64> {
    if m_u == 0.0 {
        return Err(Error::UndefinedBaseline);
    }
    Ok((m_c - m_u) / m_u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStatsDelta {
    pub layer: usize,
    pub d_mean: f64,
    pub d_variance: f64,
    pub d_sparsity: f64,
}

/// Relative difference of `a` against baseline `b`, per layer and statistic.
pub fn stats_profile_diff(a: &ActivationStats, b: &ActivationStats) -> Result<Vec<LayerStatsDelta>> {
    if a.layers.len() != b.layers.len() {
        return Err(Error::Compatibility(format!(
            "layer counts differ: {} vs {}",
            a.layers.len(),
            b.layers.len()
        )));
    }
    if a.tau != b.tau {
        return Err(Error::Compatibility(format!("tau differs: {} vs {}", a.tau, b.tau)));
    }
    a.layers
        .iter()
        .zip(&b.layers)
        .enumerate()
        .map(|(layer, (x, y))| {
            Ok(LayerStatsDelta {
                layer,
                d_mean: relative_difference(x.mean, y.mean)?,
                d_variance: relative_difference(x.variance, y.variance)?,
                d_sparsity: relative_difference(x.sparsity, y.sparsity)?,
            })
        })
        .collect()
}
