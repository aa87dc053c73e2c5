// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention and FFN probes.

pub mod entropy;
pub mod ffn;
pub mod retrieval;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `layers × heads` matrix of reals, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMatrix {
    pub layers: usize,
    pub heads: usize,
    pub values: Vec<f64>,
}

impl HeadMatrix {
    pub fn zeros(layers: usize, heads: usize) -> Self {
        Self {
            layers,
            heads,
            values: vec![0.0; layers * heads],
        }
    }

    pub fn new(layers: usize, heads: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != layers * heads {
            return Err(Error::Shape(format!(
                "{layers}x{heads} matrix needs {} values, got {}",
                layers * heads,
                values.len()
            )));
        }
        Ok(Self {
            layers,
            heads,
            values,
        })
    }

    pub fn get(&self, layer: usize, head: usize) -> f64 {
        self.values[layer * self.heads + head]
    }

    pub fn set(&mut self, layer: usize, head: usize, v: f64) {
        self.values[layer * self.heads + head] = v;
    }

    /// `(layer, head, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (i / self.heads, i % self.heads, v))
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        &self.values[layer * self.heads..(layer + 1) * self.heads]
    }

    pub fn layer_means(&self) -> Vec<f64> {
        (0..self.layers)
            .map(|l| self.row(l).iter().sum::<f64>() / self.heads as f64)
            .collect()
    }

    pub fn ensure_same_shape(&self, other: &HeadMatrix) -> Result<()> {
        if self.layers == other.layers && self.heads == other.heads {
            Ok(())
        } else {
            Err(Error::Compatibility(format!(
                "matrix shapes differ: {}x{} vs {}x{}",
                self.layers, self.heads, other.layers, other.heads
            )))
        }
    }

    /// Elementwise `self - other`.
    pub fn minus(&self, other: &HeadMatrix) -> Result<HeadMatrix> {
        self.ensure_same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        HeadMatrix::new(self.layers, self.heads, values)
    }
}
