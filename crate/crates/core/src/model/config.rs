// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Activation;
use crate::tokenizer;

/// Architecture of a decoder-only model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    pub rope_base: f64,
    #[serde(default)]
    pub activation: Activation,
    /// RMS pre-norm before each sub-block and before the output head.
    #[serde(default)]
    pub use_norm: bool,
    pub max_seq_len: usize,
}

impl ModelConfig {
    /// Small byte-vocabulary config with `d_model = n_heads * d_head`.
    pub fn byte_level(n_layers: usize, n_heads: usize, d_head: usize, d_ffn: usize) -> Self {
        Self {
            n_layers,
            n_heads,
            d_model: n_heads * d_head,
            d_head,
            d_ffn,
            vocab_size: tokenizer::VOCAB_SIZE,
            rope_base: 10_000.0,
            activation: Activation::Silu,
            use_norm: false,
            max_seq_len: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_layers < 1 {
            return bad("n_layers must be at least 1".into());
        }
        if self.n_heads < 1 {
            return bad("n_heads must be at least 1".into());
        }
        if self.vocab_size < 2 {
            return bad(format!("vocab_size must be at least 2, got {}", self.vocab_size));
        }
        if self.d_model != self.n_heads * self.d_head {
            return bad(format!(
                "d_model ({}) must equal n_heads ({}) x d_head ({})",
                self.d_model, self.n_heads, self.d_head
            ));
        }
        if self.d_head == 0 || self.d_head % 2 != 0 {
            return bad(format!("d_head must be even and positive, got {}", self.d_head));
        }
        if self.d_ffn == 0 {
            return bad("d_ffn must be positive".into());
        }
        if !(self.rope_base.is_finite() && self.rope_base > 0.0) {
            return bad(format!("rope_base must be a positive real, got {}", self.rope_base));
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be positive".into());
        }
        Ok(())
    }

    /// Names of the fields on which `self` and `other` differ.
    pub fn differing_fields(&self, other: &ModelConfig) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => {$(
                if self.$f != other.$f { out.push(stringify!($f)); }
            )*};
        }
        cmp!(
            n_layers, n_heads, d_model, d_head, d_ffn, vocab_size, rope_base, activation,
            use_norm, max_seq_len
        );
        out
    }

    /// Error unless both configs are field-identical.
    pub fn ensure_compatible(&self, other: &ModelConfig) -> Result<()> {
        let diff = self.differing_fields(other);
        if diff.is_empty() {
            Ok(())
        } else {
            Err(Error::Compatibility(format!(
                "configs differ in: {}",
                diff.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut c = ModelConfig::byte_level(2, 2, 4, 16);
        assert!(c.validate().is_ok());
        c.d_model = 9;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::byte_level(2, 2, 3, 16);
        c.d_model = 6;
        assert!(c.validate().is_err(), "odd d_head");
        let mut c = ModelConfig::byte_level(0, 2, 4, 16);
        assert!(c.validate().is_err());
        c.n_layers = 1;
        c.vocab_size = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn differing_fields_are_listed() {
        let a = ModelConfig::byte_level(2, 2, 4, 16);
        let mut b = a.clone();
        b.d_ffn = 8;
        b.use_norm = true;
        assert_eq!(a.differing_fields(&b), vec!["d_ffn", "use_norm"]);
        let msg = a.ensure_compatible(&b).unwrap_err().to_string();
        assert!(msg.contains("d_ffn") && msg.contains("use_norm"));
    }
}
