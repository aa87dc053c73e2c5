// SPDX-License-Identifier: MIT OR Apache-2.0

//! Module replacement between architecture-identical checkpoints.
//!
//! An MHA swap copies `attn.{q,k,v,o}` (plus `norm.attn` when norms are on);
//! an FFN swap copies `ffn.{in,out}` (plus `norm.ffn`). Embeddings, the
//! output head and the final norm never move.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Mha,
    Ffn,
}

impl ModuleKind {
    /// Per-layer tensor suffixes owned by this module.
    pub fn parts(self) -> &'static [&'static str] {
        match self {
            ModuleKind::Mha => &["norm.attn", "attn.q", "attn.k", "attn.v", "attn.o"],
            ModuleKind::Ffn => &["norm.ffn", "ffn.in", "ffn.out"],
        }
    }

    /// Whether the canonical tensor `name` belongs to this module.
    pub fn owns(self, name: &str) -> bool {
        name.strip_prefix("layer.")
            .and_then(|r| r.split_once('.'))
            .is_some_and(|(_, part)| self.parts().contains(&part))
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModuleKind::Mha => "mha",
            ModuleKind::Ffn => "ffn",
        })
    }
}

impl FromStr for ModuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mha" => Ok(ModuleKind::Mha),
            "ffn" => Ok(ModuleKind::Ffn),
            other => Err(Error::Input(format!("unknown module `{other}` (expected mha or ffn)"))),
        }
    }
}

/// Which module to transplant, and in which layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapSpec {
    pub module: ModuleKind,
    /// Inclusive layer range; `None` means every layer.
    pub layers: Option<RangeInclusive<usize>>,
}

impl SwapSpec {
    pub fn all_layers(module: ModuleKind) -> Self {
        Self {
            module,
            layers: None,
        }
    }

    fn layer_range(&self, n_layers: usize) -> Result<RangeInclusive<usize>> {
        match &self.layers {
            None => Ok(0..=n_layers - 1),
            Some(r) if r.start() <= r.end() && *r.end() < n_layers => Ok(r.clone()),
            Some(r) => Err(Error::Input(format!(
                "layer range {}..{} is outside [0, {n_layers})",
                r.start(),
                r.end()
            ))),
        }
    }
}

/// Parse `i..j` (inclusive on both ends) or a single layer index `i`.
pub fn parse_layer_range(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || Error::Input(format!("bad layer range `{s}` (expected i..j or i)"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

/// Copy of `recipient` whose `spec.module` tensors in `spec.layers` are
/// replaced by bit-copies of `donor`'s.
pub fn swap_module(recipient: &Checkpoint, donor: &Checkpoint, spec: &SwapSpec) -> Result<Checkpoint> {
    recipient.config().ensure_compatible(donor.config())?;
    let range = spec.layer_range(recipient.config().n_layers)?;
    let mut out = recipient.clone();
    for l in range {
        for part in spec.module.parts() {
            let name = format!("layer.{l}.{part}");
            let Some(src) = donor.tensor(&name) else {
                continue; // norm scales only exist with use_norm
            };
            out.tensor_mut(&name)
                .expect("compatible configs share tensor names")
                .data_mut()
                .copy_from_slice(src.data());
        }
    }
    Ok(out)
}

/// Per-tensor maximum absolute elementwise difference, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub entries: Vec<(String, f32)>,
}

impl DiffReport {
    pub fn get(&self, name: &str) -> Option<f32> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Names of tensors whose difference is nonzero.
    pub fn changed(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

pub fn diff_checkpoints(a: &Checkpoint, b: &Checkpoint) -> Result<DiffReport> {
    a.config().ensure_compatible(b.config())?;
    let entries = a
        .named_tensors()
        .into_iter()
        .map(|(name, ta)| {
            let tb = b.tensor(&name).expect("compatible configs share tensor names");
            let m = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f32, f32::max);
            (name, m)
        })
        .collect();
    Ok(DiffReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{to_bytes, ModelConfig};

    fn pair(use_norm: bool) -> (Checkpoint, Checkpoint) {
        let mut cfg = ModelConfig::byte_level(3, 2, 4, 8);
        cfg.use_norm = use_norm;
        (
            Checkpoint::random(cfg.clone(), 1, 1.0).unwrap(),
            Checkpoint::random(cfg, 2, 1.0).unwrap(),
        )
    }

    #[test]
    fn self_swap_is_identity() {
        let (a, _) = pair(true);
        for m in [ModuleKind::Mha, ModuleKind::Ffn] {
            let s = swap_module(&a, &a, &SwapSpec::all_layers(m)).unwrap();
            assert_eq!(to_bytes(&s), to_bytes(&a));
        }
    }

    #[test]
    fn round_trip_restores_recipient() {
        let (a, b) = pair(false);
        let spec = SwapSpec::all_layers(ModuleKind::Ffn);
        let ab = swap_module(&a, &b, &spec).unwrap();
        assert_ne!(ab, a);
        assert_eq!(swap_module(&ab, &a, &spec).unwrap(), a);
    }

    #[test]
    fn footprint_and_norms_travel_with_module() {
        let (a, b) = pair(true);
        let s = swap_module(&a, &b, &SwapSpec::all_layers(ModuleKind::Mha)).unwrap();
        let d = diff_checkpoints(&a, &s).unwrap();
        let changed = d.changed();
        assert_eq!(changed.len(), 3 * 5);
        assert!(changed.iter().all(|n| ModuleKind::Mha.owns(n)));
        assert!(changed.contains(&"layer.1.norm.attn"));
    }

    #[test]
    fn layer_range_limits_the_swap() {
        let (a, b) = pair(false);
        let spec = SwapSpec {
            module: ModuleKind::Ffn,
            layers: Some(1..=1),
        };
        let d = diff_checkpoints(&a, &swap_module(&a, &b, &spec).unwrap()).unwrap();
        assert_eq!(d.changed(), vec!["layer.1.ffn.in", "layer.1.ffn.out"]);
        let out_of_range = SwapSpec {
            module: ModuleKind::Ffn,
            layers: Some(1..=3),
        };
        assert!(swap_module(&a, &b, &out_of_range).is_err());
    }

    #[test]
    fn incompatible_configs_are_rejected() {
        let (a, _) = pair(false);
        let mut cfg = a.config().clone();
        cfg.d_ffn = 4;
        cfg.rope_base = 500.0;
        let c = Checkpoint::random(cfg, 3, 1.0).unwrap();
        let err = swap_module(&a, &c, &SwapSpec::all_layers(ModuleKind::Mha)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("d_ffn") && msg.contains("rope_base"), "{msg}");
        assert!(matches!(diff_checkpoints(&a, &c), Err(Error::Compatibility(_))));
    }

    #[test]
    fn layer_range_parsing() {
        assert_eq!(parse_layer_range("0..2").unwrap(), 0..=2);
        assert_eq!(parse_layer_range("1..=3").unwrap(), 1..=3);
        assert_eq!(parse_layer_range("4").unwrap(), 4..=4);
        assert!(parse_layer_range("3..1").is_err());
        assert!(parse_layer_range("a..b").is_err());
    }
}
