// SPDX-License-Identifier: MIT OR Apache-2.0

//! Helpers shared by the integration tests.

#![allow(dead_code)]

pub mod reference;
pub mod smoke;

use probe_forge::model::{read_manifest, Checkpoint, Manifest, ModelConfig};
use probe_forge::tensor::Activation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random small architecture: L ≤ 4, M ≤ 4, d_model ≤ 64.
pub fn random_config(rng: &mut ChaCha8Rng) -> ModelConfig {
    let n_heads = rng.random_range(1..=4);
    let d_head = 2 * rng.random_range(1..=(32 / n_heads).min(8));
    let mut cfg = ModelConfig::byte_level(
        rng.random_range(1..=4),
        n_heads,
        d_head,
        rng.random_range(1..=48),
    );
    cfg.activation = [Activation::Silu, Activation::Gelu, Activation::Relu][rng.random_range(0..3)];
    cfg.use_norm = rng.random_bool(0.5);
    cfg.rope_base = [100.0, 10_000.0, 500_000.0][rng.random_range(0..3)];
    cfg.max_seq_len = 64;
    cfg
}

pub fn random_model(seed: u64) -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = random_config(&mut rng);
    Checkpoint::random(cfg, rng.random(), 1.0).expect("valid random config")
}

/// Random token sequence of length `1..=max_len` inside the vocabulary.
pub fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<u32> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| rng.random_range(0..vocab as u32)).collect()
}

/// Directory holding the bundled fixtures.
pub fn fixtures() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Re-encode checkpoint `bytes` after editing its manifest; the payload is kept.
pub fn with_manifest(bytes: &[u8], edit: impl FnOnce(&mut Manifest)) -> Vec<u8> {
    let (mut m, payload) = read_manifest(bytes).unwrap();
    edit(&mut m);
    let json = serde_json::to_vec(&m).unwrap();
    let mut out = b"TPROBE01".to_vec();
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    out
}
