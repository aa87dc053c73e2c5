// SPDX-License-Identifier: MIT OR Apache-2.0

//! Straightforward f64 transformer used as an oracle. It reads weights only
//! by tensor name and shares no code with the library's forward pass.

use probe_forge::model::Checkpoint;
use probe_forge::tensor::Activation;

type Mat = Vec<Vec<f64>>;

fn weights(ck: &Checkpoint, name: &str) -> Mat {
    let t = ck.tensor(name).unwrap_or_else(|| panic!("missing {name}"));
    let cols = t.shape()[1];
    t.data()
        .chunks(cols)
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

fn vector(ck: &Checkpoint, name: &str) -> Option<Vec<f64>> {
    ck.tensor(name).map(|t| t.data().iter().map(|&v| v as f64).collect())
}

fn mul(x: &Mat, w: &Mat) -> Mat {
    x.iter()
        .map(|row| {
            (0..w[0].len())
                .map(|j| row.iter().enumerate().map(|(k, a)| a * w[k][j]).sum())
                .collect()
        })
        .collect()
}

fn norm(x: &Mat, scale: &Option<Vec<f64>>) -> Mat {
    match scale {
        None => x.clone(),
        Some(g) => x
            .iter()
            .map(|row| {
                let rms = (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64 + 1e-6).sqrt();
                row.iter().zip(g).map(|(v, s)| v / rms * s).collect()
            })
            .collect(),
    }
}

fn act(x: f64, kind: Activation) -> f64 {
    match kind {
        Activation::Relu => if x > 0.0 { x } else { 0.0 },
        Activation::Silu => x * (1.0 / (1.0 + (-x).exp())),
        Activation::Gelu => {
            let c = (2.0 / std::f64::consts::PI).sqrt();
            0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
        }
    }
}

fn rotate(v: &[f64], pos: usize, base: f64) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d];
    for j in 0..d / 2 {
        let theta = pos as f64 / base.powf(2.0 * j as f64 / d as f64);
        let (a, b) = (v[2 * j], v[2 * j + 1]);
        out[2 * j] = a * theta.cos() - b * theta.sin();
        out[2 * j + 1] = a * theta.sin() + b * theta.cos();
    }
    out
}

/// Per-layer FFN activations and per-head attention matrices of a run.
pub struct ReferenceTrace {
    pub logits: Mat,
    pub attn: Vec<Mat>,
    pub ffn_act: Vec<Mat>,
}

pub fn run(ck: &Checkpoint, tokens: &[u32]) -> ReferenceTrace {
    let cfg = ck.config();
    let emb = weights(ck, "embed.tok");
    let mut h: Mat = tokens.iter().map(|&t| emb[t as usize].clone()).collect();
    let n = tokens.len();
    let dh = cfg.d_head;
    let mut attn_all = Vec::new();
    let mut ffn_all = Vec::new();
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("layer.{l}.{s}");
        let x = norm(&h, &vector(ck, &p("norm.attn")));
        let q = mul(&x, &weights(ck, &p("attn.q")));
        let k = mul(&x, &weights(ck, &p("attn.k")));
        let v = mul(&x, &weights(ck, &p("attn.v")));
        let mut concat = vec![vec![0.0; cfg.d_model]; n];
        for head in 0..cfg.n_heads {
            let cols = head * dh..(head + 1) * dh;
            let qh: Mat = (0..n).map(|i| rotate(&q[i][cols.clone()], i, cfg.rope_base)).collect();
            let kh: Mat = (0..n).map(|i| rotate(&k[i][cols.clone()], i, cfg.rope_base)).collect();
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                let s: Vec<f64> = (0..=i)
                    .map(|j| qh[i].iter().zip(&kh[j]).map(|(x, y)| x * y).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = s.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = s.iter().map(|x| (x - m).exp()).sum();
                for j in 0..=i {
                    a[i][j] = (s[j] - m).exp() / z;
                }
                for c in cols.clone() {
                    concat[i][c] = (0..=i).map(|j| a[i][j] * v[j][c]).sum();
                }
            }
            attn_all.push(a);
        }
        let mha = mul(&concat, &weights(ck, &p("attn.o")));
        let ht: Mat = h.iter().zip(&mha).map(|(r, m)| r.iter().zip(m).map(|(a, b)| a + b).collect()).collect();
        let pre = mul(&norm(&ht, &vector(ck, &p("norm.ffn"))), &weights(ck, &p("ffn.in")));
        let g: Mat = pre.iter().map(|r| r.iter().map(|&x| act(x, cfg.activation)).collect()).collect();
        let f = mul(&g, &weights(ck, &p("ffn.out")));
        h = ht.iter().zip(&f).map(|(r, m)| r.iter().zip(m).map(|(a, b)| a + b).collect()).collect();
        ffn_all.push(g);
    }
    let out = norm(&h, &vector(ck, "final.norm"));
    ReferenceTrace {
        logits: mul(&out, &weights(ck, "head.out")),
        attn: attn_all,
        ffn_act: ffn_all,
    }
}
