// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rotary position embedding.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rotate dimension pairs `(2j, 2j+1)` of each row by `pos * base^(-2j/d)`.
///
/// `x` is `T × d` with `d` even; `positions[t]` is the position of row `t`.
pub fn apply_rope(x: &Tensor, positions: &[usize], base: f64) -> Result<Tensor> {
    let (rows, d) = match x.shape() {
        [r, c] => (*r, *c),
        s => return Err(Error::Shape(format!("apply_rope: expected T x d, got {s:?}"))),
    };
    if d % 2 != 0 {
        return Err(Error::Config(format!("apply_rope: d_head must be even, got {d}")));
    }
    if positions.len() != rows {
        return Err(Error::Shape(format!(
            "apply_rope: {} positions for {rows} rows",
            positions.len()
        )));
    }
    let freqs = inverse_frequencies(d, base);
    let mut out = x.clone();
    for (t, &pos) in positions.iter().enumerate() {
        rotate_row(out.row_mut(t), pos, &freqs);
    }
    Ok(out)
}

/// `base^(-2j/d)` for each pair `j`.
pub fn inverse_frequencies(d: usize, base: f64) -> Vec<f64> {
    (0..d / 2)
        .map(|j| base.powf(-(2.0 * j as f64) / d as f64))
        .collect()
}

pub(crate) fn rotate_row(row: &mut [f32], pos: usize, freqs: &[f64]) {
    if pos == 0 {
        return;
    }
    for (j, &f) in freqs.iter().enumerate() {
        let angle = pos as f64 * f;
        let (sin, cos) = angle.sin_cos();
        let a = f64::from(row[2 * j]);
        let b = f64::from(row[2 * j + 1]);
        row[2 * j] = (a * cos - b * sin) as f32;
        row[2 * j + 1] = (a * sin + b * cos) as f32;
    }
}
