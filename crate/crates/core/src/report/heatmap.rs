// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layer × head heatmaps as SVG or CSV.
//!
//! Colours come from fixed ColorBrewer ramps: Blues for sequential data and
//! a reversed RdBu for signed data. A diverging scale is symmetric about zero
//! and zero maps exactly to the neutral midpoint. The scale bounds are written
//! into the output so figures from different runs can be compared.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::write_atomic;
use crate::error::{Error, Result};
use crate::probes::HeadMatrix;

const BLUES: [&str; 9] = [
    "#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6", "#4292c6", "#2171b5", "#08519c", "#08306b",
];

/// Blue for negative, red for positive; the middle entry is the neutral colour.
const RDBU_R: [&str; 11] = [
    "#053061", "#2166ac", "#4393c3", "#92c5de", "#d1e5f0", "#f7f7f7", "#fddbc7", "#f4a582", "#d6604d",
    "#b2182b", "#67001f",
];

pub const NEUTRAL: &str = "#f7f7f7";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleKind {
    #[default]
    Sequential,
    Diverging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapFormat {
    #[default]
    Svg,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub matrix: HeadMatrix,
    pub title: String,
    pub row_label: String,
    pub col_label: String,
    /// Requested scale; negative values force a diverging one.
    pub scale: ScaleKind,
    /// Fixed bounds; derived from the data when absent.
    pub vmin: Option<f64>,
    pub vmax: Option<f64>,
    pub format: HeatmapFormat,
}

impl HeatmapSpec {
    pub fn new(matrix: HeadMatrix, title: &str) -> Self {
        Self {
            matrix,
            title: title.into(),
            row_label: "layer".into(),
            col_label: "head".into(),
            scale: ScaleKind::Sequential,
            vmin: None,
            vmax: None,
            format: HeatmapFormat::Svg,
        }
    }
}

/// Resolved colour scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub kind: ScaleKind,
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub fn for_spec(spec: &HeatmapSpec) -> Result<Self> {
        let v = &spec.matrix.values;
        if v.is_empty() || spec.matrix.layers == 0 || spec.matrix.heads == 0 {
            return Err(Error::Input("heatmap matrix is empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("heatmap values"));
        }
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let kind = if lo < 0.0 { ScaleKind::Diverging } else { spec.scale };
        Ok(match kind {
            ScaleKind::Diverging => {
                let m = spec
                    .vmin
                    .map(f64::abs)
                    .into_iter()
                    .chain(spec.vmax.map(f64::abs))
                    .fold(lo.abs().max(hi.abs()), f64::max);
                Scale { kind, min: -m, max: m }
            }
            ScaleKind::Sequential => Scale {
                kind,
                min: spec.vmin.unwrap_or(lo),
                max: spec.vmax.unwrap_or(hi),
            },
        })
    }

    pub fn color(&self, x: f64) -> String {
        let t = if self.max > self.min {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else if self.kind == ScaleKind::Diverging {
            0.5
        } else {
            0.0
        };
        match self.kind {
            ScaleKind::Sequential => ramp(&BLUES, t),
            ScaleKind::Diverging if x == 0.0 => NEUTRAL.to_string(),
            ScaleKind::Diverging => ramp(&RDBU_R, t),
        }
    }
}

fn rgb(hex: &str) -> [f64; 3] {
    let p = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).expect("palette entry") as f64;
    [p(1), p(3), p(5)]
}

fn ramp(stops: &[&str], t: f64) -> String {
    let pos = t * (stops.len() - 1) as f64;
    let i = (pos.floor() as usize).min(stops.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (rgb(stops[i]), rgb(stops[i + 1]));
    let c: Vec<u8> = (0..3).map(|k| (a[k] + (b[k] - a[k]) * f).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const CELL: usize = 28;
const LEFT: usize = 60;
const TOP: usize = 40;

pub fn render_svg(spec: &HeatmapSpec) -> Result<String> {
    let scale = Scale::for_spec(spec)?;
    let m = &spec.matrix;
    let width = LEFT + m.heads * CELL + 20;
    let height = TOP + m.layers * CELL + 50;
    let mut s = String::new();
    let kind = match scale.kind {
        ScaleKind::Sequential => "sequential",
        ScaleKind::Diverging => "diverging",
    };
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" data-scale="{kind}" data-min="{:.6}" data-max="{:.6}">"#,
        scale.min, scale.max
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="20" font-size="13">{}</text>"#, escape(&spec.title));
    for (l, h, v) in m.iter() {
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"><title>{} {l}, {} {h}: {v:.6}</title></rect>"#,
            LEFT + h * CELL,
            TOP + l * CELL,
            scale.color(v),
            escape(&spec.row_label),
            escape(&spec.col_label),
        );
    }
    for l in 0..m.layers {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{l}</text>"#,
            LEFT - 6,
            TOP + l * CELL + CELL / 2 + 4
        );
    }
    for h in 0..m.heads {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{h}</text>"#,
            LEFT + h * CELL + CELL / 2,
            TOP - 4
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{}" font-size="11">{} ({kind} scale, min {:.6}, max {:.6}); rows: {}, columns: {}</text>"#,
        TOP + m.layers * CELL + 24,
        escape(&spec.title),
        scale.min,
        scale.max,
        escape(&spec.row_label),
        escape(&spec.col_label),
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Long-form CSV: one `row,col,value,color` line per cell.
pub fn render_csv(spec: &HeatmapSpec) -> Result<String> {
    let scale = Scale::for_spec(spec)?;
    let mut s = format!("{},{},value,color\n", spec.row_label, spec.col_label);
    for (l, h, v) in spec.matrix.iter() {
        let _ = writeln!(s, "{l},{h},{v:.6},{}", scale.color(v));
    }
    Ok(s)
}

pub fn emit_heatmap(spec: &HeatmapSpec, path: &Path) -> Result<()> {
    let body = match spec.format {
        HeatmapFormat::Svg => render_svg(spec)?,
        HeatmapFormat::Csv => render_csv(spec)?,
    };
    write_atomic(path, body.as_bytes())
}
