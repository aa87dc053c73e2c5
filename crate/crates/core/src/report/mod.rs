// SPDX-License-Identifier: MIT OR Apache-2.0

//! Output plumbing: atomic writes, run statistics, heatmaps and tables.

pub mod heatmap;
pub mod io;
pub mod stats;
pub mod table;
