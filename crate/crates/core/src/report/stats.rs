// SPDX-License-Identifier: MIT OR Apache-2.0

//! Repeated-run summaries with 95% confidence half-widths.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Normal-approximation factor for a two-sided 95% interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    #[default]
    Normal,
    /// Student t quantile with `n - 1` degrees of freedom.
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divides by `n - 1`).
    pub std: f64,
    pub ci95: f64,
}

fn factor(n: usize, method: CiMethod) -> Result<f64> {
    match method {
        CiMethod::Normal => Ok(Z95),
        CiMethod::T => {
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .map_err(|e| Error::Config(format!("t distribution: {e}")))?;
            Ok(t.inverse_cdf(0.975))
        }
    }
}

impl RunStatistics {
    /// Statistics from an already summarised run set.
    pub fn from_summary(mean: f64, std: f64, n: usize, method: CiMethod) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        Ok(Self {
            n,
            mean,
            std,
            ci95: factor(n, method)? * std / (n as f64).sqrt(),
        })
    }
}

pub fn confidence_interval(samples: &[f64]) -> Result<RunStatistics> {
    confidence_interval_with(samples, CiMethod::Normal)
}

pub fn confidence_interval_with(samples: &[f64], method: CiMethod) -> Result<RunStatistics> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("confidence_interval samples"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let std = (ss / (n - 1) as f64).sqrt();
    RunStatistics::from_summary(mean, std, n, method)
}
