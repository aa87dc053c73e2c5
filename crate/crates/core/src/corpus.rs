// SPDX-License-Identifier: MIT OR Apache-2.0

//! Corpus statistics and seeded long/short mixing at a target token ratio.
//!
//! Samples are JSON lines with a `text` field. Token counts use the byte
//! tokenizer without the BOS marker. Emitted lines are the input lines
//! verbatim, so unknown fields pass through untouched.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer;

pub const DEFAULT_LENGTH_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// The original JSON line.
    pub line: String,
    pub tokens: usize,
}

impl Sample {
    /// Parse one JSON line; `None` when it is not an object with a string `text`.
    pub fn parse(line: &str) -> Option<Self> {
        let v: serde_json::Value = serde_json::from_str(line).ok()?;
        let text = v.get("text")?.as_str()?;
        Some(Self {
            line: line.to_string(),
            tokens: tokenizer::token_len(text),
        })
    }

    /// Sample for `text`, serialized as `{"text": ...}`.
    pub fn from_text(text: &str) -> Self {
        Self {
            line: serde_json::json!({ "text": text }).to_string(),
            tokens: tokenizer::token_len(text),
        }
    }
}

/// Parsed samples plus the number of unreadable nonblank lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub skipped: usize,
}

impl Corpus {
    pub fn parse(text: &str) -> Self {
        let mut c = Corpus::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match Sample::parse(line) {
                Some(s) => c.samples.push(s),
                None => c.skipped += 1,
            }
        }
        c
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn stats(&self) -> CorpusStats {
        let mut s = compute_corpus_stats(&self.samples);
        s.skipped = self.skipped;
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sample_count: usize,
    pub total_tokens: u64,
    pub skipped: usize,
}

impl CorpusStats {
    /// `total_tokens / sample_count`, unrounded.
    pub fn avg_length(&self) -> Result<f64> {
        if self.sample_count == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        Ok(self.total_tokens as f64 / self.sample_count as f64)
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        self.sample_count += other.sample_count;
        self.total_tokens += other.total_tokens;
        self.skipped += other.skipped;
    }
}

pub fn compute_corpus_stats(samples: &[Sample]) -> CorpusStats {
    CorpusStats {
        sample_count: samples.len(),
        total_tokens: samples.iter().map(|s| s.tokens as u64).sum(),
        skipped: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthClass {
    Long,
    Short,
}

/// Long iff the sample is strictly longer than `threshold` tokens.
pub fn classify_long_short(sample: &Sample, threshold: usize) -> LengthClass {
    if sample.tokens > threshold {
        LengthClass::Long
    } else {
        LengthClass::Short
    }
}

/// Long:short token ratio in integer parts, e.g. `8:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub long: u32,
    pub short: u32,
}

impl Ratio {
    pub fn long_share(&self) -> f64 {
        self.long as f64 / (self.long + self.short) as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.long, self.short)
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("bad ratio `{s}` (expected X:Y)"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let r = Ratio {
            long: a.trim().parse().map_err(|_| bad())?,
            short: b.trim().parse().map_err(|_| bad())?,
        };
        if r.long == 0 && r.short == 0 {
            return Err(Error::Input("ratio 0:0 selects nothing".into()));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub ratio: Ratio,
    pub token_budget: u64,
    pub length_threshold: usize,
    pub seed: u64,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratio.long == 0 && self.ratio.short == 0 {
            return Err(Error::Input("ratio 0:0 selects nothing".into()));
        }
        if self.token_budget == 0 {
            return Err(Error::Input("token budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub ratio: Ratio,
    pub seed: u64,
    pub token_budget: u64,
    pub target_long_share: f64,
    pub achieved_long_share: f64,
    pub long_tokens: u64,
    pub short_tokens: u64,
    pub long_samples: usize,
    pub short_samples: usize,
    /// Tokens emitted beyond the budget by the final sample.
    pub overshoot: u64,
    /// A corpus ran out before the budget was met.
    pub shortfall: bool,
    /// Samples from the long corpus at or below the length threshold.
    pub misclassified_long: usize,
    /// Samples from the short corpus above the length threshold.
    pub misclassified_short: usize,
}

#[derive(Debug, Clone)]
pub struct MixOutput<'a> {
    pub samples: Vec<&'a Sample>,
    pub report: MixReport,
}

impl MixOutput<'_> {
    /// The mixed stream as JSON lines, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for x in &self.samples {
            s.push_str(&x.line);
            s.push('\n');
        }
        s
    }
}

/// Draw samples without replacement from seeded shuffles of each corpus until
/// the budget is met. Each draw takes from the long corpus when its token
/// count lags the target, i.e. when `long_tokens * S <= short_tokens * L`.
pub fn mix_corpora<'a>(long: &'a [Sample], short: &'a [Sample], spec: &MixSpec) -> Result<MixOutput<'a>> {
    spec.validate()?;
    let (lp, sp) = (spec.ratio.long as u128, spec.ratio.short as u128);
    if lp > 0 && long.is_empty() {
        return Err(Error::Input("long corpus is empty".into()));
    }
    if sp > 0 && short.is_empty() {
        return Err(Error::Input("short corpus is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut long_order: Vec<usize> = (0..long.len()).collect();
    long_order.shuffle(&mut rng);
    let mut short_order: Vec<usize> = (0..short.len()).collect();
    short_order.shuffle(&mut rng);
    let (mut li, mut si) = (long_order.into_iter(), short_order.into_iter());

    let mut out = Vec::new();
    let (mut lt, mut st) = (0u64, 0u64);
    let (mut ln, mut sn) = (0usize, 0usize);
    let mut shortfall = false;
    while lt + st < spec.token_budget {
        let take_long = sp == 0 || (lp > 0 && lt as u128 * sp <= st as u128 * lp);
        let next = if take_long {
            li.next().map(|i| &long[i])
        } else {
            si.next().map(|i| &short[i])
        };
        let Some(s) = next else {
            shortfall = true;
            break;
        };
        if take_long {
            lt += s.tokens as u64;
            ln += 1;
        } else {
            st += s.tokens as u64;
            sn += 1;
        }
        out.push(s);
    }
    let total = lt + st;
    let count_class = |xs: &[&Sample], want: LengthClass| {
        xs.iter()
            .filter(|s| classify_long_short(s, spec.length_threshold) != want)
            .count()
    };
    let (from_long, from_short): (Vec<&Sample>, Vec<&Sample>) = out
        .iter()
        .partition(|s| long.as_ptr_range().contains(&(**s as *const Sample)));
    let report = MixReport {
        ratio: spec.ratio,
        seed: spec.seed,
        token_budget: spec.token_budget,
        target_long_share: spec.ratio.long_share(),
        achieved_long_share: if total == 0 { 0.0 } else { lt as f64 / total as f64 },
        long_tokens: lt,
        short_tokens: st,
        long_samples: ln,
        short_samples: sn,
        overshoot: total.saturating_sub(spec.token_budget),
        shortfall,
        misclassified_long: count_class(&from_long, LengthClass::Long),
        misclassified_short: count_class(&from_short, LengthClass::Short),
    };
    Ok(MixOutput { samples: out, report })
}

const WORDS: [&str; 16] = [
    "alpha", "river", "stone", "lamp", "orbit", "maple", "quiet", "signal", "harbor", "violet", "ember",
    "north", "ledger", "cobalt", "meadow", "tide",
];

/// `n` samples of space-separated words with token lengths uniform in
/// `min_len..=max_len`, seeded.
pub fn synthetic_corpus(n: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<Sample> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(min_len..=max_len);
            let mut text = String::with_capacity(len + 8);
            while text.len() < len {
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push_str(WORDS[rng.random_range(0..WORDS.len())]);
            }
            text.truncate(len);
            Sample {
                line: serde_json::json!({ "id": i, "text": text }).to_string(),
                tokens: len,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sized(n: usize) -> Sample {
        Sample::from_text(&"x".repeat(n))
    }

    fn spec(ratio: &str, budget: u64) -> MixSpec {
        MixSpec {
            ratio: ratio.parse().unwrap(),
            token_budget: budget,
            length_threshold: 50,
            seed: 7,
        }
    }

    #[test]
    fn stats_hand_arithmetic() {
        let s = compute_corpus_stats(&[sized(10), sized(30)]);
        assert_eq!((s.sample_count, s.total_tokens), (2, 40));
        assert_eq!(s.avg_length().unwrap(), 20.0);
        assert!(CorpusStats::default().avg_length().is_err());
    }

    #[test]
    fn parse_keeps_lines_and_counts_skips() {
        let c = Corpus::parse("{\"text\":\"abc\",\"id\":1}\nnot json\n\n{\"other\":2}\n");
        assert_eq!(c.samples.len(), 1);
        assert_eq!(c.samples[0].line, "{\"text\":\"abc\",\"id\":1}");
        assert_eq!(c.samples[0].tokens, 3);
        assert_eq!(c.skipped, 2);
    }

    #[test]
    fn classification_boundary() {
        assert_eq!(classify_long_short(&sized(50), 50), LengthClass::Short);
        assert_eq!(classify_long_short(&sized(0), 50), LengthClass::Short);
        assert_eq!(classify_long_short(&sized(9000), 4096), LengthClass::Long);
        assert_eq!(classify_long_short(&sized(1000), 4096), LengthClass::Short);
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("8:2".parse::<Ratio>().unwrap(), Ratio { long: 8, short: 2 });
        assert!("0:0".parse::<Ratio>().is_err());
        assert!("8-2".parse::<Ratio>().is_err());
    }

    #[test]
    fn degenerate_ratios_use_one_corpus() {
        let long: Vec<_> = (0..20).map(|_| sized(100)).collect();
        let short: Vec<_> = (0..20).map(|_| sized(10)).collect();
        let all_long = mix_corpora(&long, &short, &spec("10:0", 500)).unwrap();
        assert_eq!(all_long.report.short_samples, 0);
        let all_short = mix_corpora(&long, &short, &spec("0:10", 50)).unwrap();
        assert_eq!(all_short.report.long_samples, 0);
    }

    #[test]
    fn shortfall_is_reported() {
        let long = vec![sized(100)];
        let short = vec![sized(10)];
        let m = mix_corpora(&long, &short, &spec("5:5", 10_000)).unwrap();
        assert!(m.report.shortfall);
        assert!(mix_corpora(&[], &short, &spec("5:5", 10)).is_err());
    }
}
