//! Pearson and Spearman correlation and the two-range evaluation report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::EmotionCategory;
use crate::error::{Error, Result};

/// Lower bound (inclusive) of the high-intensity evaluation range.
pub const HIGH_RANGE_THRESHOLD: f64 = 0.5;

/// Why a correlation could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degenerate {
    TooFewPoints,
    ZeroVariance,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Alignment(format!("{} vs {} values", x.len(), y.len())));
    }
    Ok(())
}

/// Product-moment correlation. `Ok(Err(_))` flags a degenerate input
/// (fewer than two points or a constant vector).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<std::result::Result<f64, Degenerate>> {
    check_pair(x, y)?;
    let n = x.len();
    if n < 2 {
        return Ok(Err(Degenerate::TooFewPoints));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Err(Degenerate::ZeroVariance));
    }
    Ok(Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<std::result::Result<f64, Degenerate>> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IntensityRange {
    /// All records.
    Full,
    /// Records whose gold intensity is at least 0.5.
    High,
}

impl IntensityRange {
    pub fn key(self) -> &'static str {
        match self {
            IntensityRange::Full => "full",
            IntensityRange::High => "high",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            IntensityRange::Full => "Intensity range: 0-1",
            IntensityRange::High => "Intensity range: 0.5-1",
        }
    }
}

/// Pearson and Spearman for one emotion and range; `None` marks a degenerate cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationPair {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    pub per_emotion: BTreeMap<EmotionCategory, CorrelationPair>,
    pub avg_pearson: Option<f64>,
    pub avg_spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub full: RangeReport,
    pub high: RangeReport,
}

/// Aligned predictions and gold intensities for one emotion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmotionScores {
    pub predicted: Vec<f64>,
    pub gold: Vec<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

fn range_report(scores: &BTreeMap<EmotionCategory, EmotionScores>, range: IntensityRange) -> Result<RangeReport> {
    let mut per_emotion = BTreeMap::new();
    for emotion in EmotionCategory::ALL {
        let empty = EmotionScores::default();
        let s = scores.get(&emotion).unwrap_or(&empty);
        check_pair(&s.predicted, &s.gold)?;
        let (pred, gold): (Vec<f64>, Vec<f64>) = s
            .predicted
            .iter()
            .zip(&s.gold)
            .filter(|(_, &g)| range == IntensityRange::Full || g >= HIGH_RANGE_THRESHOLD)
            .map(|(&p, &g)| (p, g))
            .unzip();
        let pair = CorrelationPair {
            pearson: pearson(&pred, &gold)?.ok(),
            spearman: spearman(&pred, &gold)?.ok(),
            count: pred.len(),
        };
        per_emotion.insert(emotion, pair);
    }
    let avg_pearson = mean_of(per_emotion.values().map(|p| p.pearson));
    let avg_spearman = mean_of(per_emotion.values().map(|p| p.spearman));
    Ok(RangeReport {
        per_emotion,
        avg_pearson,
        avg_spearman,
    })
}

/// Scores every emotion over the full range and over records with gold ≥ 0.5.
/// The high-range filter looks at gold values only.
pub fn evaluate(scores: &BTreeMap<EmotionCategory, EmotionScores>) -> Result<EvalReport> {
    Ok(EvalReport {
        full: range_report(scores, IntensityRange::Full)?,
        high: range_report(scores, IntensityRange::High)?,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.3}"))
}

fn fmt_opt_full(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.6}"))
}

fn short(emotion: EmotionCategory) -> &'static str {
    match emotion {
        EmotionCategory::Sadness => "sad",
        other => other.as_str(),
    }
}

impl EvalReport {
    pub fn range(&self, range: IntensityRange) -> &RangeReport {
        match range {
            IntensityRange::Full => &self.full,
            IntensityRange::High => &self.high,
        }
    }

    /// Aligned text table: one row per range, columns avg then per-emotion.
    pub fn to_table(&self, model_name: &str) -> String {
        let mut header = vec!["range".to_string(), "model".to_string(), "avg_p".into(), "avg_s".into()];
        for e in EmotionCategory::ALL {
            header.push(format!("{}_p", short(e)));
            header.push(format!("{}_s", short(e)));
        }
        header.push("n".into());
        let mut rows = vec![header];
        for range in [IntensityRange::Full, IntensityRange::High] {
            let r = self.range(range);
            let mut row = vec![
                match range {
                    IntensityRange::Full => "0-1".to_string(),
                    IntensityRange::High => "0.5-1".to_string(),
                },
                model_name.to_string(),
                fmt_opt(r.avg_pearson),
                fmt_opt(r.avg_spearman),
            ];
            let mut n = 0;
            for e in EmotionCategory::ALL {
                let c = &r.per_emotion[&e];
                row.push(fmt_opt(c.pearson));
                row.push(fmt_opt(c.spearman));
                n += c.count;
            }
            row.push(n.to_string());
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:>w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// `key = value` lines: `<range>.avg_p`, `<range>.<emotion>_s`, ... with
    /// `null` for degenerate cells.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for range in [IntensityRange::Full, IntensityRange::High] {
            let r = self.range(range);
            let k = range.key();
            let _ = writeln!(out, "{k}.avg_p = {}", fmt_opt_full(r.avg_pearson));
            let _ = writeln!(out, "{k}.avg_s = {}", fmt_opt_full(r.avg_spearman));
            for e in EmotionCategory::ALL {
                let c = &r.per_emotion[&e];
                let _ = writeln!(out, "{k}.{}_p = {}", short(e), fmt_opt_full(c.pearson));
                let _ = writeln!(out, "{k}.{}_s = {}", short(e), fmt_opt_full(c.spearman));
                let _ = writeln!(out, "{k}.{}_n = {}", short(e), c.count);
            }
        }
        out
    }
}
