//! Convex combination of the three legs and dev-set grid search over the
//! weight simplex.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::data::EmotionCategory;
use crate::error::{Error, Result};
use crate::metrics::pearson;

const SUM_TOLERANCE: f64 = 1e-9;

/// Weights for the baseline (`b`), word (`w`) and character (`c`) legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleWeights {
    pub w_b: f64,
    pub w_w: f64,
    pub w_c: f64,
}

impl EnsembleWeights {
    pub fn new(w_b: f64, w_w: f64, w_c: f64) -> Result<Self> {
        let w = EnsembleWeights { w_b, w_w, w_c };
        w.validate()?;
        Ok(w)
    }

    /// `w_b·b + w_w·w + w_c·c` for one record.
    pub fn apply(&self, b: f64, w: f64, c: f64) -> f64 {
        self.w_b * b + self.w_w * w + self.w_c * c
    }

    pub fn baseline_only() -> Self {
        EnsembleWeights {
            w_b: 1.0,
            w_w: 0.0,
            w_c: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_b, self.w_w, self.w_c];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!("ensemble weights must be non-negative: {ws:?}")));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("ensemble weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Config-style text: `w_b = ...`, `w_w = ...`, `w_c = ...`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "w_b = {}", self.w_b);
        let _ = writeln!(s, "w_w = {}", self.w_w);
        let _ = writeln!(s, "w_c = {}", self.w_c);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let source = "weights";
        let (mut b, mut w, mut c) = (None, None, None);
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, line_no, "expected `key = value`"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, line_no, format!("{:?} is not a number", value.trim())))?;
            let slot = match key.trim() {
                "w_b" => &mut b,
                "w_w" => &mut w,
                "w_c" => &mut c,
                other => return Err(Error::parse(source, line_no, format!("unknown key {other:?}"))),
            };
            if slot.replace(value).is_some() {
                return Err(Error::parse(source, line_no, format!("duplicate key {}", key.trim())));
            }
        }
        match (b, w, c) {
            (Some(b), Some(w), Some(c)) => EnsembleWeights::new(b, w, c),
            _ => Err(Error::InvalidArgument("weights file must define w_b, w_w and w_c".into())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        EnsembleWeights::parse(&text)
    }
}

/// Per-record predictions of the three legs over the same records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub baseline: Vec<f64>,
    pub word: Vec<f64>,
    pub char: Vec<f64>,
    pub gold: Option<Vec<f64>>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.baseline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baseline.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.baseline.len();
        if self.word.len() != n || self.char.len() != n || self.gold.as_ref().is_some_and(|g| g.len() != n) {
            return Err(Error::Alignment(format!(
                "leg lengths differ: baseline {n}, word {}, char {}, gold {:?}",
                self.word.len(),
                self.char.len(),
                self.gold.as_ref().map(Vec::len)
            )));
        }
        let in_range = |v: &f64| (0.0..=1.0).contains(v);
        if !(self.baseline.iter().all(in_range) && self.word.iter().all(in_range) && self.char.iter().all(in_range)) {
            return Err(Error::InvalidArgument("leg predictions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// `w_b·baseline + w_w·word + w_c·char`, record by record.
pub fn combine(preds: &PredictionSet, weights: &EnsembleWeights) -> Result<Vec<f64>> {
    weights.validate()?;
    preds.validate()?;
    Ok((0..preds.len())
        .map(|i| weights.apply(preds.baseline[i], preds.word[i], preds.char[i]))
        .collect())
}

/// Every lattice point `(w_b, w_c)` in `{0, step, 2·step, ...} ∩ [0, 1]` with
/// `w_w = 1 − w_b − w_c ≥ 0`, in lexicographic `(w_b, w_c)` order. When
/// `1 / step` is an integer `n`, coordinates are computed as `k / n`.
pub fn simplex_grid(step: f64) -> Result<Vec<EnsembleWeights>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidArgument(format!("grid step must be in (0, 0.5], got {step}")));
    }
    let steps = (1.0 / step + 1e-9).floor() as usize;
    let divisible = (1.0 / step - steps as f64).abs() < 1e-9;
    let frac = |k: usize| if divisible { k as f64 / steps as f64 } else { k as f64 * step };
    let mut out = Vec::new();
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let (w_b, w_c) = (frac(i), frac(j));
            let w_w = if divisible { frac(steps - i - j) } else { (1.0 - w_b - w_c).max(0.0) };
            out.push(EnsembleWeights { w_b, w_w, w_c });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub weights: EnsembleWeights,
    pub avg_pearson: f64,
    pub evaluated: usize,
}

fn avg_pearson_for(dev: &BTreeMap<EmotionCategory, PredictionSet>, w: &EnsembleWeights) -> Result<f64> {
    let mut total = 0.0;
    for (emotion, preds) in dev {
        let gold = preds
            .gold
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("dev set for {emotion} has no gold intensities")))?;
        let combined = combine(preds, w)?;
        total += match pearson(&combined, gold)? {
            Ok(r) => r,
            Err(kind) => {
                warn!("{emotion}: degenerate Pearson ({kind:?}) for weights {w:?}; counting it as 0");
                0.0
            }
        };
    }
    Ok(total / dev.len() as f64)
}

/// Mean over emotions of dev-set Pearson for one weight triple.
pub fn average_pearson(dev: &BTreeMap<EmotionCategory, PredictionSet>, weights: &EnsembleWeights) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::Empty("dev predictions".into()));
    }
    avg_pearson_for(dev, weights)
}

/// Exhaustive search over [`simplex_grid`] for the triple maximizing the mean
/// dev Pearson across emotions. Ties keep the first triple in grid order.
pub fn grid_search_weights(dev: &BTreeMap<EmotionCategory, PredictionSet>, step: f64) -> Result<GridSearchResult> {
    if dev.is_empty() {
        return Err(Error::Empty("dev predictions".into()));
    }
    let grid = simplex_grid(step)?;
    let mut best: Option<(EnsembleWeights, f64)> = None;
    for w in &grid {
        let score = avg_pearson_for(dev, w)?;
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((*w, score));
        }
    }
    let (weights, avg_pearson) = best.expect("grid is never empty");
    Ok(GridSearchResult {
        weights,
        avg_pearson,
        evaluated: grid.len(),
    })
}

/// Grid search run separately for each emotion.
pub fn grid_search_per_emotion(
    dev: &BTreeMap<EmotionCategory, PredictionSet>,
    step: f64,
) -> Result<BTreeMap<EmotionCategory, GridSearchResult>> {
    dev.iter()
        .map(|(&e, preds)| {
            let single: BTreeMap<_, _> = [(e, preds.clone())].into_iter().collect();
            Ok((e, grid_search_weights(&single, step)?))
        })
        .collect()
}
