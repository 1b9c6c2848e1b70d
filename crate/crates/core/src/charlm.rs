//! Character-level language model and the tweet features derived from it.
//!
//! Each tweet is a sequence `c_1 … c_T <eos>`; the model is trained to
//! predict every next character with truncated backpropagation through
//! time. Features for a tweet are read from the hidden states over
//! `c_1 … c_T` (no `<eos>`), starting from the zero state:
//! `concat(h_T, (1/T)·Σ_t h_t)`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    clip_gradients_by_norm, AdamConfig, AdamState, Cell, CellKind, CellState, DenseParams, EmbeddingTable, InputLayer,
    LanguageModel, LmSequence, ModelFile,
};
use crate::seed::rng_from_seed;

pub const MODEL_KIND: &str = "charlm";
pub const UNK: usize = 0;
pub const EOS: usize = 1;

/// `<unk>` is index 0, `<eos>` index 1, then characters by descending
/// frequency with ties broken by code point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl CharVocab {
    pub fn from_chars(chars: Vec<char>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i + 2).is_some() {
                return Err(Error::InvalidArgument(format!("character {c:?} listed twice in vocabulary")));
            }
        }
        Ok(CharVocab { chars, index })
    }

    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    /// The character at `id`, or `None` for the two reserved entries.
    pub fn char_at(&self, id: usize) -> Option<char> {
        id.checked_sub(2).and_then(|i| self.chars.get(i)).copied()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.id(c)).collect()
    }
}

pub fn build_char_vocab<'a, I: IntoIterator<Item = &'a str>>(corpus: I, min_count: usize) -> Result<CharVocab> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    let mut lines = 0usize;
    for text in corpus {
        lines += 1;
        for c in text.chars() {
            *counts.entry(c).or_default() += 1;
        }
    }
    if lines == 0 || counts.is_empty() {
        return Err(Error::Empty("character-LM corpus".into()));
    }
    let mut ranked: Vec<(char, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    CharVocab::from_chars(ranked.into_iter().map(|(c, _)| c).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharLmConfig {
    pub cell_kind: CellKind,
    pub hidden_dim: usize,
    /// `None` feeds one-hot characters straight into the cell.
    pub embedding_dim: Option<usize>,
    pub lr: f64,
    pub clip_norm: f64,
    pub batch: usize,
    pub bptt_len: usize,
    pub steps: usize,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for CharLmConfig {
    fn default() -> Self {
        CharLmConfig {
            cell_kind: CellKind::Lstm,
            hidden_dim: 1024,
            embedding_dim: Some(32),
            lr: 0.0005,
            clip_norm: 1.0,
            batch: 32,
            bptt_len: 64,
            steps: 10_000,
            min_count: 1,
            seed: 0,
        }
    }
}

impl CharLmConfig {
    fn validate(&self) -> Result<()> {
        if self.cell_kind == CellKind::Gru {
            return Err(Error::InvalidArgument("the character LM supports lstm and mlstm cells".into()));
        }
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("batch", self.batch),
            ("bptt_len", self.bptt_len),
            ("min_count", self.min_count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.embedding_dim == Some(0) {
            return Err(Error::InvalidArgument("embedding_dim must be positive".into()));
        }
        if !(self.lr > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("lr and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharLmModel {
    pub vocab: CharVocab,
    pub lm: LanguageModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharLmTraining {
    pub model: CharLmModel,
    /// Mean per-character cross-entropy (nats) of every optimizer step.
    pub step_losses: Vec<f64>,
}

impl CharLmModel {
    pub fn init<R: Rng>(vocab: CharVocab, config: &CharLmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let v = vocab.len();
        let input = match config.embedding_dim {
            Some(d) => InputLayer::Embedding(EmbeddingTable::uniform(v, d, 0.1, rng)),
            None => InputLayer::OneHot { vocab_size: v },
        };
        let cell = Cell::init(config.cell_kind, input.dim(), config.hidden_dim, rng);
        let head = DenseParams::init(config.hidden_dim, v, rng);
        let lm = LanguageModel { input, cell, head };
        lm.validate()?;
        Ok(CharLmModel { vocab, lm })
    }

    pub fn hidden_dim(&self) -> usize {
        self.lm.hidden_dim()
    }

    /// Training pairs for one tweet: inputs `c_1 … c_T`, targets `c_2 … <eos>`.
    fn tweet_ids(&self, text: &str) -> Vec<usize> {
        let mut ids = self.vocab.encode(text);
        ids.push(EOS);
        ids
    }

    /// Mean per-character cross-entropy in nats over whole tweets.
    pub fn cross_entropy<S: AsRef<str>>(&self, corpus: &[S]) -> Result<f64> {
        let batch: Vec<LmSequence> = corpus
            .iter()
            .filter(|t| !t.as_ref().is_empty())
            .map(|t| {
                let ids = self.tweet_ids(t.as_ref());
                LmSequence {
                    inputs: ids[..ids.len() - 1].to_vec(),
                    targets: ids[1..].to_vec(),
                    init: None,
                }
            })
            .collect();
        Ok(self.lm.forward_backward(&batch, false)?.mean_loss())
    }

    pub fn to_model_file(&self) -> ModelFile {
        let (input, embedding_dim) = match &self.lm.input {
            InputLayer::Embedding(e) => ("embedding", e.dim()),
            InputLayer::OneHot { .. } => ("onehot", 0),
        };
        let mut file = ModelFile::new(MODEL_KIND)
            .with_meta("cell", self.lm.cell.kind().as_str())
            .with_meta("hidden_dim", self.hidden_dim())
            .with_meta("input", input)
            .with_meta("embedding_dim", embedding_dim)
            .with_meta("vocab_size", self.vocab.len())
            .with_meta("vocab", self.vocab.chars().iter().collect::<String>());
        file.push_params(&self.lm);
        file
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind(MODEL_KIND)?;
        let kind: CellKind = file.meta_str("cell")?.parse()?;
        let hidden = file.meta_usize("hidden_dim")?;
        let vocab = CharVocab::from_chars(file.meta_str("vocab")?.chars().collect())?;
        let declared = file.meta_usize("vocab_size")?;
        if declared != vocab.len() {
            return Err(Error::ModelFormat(format!(
                "vocabulary size mismatch: header declares {declared}, vocabulary has {}",
                vocab.len()
            )));
        }
        if let Some((_, head_w)) = file.tensors.iter().find(|(n, _)| n == "head.w") {
            if head_w.rows() != vocab.len() {
                return Err(Error::ModelFormat(format!(
                    "vocabulary size mismatch: expected {} output rows, found {}",
                    vocab.len(),
                    head_w.rows()
                )));
            }
        }
        let v = vocab.len();
        let input = match file.meta_str("input")? {
            "embedding" => InputLayer::Embedding(EmbeddingTable {
                table: crate::nn::Matrix::zeros(v, file.meta_usize("embedding_dim")?),
            }),
            "onehot" => InputLayer::OneHot { vocab_size: v },
            other => return Err(Error::ModelFormat(format!("unknown input layer {other:?}"))),
        };
        let mut lm = LanguageModel {
            cell: Cell::zeros(kind, input.dim(), hidden),
            input,
            head: DenseParams::zeros(hidden, v),
        };
        file.load_into(&mut lm)?;
        lm.validate()?;
        Ok(CharLmModel { vocab, lm })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }
}

/// Loads a model written by [`CharLmModel::save`] (or any file in the same
/// container with the same tensor layout) for feature extraction.
pub fn import_external_lm(path: &Path) -> Result<CharLmModel> {
    CharLmModel::from_model_file(&ModelFile::load(path)?)
}

/// One stream of the batch: the tweet it is reading, the next input
/// position, and the detached state carried into that position.
struct Slot {
    tweet: usize,
    pos: usize,
    state: Option<CellState>,
}

/// Cycles through tweets in a fresh random order each epoch.
struct TweetQueue {
    order: Vec<usize>,
    next: usize,
}

impl TweetQueue {
    fn pop<R: Rng>(&mut self, rng: &mut R) -> usize {
        if self.next == self.order.len() {
            self.order.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.order[self.next - 1]
    }
}

/// Trains a fresh model on `corpus` (one preprocessed tweet per entry).
///
/// `batch` independent streams walk through shuffled tweets. Every optimizer
/// step takes exactly `bptt_len` targets from each stream, continuing into
/// the next tweet (from the zero state) when one ends, so each step weighs
/// the same number of characters. State is carried, detached, across steps
/// within a tweet.
pub fn train_char_lm<S: AsRef<str>>(corpus: &[S], config: &CharLmConfig) -> Result<CharLmTraining> {
    config.validate()?;
    let texts: Vec<&str> = corpus.iter().map(AsRef::as_ref).filter(|t| !t.is_empty()).collect();
    let vocab = build_char_vocab(texts.iter().copied(), config.min_count)?;
    let mut rng = rng_from_seed(config.seed);
    let mut model = CharLmModel::init(vocab, config, &mut rng)?;
    let tweets: Vec<Vec<usize>> = texts.iter().map(|t| model.tweet_ids(t)).collect();
    info!(
        "char-LM: {} tweets, vocab {}, {} {} units, {} steps",
        tweets.len(),
        model.vocab.len(),
        config.cell_kind,
        config.hidden_dim,
        config.steps
    );

    let mut queue = TweetQueue {
        order: (0..tweets.len()).collect(),
        next: tweets.len(),
    };
    let mut slots: Vec<Slot> = (0..config.batch)
        .map(|_| Slot {
            tweet: queue.pop(&mut rng),
            pos: 0,
            state: None,
        })
        .collect();
    let mut adam = AdamState::new(
        &model.lm,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut step_losses = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let mut batch: Vec<LmSequence> = Vec::new();
        let mut last_segment = Vec::with_capacity(slots.len());
        for slot in slots.iter_mut() {
            let mut budget = config.bptt_len;
            while budget > 0 {
                let ids = &tweets[slot.tweet];
                let end = (slot.pos + budget).min(ids.len() - 1);
                batch.push(LmSequence {
                    inputs: ids[slot.pos..end].to_vec(),
                    targets: ids[slot.pos + 1..end + 1].to_vec(),
                    init: slot.state.take(),
                });
                budget -= end - slot.pos;
                slot.pos = end;
                if slot.pos + 1 == ids.len() {
                    slot.tweet = queue.pop(&mut rng);
                    slot.pos = 0;
                }
            }
            last_segment.push(batch.len() - 1);
        }
        let pass = model.lm.forward_backward(&batch, true)?;
        let loss = pass.mean_loss();
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("char-LM loss is {loss} at step {step}")));
        }
        let mut grads = pass.grads.expect("gradients requested");
        let norm = clip_gradients_by_norm(&mut grads, config.clip_norm);
        adam.update(&mut model.lm, &grads)?;
        step_losses.push(loss);
        if step % 100 == 0 {
            debug!("char-LM step {step}: loss {loss:.4} grad norm {norm:.3}");
        }

        for (slot, &seg) in slots.iter_mut().zip(&last_segment) {
            if slot.pos > 0 {
                slot.state = Some(pass.final_states[seg].clone());
            }
        }
    }
    Ok(CharLmTraining { model, step_losses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    /// `h_T` only.
    Last,
    /// `concat(h_T, mean_t h_t)`.
    #[default]
    LastAndMean,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(FeatureMode::Last),
            "last+avg" | "last_and_mean" => Ok(FeatureMode::LastAndMean),
            other => Err(Error::InvalidArgument(format!("unknown feature mode {other:?}"))),
        }
    }
}

pub fn extract_features(model: &CharLmModel, text: &str) -> Result<Vec<f64>> {
    extract_features_with_mode(model, text, FeatureMode::LastAndMean)
}

pub fn extract_features_with_mode(model: &CharLmModel, text: &str, mode: FeatureMode) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::Empty("tweet text for character features".into()));
    }
    let states = model.lm.hidden_states(&model.vocab.encode(text))?;
    let mut out = states.last().expect("non-empty sequence").clone();
    if mode == FeatureMode::LastAndMean {
        let n = states.len() as f64;
        let mut mean = vec![0.0; out.len()];
        for h in &states {
            for (m, v) in mean.iter_mut().zip(h) {
                *m += v;
            }
        }
        out.extend(mean.into_iter().map(|m| m / n));
    }
    Ok(out)
}

/// One line per tweet: the id followed by the feature values, space separated.
pub fn write_feature_dump<W: Write>(mut out: W, rows: &[(String, Vec<f64>)]) -> Result<()> {
    for (id, values) in rows {
        write!(out, "{id}")?;
        for v in values {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_feature_dump<R: BufRead>(reader: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-blank line").to_string();
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse("feature dump", idx + 1, format!("bad value {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(Error::parse("feature dump", idx + 1, "inconsistent feature count"));
        }
        rows.push((id, values));
    }
    Ok(rows)
}
