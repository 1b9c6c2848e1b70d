//! Word-level regressor: embeddings → bidirectional GRU → dense(1) → logistic.
//!
//! The vocabulary is the set of training tokens plus a reserved `OOV` entry
//! at index 0. Tokens found in a pre-trained table start from that row;
//! the rest (and `OOV`) start from U(−0.05, 0.05). All rows are trained.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{preprocess, EmotionCategory, TweetRecord};
use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::nn::{
    backward_pass, clip_gradients_by_norm, AdamConfig, AdamState, Cell, CellKind, DenseParams, Differentiable,
    EmbeddingTable, Matrix, ModelFile, RegressionExample, SequenceRegressor,
};
use crate::seed::rng_from_seed;

pub const MODEL_KIND: &str = "word";
pub const OOV: &str = "OOV";
pub const OOV_INDEX: usize = 0;
const INIT_SCALE: f64 = 0.05;

/// Whitespace split of already-preprocessed text.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

/// Pre-trained vectors in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub tokens: Vec<String>,
    pub table: EmbeddingTable,
    index: HashMap<String, usize>,
}

impl Embeddings {
    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.table.lookup(i))
    }
}

/// Reads `token v1 … v_dim` lines. A repeated token keeps its first position
/// and takes the values of its last occurrence.
pub fn load_embeddings<R: BufRead>(reader: R, dim: usize) -> Result<Embeddings> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
    }
    let mut tokens: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().expect("non-blank line").to_string();
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(Error::parse(
                "embeddings",
                line_no,
                format!("expected {dim} values after the token, found {}", values.len()),
            ));
        }
        let row = values
            .iter()
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(Error::parse("embeddings", line_no, format!("bad value {v:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        match index.get(&token) {
            Some(&i) => {
                warn!("embeddings: line {line_no}: duplicate token {token:?}; keeping the later vector");
                rows[i] = row;
            }
            None => {
                index.insert(token.clone(), tokens.len());
                tokens.push(token);
                rows.push(row);
            }
        }
    }
    let table = Matrix::from_vec(rows.len(), dim, rows.concat())?;
    Ok(Embeddings {
        tokens,
        table: EmbeddingTable { table },
        index,
    })
}

pub fn load_embeddings_file(path: &Path, dim: usize) -> Result<Embeddings> {
    let file = std::fs::File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    load_embeddings(std::io::BufReader::new(file), dim).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl WordVocab {
    /// `OOV` first, then `tokens` in order of first occurrence.
    pub fn new<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> Self {
        let mut v = WordVocab {
            tokens: vec![OOV.to_string()],
            index: BTreeMap::from([(OOV.to_string(), OOV_INDEX)]),
        };
        for t in tokens {
            if !v.index.contains_key(t) {
                v.index.insert(t.to_string(), v.tokens.len());
                v.tokens.push(t.to_string());
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_INDEX)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Vocabulary over the training token lists and its initial embedding table.
pub fn build_word_vocab<R: Rng>(
    token_lists: &[Vec<String>],
    embeddings: Option<&Embeddings>,
    dim: usize,
    rng: &mut R,
) -> Result<(WordVocab, EmbeddingTable)> {
    let dim = match embeddings {
        Some(e) if e.dim() != dim => {
            return Err(Error::Shape(format!("embedding file has dim {}, model expects {dim}", e.dim())));
        }
        _ => dim,
    };
    let vocab = WordVocab::new(token_lists.iter().flatten().map(String::as_str));
    let mut table = Matrix::zeros(vocab.len(), dim);
    let mut copied = 0;
    for (i, tok) in vocab.tokens().iter().enumerate() {
        let row: Vec<f64> = match embeddings.and_then(|e| (i != OOV_INDEX).then(|| e.get(tok)).flatten()) {
            Some(pre) => {
                copied += 1;
                pre.to_vec()
            }
            None => (0..dim).map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE)).collect(),
        };
        table.row_mut(i).copy_from_slice(&row);
    }
    if embeddings.is_some() {
        info!("word vocab: {} tokens, {copied} initialized from pre-trained vectors", vocab.len());
    }
    Ok((vocab, EmbeddingTable::new(table)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Epochs without a dev-Pearson improvement before stopping.
    pub patience: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for WordModelConfig {
    fn default() -> Self {
        WordModelConfig {
            embedding_dim: 50,
            hidden_dim: 32,
            lr: 0.001,
            epochs: 50,
            batch: 16,
            patience: 10,
            clip_norm: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordModel {
    pub vocab: WordVocab,
    pub net: SequenceRegressor,
}

/// Tokens and gold intensity for one training tweet.
#[derive(Debug, Clone, PartialEq)]
pub struct WordExample {
    pub tokens: Vec<String>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordTraining {
    pub model: WordModel,
    /// Training-set MSE after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Dev Pearson after each epoch (empty without a dev set).
    pub dev_pearson: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

impl WordModel {
    pub fn predict_tokens(&self, tokens: &[String]) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::Empty("token list for the word model".into()));
        }
        self.net.predict(&self.vocab.encode(tokens))
    }

    pub fn mse(&self, examples: &[WordExample]) -> Result<f64> {
        self.net.loss(&self.encode_examples(examples))
    }

    fn encode_examples(&self, examples: &[WordExample]) -> Vec<RegressionExample> {
        examples
            .iter()
            .map(|e| RegressionExample::new(self.vocab.encode(&e.tokens), e.target))
            .collect()
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut file = ModelFile::new(MODEL_KIND)
            .with_meta("embedding_dim", self.net.embedding.dim())
            .with_meta("hidden_dim", self.net.forward.hidden_dim())
            .with_meta("vocab", self.vocab.tokens().to_vec());
        file.push_params(&self.net);
        file
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind(MODEL_KIND)?;
        let dim = file.meta_usize("embedding_dim")?;
        let hidden = file.meta_usize("hidden_dim")?;
        let tokens: Vec<String> = file
            .meta
            .get("vocab")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| Error::ModelFormat("missing vocabulary".into()))?;
        if tokens.first().map(String::as_str) != Some(OOV) {
            return Err(Error::ModelFormat("vocabulary must start with OOV".into()));
        }
        let vocab = WordVocab::new(tokens[1..].iter().map(String::as_str));
        if vocab.len() != tokens.len() {
            return Err(Error::ModelFormat("vocabulary contains duplicates".into()));
        }
        let table = EmbeddingTable {
            table: Matrix::zeros(vocab.len(), dim),
        };
        let mut net = bigru_zeros(table, hidden);
        file.load_into(&mut net)?;
        net.validate()?;
        Ok(WordModel { vocab, net })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        WordModel::from_model_file(&ModelFile::load(path)?)
    }
}

fn bigru<R: Rng>(embedding: EmbeddingTable, hidden: usize, rng: &mut R) -> SequenceRegressor {
    let dim = embedding.dim();
    SequenceRegressor {
        embedding,
        forward: Cell::init(CellKind::Gru, dim, hidden, rng),
        backward: Some(Cell::init(CellKind::Gru, dim, hidden, rng)),
        head: DenseParams::init(2 * hidden, 1, rng),
        squash: true,
    }
}

fn bigru_zeros(embedding: EmbeddingTable, hidden: usize) -> SequenceRegressor {
    let dim = embedding.dim();
    SequenceRegressor {
        embedding,
        forward: Cell::zeros(CellKind::Gru, dim, hidden),
        backward: Some(Cell::zeros(CellKind::Gru, dim, hidden)),
        head: DenseParams::zeros(2 * hidden, 1),
        squash: true,
    }
}

/// Preprocessed, tokenized training pairs for one emotion. Records without
/// tokens are skipped with a warning.
pub fn examples_from_records(records: &[TweetRecord]) -> Result<(EmotionCategory, Vec<WordExample>)> {
    let first = records.first().ok_or_else(|| Error::Empty("word-model training set".into()))?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if r.emotion != first.emotion {
            return Err(Error::InvalidArgument(format!(
                "word model trains on one emotion, found {} and {}",
                first.emotion, r.emotion
            )));
        }
        let target = r
            .intensity
            .ok_or_else(|| Error::InvalidArgument(format!("record {} has no gold intensity", r.id)))?;
        let tokens = tokenize_words(&preprocess(&r.raw_text));
        if tokens.is_empty() {
            warn!("record {}: no tokens after preprocessing; skipped", r.id);
            continue;
        }
        out.push(WordExample { tokens, target });
    }
    if out.is_empty() {
        return Err(Error::Empty("word-model training set".into()));
    }
    Ok((first.emotion, out))
}

fn dev_score(model: &WordModel, dev: &[WordExample]) -> Result<f64> {
    let preds = dev.iter().map(|e| model.predict_tokens(&e.tokens)).collect::<Result<Vec<f64>>>()?;
    let gold: Vec<f64> = dev.iter().map(|e| e.target).collect();
    Ok(pearson(&preds, &gold)?.unwrap_or(0.0))
}

/// Trains one emotion's model with Adam on mini-batch MSE. With a dev set,
/// keeps the parameters of the best dev-Pearson epoch and stops after
/// `patience` epochs without improvement.
pub fn train_word_model(
    train: &[WordExample],
    dev: Option<&[WordExample]>,
    embeddings: Option<&Embeddings>,
    config: &WordModelConfig,
) -> Result<WordTraining> {
    if train.is_empty() {
        return Err(Error::Empty("word-model training set".into()));
    }
    if config.batch == 0 || config.hidden_dim == 0 || config.embedding_dim == 0 {
        return Err(Error::InvalidArgument("batch, hidden_dim and embedding_dim must be positive".into()));
    }
    if let Some(bad) = train.iter().find(|e| e.tokens.is_empty() || !(0.0..=1.0).contains(&e.target)) {
        return Err(Error::InvalidArgument(format!(
            "training examples need tokens and a target in [0, 1]: {bad:?}"
        )));
    }
    let mut rng = rng_from_seed(config.seed);
    let token_lists: Vec<Vec<String>> = train.iter().map(|e| e.tokens.clone()).collect();
    let (vocab, table) = build_word_vocab(&token_lists, embeddings, config.embedding_dim, &mut rng)?;
    let net = bigru(table, config.hidden_dim, &mut rng);
    let mut model = WordModel { vocab, net };
    let encoded = model.encode_examples(train);
    let mut adam = AdamState::new(
        &model.net,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let dev = dev.filter(|d| !d.is_empty());

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut dev_pearson = Vec::new();
    let mut best: Option<(f64, usize, SequenceRegressor)> = None;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch) {
            let batch: Vec<RegressionExample> = chunk.iter().map(|&i| encoded[i].clone()).collect();
            let (_, mut grads) = backward_pass(&model.net, batch.as_slice())?;
            if let Some(max) = config.clip_norm {
                clip_gradients_by_norm(&mut grads, max);
            }
            adam.update(&mut model.net, &grads)?;
        }
        let loss = model.net.loss(&encoded)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("word-model loss is {loss} after epoch {epoch}")));
        }
        epoch_losses.push(loss);

        if let Some(dev) = dev {
            let score = dev_score(&model, dev)?;
            dev_pearson.push(score);
            debug!("word model epoch {epoch}: train MSE {loss:.5}, dev Pearson {score:.4}");
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, epoch, model.net.clone()));
            } else if epoch - best.as_ref().expect("set above").1 >= config.patience {
                info!("word model: early stop at epoch {epoch}");
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, net)) => {
            model.net = net;
            epoch
        }
        None => epoch_losses.len().saturating_sub(1),
    };
    Ok(WordTraining {
        model,
        epoch_losses,
        dev_pearson,
        best_epoch,
    })
}

/// Intensity for already-preprocessed `text`. Fails on text without tokens.
pub fn predict_word(model: &WordModel, text: &str) -> Result<f64> {
    model.predict_tokens(&tokenize_words(text))
}
