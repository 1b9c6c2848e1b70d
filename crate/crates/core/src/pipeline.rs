//! Artifact plumbing behind the command-line tool: the pipeline config file
//! and one function per subcommand.
//!
//! The config is flat `key = value` text with `#` comments. Relative paths
//! are resolved against the config file's directory. Recognized keys:
//!
//! | key | default |
//! |-----|---------|
//! | `train`, `dev`, `test` | unset (dataset TSVs) |
//! | `embeddings` | unset (random word vectors) |
//! | `lexicons` | empty (comma-separated `term\tlabel\tscore` files) |
//! | `negators` | built-in list |
//! | `output_dir` | `out` |
//! | `seed`, `jobs` | `0`, `1` |
//! | `charlm.corpus` | train split text |
//! | `charlm.import` | unset (model file used instead of training) |
//! | `charlm.cell` | `lstm` (or `mlstm`) |
//! | `charlm.hidden`, `charlm.embedding_dim` | `1024`, `32` (`none` = one-hot) |
//! | `charlm.lr`, `charlm.clip`, `charlm.batch`, `charlm.bptt`, `charlm.steps`, `charlm.min_count` | `0.0005`, `1`, `32`, `64`, `10000`, `1` |
//! | `charlm.features` | `last+avg` (or `last`) |
//! | `word.embedding_dim`, `word.hidden`, `word.lr`, `word.epochs`, `word.batch`, `word.patience` | `50`, `32`, `0.001`, `50`, `16`, `10` |
//! | `word.clip` | `none` |
//! | `svr.c`, `svr.epsilon`, `svr.tol`, `svr.max_iter` | `1`, `0.05`, `0.0001`, `1000` |
//! | `ngram.word_min`, `ngram.word_max`, `ngram.char_min`, `ngram.char_max`, `ngram.hash_dim` | `1`, `2`, `3`, `4`, `1024` |
//! | `ensemble.step` | `0.05` |
//! | `ensemble.per_emotion` | `false` (one weight triple per emotion) |
//!
//! Artifacts in `output_dir`: `charlm.model`, `charlm.log`,
//! `charlm-svr.<emotion>.model`, `word.<emotion>.model`, `word.<emotion>.log`,
//! `baseline.<emotion>.model`, `features.<split>.txt`, `dev_legs.tsv`,
//! `weights.txt`, `weights.<emotion>.txt` (per-emotion tuning only) and `tune.log`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};

use crate::charlm::{
    extract_features_with_mode, import_external_lm, train_char_lm, write_feature_dump, CharLmConfig, CharLmModel,
    FeatureMode,
};
use crate::data::{
    parse_dataset, preprocess, read_dataset_file, split_by_emotion, DatasetSplit, EmotionCategory, SplitName,
    TweetRecord,
};
use crate::ensemble::{
    average_pearson, grid_search_per_emotion, grid_search_weights, EnsembleWeights, GridSearchResult, PredictionSet,
};
use crate::error::{Error, Result};
use crate::io_util::write_atomic_str;
use crate::lexicon::{
    extract_lexicon_features_with_raw, extract_ngram_features, load_lexicon_file, Lexicon, NegatorSet, NgramConfig,
};
use crate::metrics::{evaluate, EmotionScores, EvalReport};
use crate::nn::{CellKind, ModelFile};
use crate::seed::derive_seed;
use crate::svr::{train_svr, SvrConfig, SvrModel};
use crate::word::{
    examples_from_records, load_embeddings_file, predict_word, tokenize_words, train_word_model, WordModel,
    WordModelConfig,
};

/// Prediction used by the word and character legs for tweets that are empty
/// after preprocessing.
pub const FALLBACK_INTENSITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexicons: Vec<PathBuf>,
    pub negators: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub charlm: CharLmConfig,
    pub charlm_corpus: Option<PathBuf>,
    pub charlm_import: Option<PathBuf>,
    pub feature_mode: FeatureMode,
    pub word: WordModelConfig,
    pub svr: SvrConfig,
    pub ngram: NgramConfig,
    pub ensemble_step: f64,
    pub ensemble_per_emotion: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: None,
            dev: None,
            test: None,
            embeddings: None,
            lexicons: Vec::new(),
            negators: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            jobs: 1,
            charlm: CharLmConfig::default(),
            charlm_corpus: None,
            charlm_import: None,
            feature_mode: FeatureMode::LastAndMean,
            word: WordModelConfig::default(),
            svr: SvrConfig::default(),
            ngram: NgramConfig::default(),
            ensemble_step: 0.05,
            ensemble_per_emotion: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(source: &str, line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(source, line, format!("bad value {value:?} for {key}")))
}

fn parse_optional<T: std::str::FromStr>(source: &str, line: usize, key: &str, value: &str) -> Result<Option<T>> {
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_value(source, line, key, value).map(Some)
    }
}

impl PipelineConfig {
    /// Parses config text. `base_dir` anchors relative paths.
    pub fn parse(text: &str, source: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig {
            output_dir: base_dir.join("out"),
            ..PipelineConfig::default()
        };
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(source, line, "expected `key = value`"))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(source, line, format!("duplicate key {key}")));
            }
            let path = || base_dir.join(value);
            let num = |k: &str| -> Result<usize> { parse_value(source, line, k, value) };
            let real = |k: &str| -> Result<f64> { parse_value(source, line, k, value) };
            match key {
                "train" => cfg.train = Some(path()),
                "dev" => cfg.dev = Some(path()),
                "test" => cfg.test = Some(path()),
                "embeddings" => cfg.embeddings = Some(path()),
                "lexicons" => {
                    cfg.lexicons = value
                        .split(',')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(|p| base_dir.join(p))
                        .collect()
                }
                "negators" => cfg.negators = Some(path()),
                "output_dir" => cfg.output_dir = path(),
                "seed" => cfg.seed = parse_value(source, line, key, value)?,
                "jobs" => cfg.jobs = num(key)?,
                "charlm.corpus" => cfg.charlm_corpus = Some(path()),
                "charlm.import" => cfg.charlm_import = Some(path()),
                "charlm.cell" => {
                    cfg.charlm.cell_kind = value
                        .parse::<CellKind>()
                        .map_err(|e| Error::parse(source, line, e.to_string()))?
                }
                "charlm.hidden" => cfg.charlm.hidden_dim = num(key)?,
                "charlm.embedding_dim" => cfg.charlm.embedding_dim = parse_optional(source, line, key, value)?,
                "charlm.lr" => cfg.charlm.lr = real(key)?,
                "charlm.clip" => cfg.charlm.clip_norm = real(key)?,
                "charlm.batch" => cfg.charlm.batch = num(key)?,
                "charlm.bptt" => cfg.charlm.bptt_len = num(key)?,
                "charlm.steps" => cfg.charlm.steps = num(key)?,
                "charlm.min_count" => cfg.charlm.min_count = num(key)?,
                "charlm.features" => {
                    cfg.feature_mode = value.parse().map_err(|e: Error| Error::parse(source, line, e.to_string()))?
                }
                "word.embedding_dim" => cfg.word.embedding_dim = num(key)?,
                "word.hidden" => cfg.word.hidden_dim = num(key)?,
                "word.lr" => cfg.word.lr = real(key)?,
                "word.epochs" => cfg.word.epochs = num(key)?,
                "word.batch" => cfg.word.batch = num(key)?,
                "word.patience" => cfg.word.patience = num(key)?,
                "word.clip" => cfg.word.clip_norm = parse_optional(source, line, key, value)?,
                "svr.c" => cfg.svr.c = real(key)?,
                "svr.epsilon" => cfg.svr.epsilon = real(key)?,
                "svr.tol" => cfg.svr.tol = real(key)?,
                "svr.max_iter" => cfg.svr.max_iter = num(key)?,
                "ngram.word_min" => cfg.ngram.word_min = num(key)?,
                "ngram.word_max" => cfg.ngram.word_max = num(key)?,
                "ngram.char_min" => cfg.ngram.char_min = num(key)?,
                "ngram.char_max" => cfg.ngram.char_max = num(key)?,
                "ngram.hash_dim" => cfg.ngram.hash_dim = num(key)?,
                "ensemble.step" => cfg.ensemble_step = real(key)?,
                "ensemble.per_emotion" => cfg.ensemble_per_emotion = parse_value(source, line, key, value)?,
                other => return Err(Error::parse(source, line, format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingInput(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    fn input_paths(&self) -> Vec<(&'static str, &Path)> {
        let mut out = Vec::new();
        let named = [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
            ("embeddings", &self.embeddings),
            ("negators", &self.negators),
            ("charlm.corpus", &self.charlm_corpus),
            ("charlm.import", &self.charlm_import),
        ];
        for (name, p) in named {
            if let Some(p) = p {
                out.push((name, p.as_path()));
            }
        }
        out.extend(self.lexicons.iter().map(|p| ("lexicons", p.as_path())));
        out
    }

    /// Fails with `MissingInput` on the first configured input that does not exist.
    pub fn check_paths(&self) -> Result<()> {
        match self.input_paths().into_iter().find(|(_, p)| !p.exists()) {
            Some((name, p)) => Err(Error::MissingInput(format!("{name}: {} does not exist", p.display()))),
            None => Ok(()),
        }
    }

    fn split_path(&self, split: SplitName) -> Result<&Path> {
        let p = match split {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        };
        p.as_deref()
            .ok_or_else(|| Error::MissingInput(format!("config does not set `{}`", split.as_str())))
    }

    fn read_split(&self, split: SplitName) -> Result<DatasetSplit> {
        read_dataset_file(self.split_path(split)?, split)
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn per_emotion(&self, leg: &str, emotion: EmotionCategory) -> PathBuf {
        self.artifact(&format!("{leg}.{emotion}.model"))
    }
}

/// Runs `f` for every emotion on up to `jobs` threads. Results keep
/// `EmotionCategory::ALL` order; the first error in that order is returned.
fn for_each_emotion<T, F>(jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(EmotionCategory) -> Result<T> + Sync,
{
    let emotions = EmotionCategory::ALL;
    if jobs <= 1 {
        return emotions.iter().map(|&e| f(e)).collect();
    }
    let slots: Vec<Mutex<Option<Result<T>>>> = emotions.iter().map(|_| Mutex::new(None)).collect();
    let workers = jobs.min(emotions.len());
    std::thread::scope(|scope| {
        for w in 0..workers {
            let (f, slots) = (&f, &slots);
            scope.spawn(move || {
                for i in (w..emotions.len()).step_by(workers) {
                    *slots[i].lock().expect("slot lock") = Some(f(emotions[i]));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot is filled"))
        .collect()
}

/// Rewrites the text field of every record with [`preprocess`], keeping the
/// other fields byte-for-byte. Records whose text becomes empty are dropped
/// with a warning.
pub fn cmd_preprocess(input: &Path, output: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", input.display())))?;
    read_dataset_file(input, SplitName::Train)?;
    let mut out = String::new();
    let mut kept = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields: Vec<&str> = line.split('\t').collect();
        let cleaned = preprocess(fields[1]);
        if cleaned.is_empty() {
            warn!("{}: line {}: empty after preprocessing; dropped", input.display(), idx + 1);
            continue;
        }
        fields[1] = &cleaned;
        out.push_str(&fields.join("\t"));
        out.push('\n');
        kept += 1;
    }
    write_atomic_str(output, &out)?;
    info!("preprocess: wrote {kept} records to {}", output.display());
    Ok(kept)
}

fn gold_of(r: &TweetRecord) -> Result<f64> {
    r.intensity
        .ok_or_else(|| Error::InvalidArgument(format!("record {} has no gold intensity", r.id)))
}

fn load_charlm(cfg: &PipelineConfig) -> Result<CharLmModel> {
    let file = ModelFile::load(&cfg.artifact("charlm.model"))?;
    CharLmModel::from_model_file(&file)
}

fn char_features(model: &CharLmModel, raw_text: &str, mode: FeatureMode) -> Result<Option<Vec<f64>>> {
    let text = preprocess(raw_text);
    if text.is_empty() {
        return Ok(None);
    }
    extract_features_with_mode(model, &text, mode).map(Some)
}

fn lm_corpus(cfg: &PipelineConfig, train: &DatasetSplit) -> Result<Vec<String>> {
    let lines: Vec<String> = match &cfg.charlm_corpus {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
            std::io::BufReader::new(file)
                .lines()
                .map(|l| l.map(|l| preprocess(&l)))
                .collect::<std::io::Result<_>>()?
        }
        None => train.records.iter().map(|r| preprocess(&r.raw_text)).collect(),
    };
    Ok(lines.into_iter().filter(|l| !l.is_empty()).collect())
}

/// Trains (or imports) the character LM, then fits one SVR per emotion on
/// its features over the train split.
pub fn cmd_train_charlm(cfg: &PipelineConfig) -> Result<()> {
    cfg.check_paths()?;
    let train = cfg.read_split(SplitName::Train)?;
    let model = match &cfg.charlm_import {
        Some(path) => {
            info!("train-charlm: importing {}", path.display());
            import_external_lm(path)?
        }
        None => {
            let corpus = lm_corpus(cfg, &train)?;
            let config = CharLmConfig {
                seed: derive_seed(cfg.seed, "charlm"),
                ..cfg.charlm.clone()
            };
            info!("train-charlm: {} texts, {} steps", corpus.len(), config.steps);
            let run = train_char_lm(&corpus, &config)?;
            let mut log = String::from("step\tloss\n");
            for (i, l) in run.step_losses.iter().enumerate() {
                let _ = writeln!(log, "{}\t{l}", i + 1);
            }
            write_atomic_str(&cfg.artifact("charlm.log"), &log)?;
            run.model
        }
    };
    model.save(&cfg.artifact("charlm.model"))?;

    let by_emotion = split_by_emotion(&train);
    for_each_emotion(cfg.jobs, |emotion| {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for r in &by_emotion[&emotion] {
            match char_features(&model, &r.raw_text, cfg.feature_mode)? {
                Some(f) => {
                    x.push(f);
                    y.push(gold_of(r)?);
                }
                None => warn!("record {}: empty after preprocessing; skipped", r.id),
            }
        }
        let config = SvrConfig {
            seed: derive_seed(cfg.seed, &format!("charlm/svr/{emotion}")),
            ..cfg.svr
        };
        let fit = train_svr(&x, &y, &config)?;
        info!("train-charlm: {emotion} SVR on {} tweets, converged {}", x.len(), fit.converged);
        fit.model.save(&cfg.per_emotion("charlm-svr", emotion))
    })?;
    Ok(())
}

/// Trains one word-level regressor per emotion, early-stopping on the dev
/// split when the config names one.
pub fn cmd_train_word(cfg: &PipelineConfig) -> Result<()> {
    cfg.check_paths()?;
    let train = cfg.read_split(SplitName::Train)?;
    let dev = cfg.dev.as_ref().map(|_| cfg.read_split(SplitName::Dev)).transpose()?;
    let embeddings = cfg
        .embeddings
        .as_ref()
        .map(|p| load_embeddings_file(p, cfg.word.embedding_dim))
        .transpose()?;
    let train_by = split_by_emotion(&train);
    let dev_by = dev.as_ref().map(split_by_emotion);
    for_each_emotion(cfg.jobs, |emotion| {
        let (_, examples) = examples_from_records(&train_by[&emotion])?;
        let dev_examples = match dev_by.as_ref().map(|d| &d[&emotion]) {
            Some(records) if !records.is_empty() => Some(examples_from_records(records)?.1),
            _ => None,
        };
        let config = WordModelConfig {
            seed: derive_seed(cfg.seed, &format!("word/{emotion}")),
            ..cfg.word.clone()
        };
        let run = train_word_model(&examples, dev_examples.as_deref(), embeddings.as_ref(), &config)?;
        let mut log = String::from("epoch\ttrain_mse\tdev_pearson\n");
        for (i, loss) in run.epoch_losses.iter().enumerate() {
            let dev = run.dev_pearson.get(i).map_or_else(|| "-".to_string(), |p| p.to_string());
            let _ = writeln!(log, "{}\t{loss}\t{dev}", i + 1);
        }
        let _ = writeln!(log, "best_epoch\t{}", run.best_epoch + 1);
        write_atomic_str(&cfg.artifact(&format!("word.{emotion}.log")), &log)?;
        info!("train-word: {emotion} kept epoch {}", run.best_epoch + 1);
        run.model.save(&cfg.per_emotion("word", emotion))
    })?;
    Ok(())
}

struct BaselineResources {
    lexicons: Vec<Lexicon>,
    negators: NegatorSet,
    ngram: NgramConfig,
}

impl BaselineResources {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let lexicons = cfg.lexicons.iter().map(|p| load_lexicon_file(p)).collect::<Result<_>>()?;
        let negators = match &cfg.negators {
            Some(p) => {
                let file =
                    std::fs::File::open(p).map_err(|e| Error::MissingInput(format!("{}: {e}", p.display())))?;
                NegatorSet::load(std::io::BufReader::new(file))?
            }
            None => NegatorSet::default(),
        };
        Ok(BaselineResources {
            lexicons,
            negators,
            ngram: cfg.ngram,
        })
    }

    /// Lexicon features followed by the dense hashed n-gram vector.
    fn features(&self, raw_text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize_words(&preprocess(raw_text));
        let mut f = extract_lexicon_features_with_raw(&tokens, Some(raw_text), &self.lexicons, &self.negators);
        f.extend(extract_ngram_features(&tokens, &self.ngram)?.to_dense());
        Ok(f)
    }
}

/// Fits one lexicon/n-gram SVR per emotion on the train split.
pub fn cmd_train_baseline(cfg: &PipelineConfig) -> Result<()> {
    cfg.check_paths()?;
    let train = cfg.read_split(SplitName::Train)?;
    let res = BaselineResources::load(cfg)?;
    let by_emotion = split_by_emotion(&train);
    for_each_emotion(cfg.jobs, |emotion| {
        let records = &by_emotion[&emotion];
        let x = records.iter().map(|r| res.features(&r.raw_text)).collect::<Result<Vec<_>>>()?;
        let y = records.iter().map(gold_of).collect::<Result<Vec<_>>>()?;
        let config = SvrConfig {
            seed: derive_seed(cfg.seed, &format!("baseline/{emotion}")),
            ..cfg.svr
        };
        let fit = train_svr(&x, &y, &config)?;
        info!("train-baseline: {emotion} SVR on {} tweets, converged {}", x.len(), fit.converged);
        fit.model.save(&cfg.per_emotion("baseline", emotion))
    })?;
    Ok(())
}

/// Dumps character-LM features for one split to `features.<split>.txt`.
/// Tweets that are empty after preprocessing are left out.
pub fn cmd_extract_features(cfg: &PipelineConfig, split: SplitName) -> Result<PathBuf> {
    cfg.check_paths()?;
    let data = cfg.read_split(split)?;
    let model = load_charlm(cfg)?;
    let mut rows = Vec::with_capacity(data.len());
    for r in &data.records {
        match char_features(&model, &r.raw_text, cfg.feature_mode)? {
            Some(f) => rows.push((r.id.clone(), f)),
            None => warn!("record {}: empty after preprocessing; no features", r.id),
        }
    }
    let mut buf = Vec::new();
    write_feature_dump(&mut buf, &rows)?;
    let path = cfg.artifact(&format!("features.{}.txt", split.as_str()));
    write_atomic_str(&path, std::str::from_utf8(&buf).expect("feature dump is UTF-8"))?;
    Ok(path)
}

/// Trained models for the legs that a prediction run needs.
struct Legs {
    baseline: Option<(BaselineResources, BTreeMap<EmotionCategory, SvrModel>)>,
    word: Option<BTreeMap<EmotionCategory, WordModel>>,
    char: Option<(CharLmModel, BTreeMap<EmotionCategory, SvrModel>)>,
}

fn load_svrs(cfg: &PipelineConfig, leg: &str) -> Result<BTreeMap<EmotionCategory, SvrModel>> {
    EmotionCategory::ALL
        .iter()
        .map(|&e| Ok((e, SvrModel::load(&cfg.per_emotion(leg, e))?)))
        .collect()
}

impl Legs {
    fn load(cfg: &PipelineConfig, need: [bool; 3]) -> Result<Self> {
        Ok(Legs {
            baseline: if need[0] {
                Some((BaselineResources::load(cfg)?, load_svrs(cfg, "baseline")?))
            } else {
                None
            },
            word: if need[1] {
                Some(
                    EmotionCategory::ALL
                        .iter()
                        .map(|&e| Ok((e, WordModel::load(&cfg.per_emotion("word", e))?)))
                        .collect::<Result<_>>()?,
                )
            } else {
                None
            },
            char: if need[2] {
                Some((load_charlm(cfg)?, load_svrs(cfg, "charlm-svr")?))
            } else {
                None
            },
        })
    }

    /// `[baseline, word, char]`; a leg that is not loaded contributes 0.
    fn predict(&self, r: &TweetRecord, mode: FeatureMode) -> Result<[f64; 3]> {
        let e = r.emotion;
        let text = preprocess(&r.raw_text);
        let baseline = match &self.baseline {
            Some((res, svrs)) => svrs[&e].predict(&res.features(&r.raw_text)?)?,
            None => 0.0,
        };
        let word = match &self.word {
            Some(_) if tokenize_words(&text).is_empty() => FALLBACK_INTENSITY,
            Some(models) => predict_word(&models[&e], &text)?,
            None => 0.0,
        };
        let char = match &self.char {
            Some((lm, svrs)) => match char_features(lm, &r.raw_text, mode)? {
                Some(f) => svrs[&e].predict(&f)?,
                None => FALLBACK_INTENSITY,
            },
            None => 0.0,
        };
        Ok([baseline, word, char])
    }
}

fn leg_predictions(cfg: &PipelineConfig, legs: &Legs, records: &[TweetRecord]) -> Result<Vec<[f64; 3]>> {
    let by_emotion: BTreeMap<EmotionCategory, Vec<(usize, &TweetRecord)>> =
        records.iter().enumerate().fold(BTreeMap::new(), |mut m, (i, r)| {
            m.entry(r.emotion).or_insert_with(Vec::new).push((i, r));
            m
        });
    let parts = for_each_emotion(cfg.jobs, |e| {
        by_emotion
            .get(&e)
            .map_or(&[][..], Vec::as_slice)
            .iter()
            .map(|&(i, r)| Ok((i, legs.predict(r, cfg.feature_mode)?)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = vec![[0.0; 3]; records.len()];
    for (i, p) in parts.into_iter().flatten() {
        out[i] = p;
    }
    Ok(out)
}

/// Predicts the dev split with all three legs and grid-searches the ensemble
/// weights. Writes `dev_legs.tsv`, `weights.txt` and `tune.log`.
pub fn cmd_tune(cfg: &PipelineConfig) -> Result<GridSearchResult> {
    cfg.check_paths()?;
    let dev = cfg.read_split(SplitName::Dev)?;
    let legs = Legs::load(cfg, [true; 3])?;
    let preds = leg_predictions(cfg, &legs, &dev.records)?;

    let mut sets: BTreeMap<EmotionCategory, PredictionSet> = BTreeMap::new();
    let mut table = String::from("id\temotion\tbaseline\tword\tchar\tgold\n");
    for (r, p) in dev.records.iter().zip(&preds) {
        let gold = gold_of(r)?;
        let _ = writeln!(table, "{}\t{}\t{}\t{}\t{}\t{gold}", r.id, r.emotion, p[0], p[1], p[2]);
        let set = sets.entry(r.emotion).or_insert_with(|| PredictionSet {
            baseline: Vec::new(),
            word: Vec::new(),
            char: Vec::new(),
            gold: Some(Vec::new()),
        });
        set.baseline.push(p[0]);
        set.word.push(p[1]);
        set.char.push(p[2]);
        set.gold.as_mut().expect("set above").push(gold);
    }
    write_atomic_str(&cfg.artifact("dev_legs.tsv"), &table)?;

    let result = grid_search_weights(&sets, cfg.ensemble_step)?;
    let mut log = String::new();
    let corners = [("baseline", 1.0, 0.0, 0.0), ("word", 0.0, 1.0, 0.0), ("char", 0.0, 0.0, 1.0)];
    for (name, b, w, c) in corners {
        let score = average_pearson(&sets, &EnsembleWeights::new(b, w, c)?)?;
        let _ = writeln!(log, "leg\t{name}\t{score}");
        if result.avg_pearson < score {
            warn!("tune: ensemble {} below {name} leg {score}", result.avg_pearson);
        }
    }
    let w = result.weights;
    let _ = writeln!(log, "ensemble\t{}\t{} {} {}", result.avg_pearson, w.w_b, w.w_w, w.w_c);
    let _ = writeln!(log, "grid_points\t{}", result.evaluated);
    if cfg.ensemble_per_emotion {
        for (e, r) in grid_search_per_emotion(&sets, cfg.ensemble_step)? {
            let w = r.weights;
            let _ = writeln!(log, "emotion\t{e}\t{}\t{} {} {}", r.avg_pearson, w.w_b, w.w_w, w.w_c);
            write_atomic_str(&cfg.artifact(&format!("weights.{e}.txt")), &w.to_text())?;
        }
    }
    write_atomic_str(&cfg.artifact("tune.log"), &log)?;
    write_atomic_str(&cfg.artifact("weights.txt"), &result.weights.to_text())?;
    info!(
        "tune: weights {:?}, dev avg Pearson {:.4} over {} grid points",
        result.weights, result.avg_pearson, result.evaluated
    );
    Ok(result)
}

/// Weights per emotion: one explicit file for all, the per-emotion files
/// written by [`cmd_tune`], or `weights.txt`.
fn resolve_weights(cfg: &PipelineConfig, explicit: Option<&Path>) -> Result<BTreeMap<EmotionCategory, EnsembleWeights>> {
    let one = |path: PathBuf| -> Result<BTreeMap<_, _>> {
        let w = EnsembleWeights::load(&path)?;
        Ok(EmotionCategory::ALL.iter().map(|&e| (e, w)).collect())
    };
    match explicit {
        Some(path) => one(path.to_path_buf()),
        None if cfg.ensemble_per_emotion => EmotionCategory::ALL
            .iter()
            .map(|&e| Ok((e, EnsembleWeights::load(&cfg.artifact(&format!("weights.{e}.txt")))?)))
            .collect(),
        None => one(cfg.artifact("weights.txt")),
    }
}

/// Ensemble predictions for every record of `input`, written as
/// `id \t emotion \t intensity` in input order. Legs with zero weight for
/// every emotion are not loaded.
pub fn cmd_predict(cfg: &PipelineConfig, input: &Path, output: &Path, weights: Option<&Path>) -> Result<usize> {
    cfg.check_paths()?;
    let weights = resolve_weights(cfg, weights)?;
    let data = read_dataset_file(input, SplitName::Test)?;
    let used = |f: fn(&EnsembleWeights) -> f64| weights.values().any(|w| f(w) != 0.0);
    let legs = Legs::load(cfg, [used(|w| w.w_b), used(|w| w.w_w), used(|w| w.w_c)])?;
    let preds = leg_predictions(cfg, &legs, &data.records)?;
    let mut out = String::new();
    for (r, p) in data.records.iter().zip(preds) {
        let v = weights[&r.emotion].apply(p[0], p[1], p[2]);
        let _ = writeln!(out, "{}\t{}\t{}", r.id, r.emotion, v.clamp(0.0, 1.0));
    }
    write_atomic_str(output, &out)?;
    Ok(data.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub emotion: EmotionCategory,
    pub intensity: f64,
}

/// Reads `id \t emotion \t intensity` lines. Four-field dataset lines are
/// accepted too, so a gold file can be scored against itself.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::MissingInput(format!("{source}: {e}")))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (id, emotion, value) = match fields.as_slice() {
            [id, emotion, value] => (*id, *emotion, *value),
            [..] if fields.len() == 4 => {
                let split = parse_dataset(line.as_bytes(), SplitName::Test)
                    .map_err(|e| Error::parse(&source, idx + 1, e.to_string()))?;
                let r = &split.records[0];
                let v = r.intensity.ok_or_else(|| Error::parse(&source, idx + 1, "missing intensity"))?;
                out.push(Prediction {
                    id: r.id.clone(),
                    emotion: r.emotion,
                    intensity: v,
                });
                continue;
            }
            _ => return Err(Error::parse(&source, idx + 1, format!("expected 3 fields, found {}", fields.len()))),
        };
        let emotion = emotion.trim().parse().map_err(|m: String| Error::parse(&source, idx + 1, m))?;
        let intensity: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(&source, idx + 1, format!("bad intensity {value:?}")))?;
        out.push(Prediction {
            id: id.trim().to_string(),
            emotion,
            intensity,
        });
    }
    Ok(out)
}

/// Scores predictions against gold, aligned line by line. Writes
/// `report.txt` (table) and `report.kv` into `report_dir`.
pub fn cmd_evaluate(predictions: &Path, gold: &Path, report_dir: &Path, model_name: &str) -> Result<EvalReport> {
    let preds = read_predictions(predictions)?;
    let gold = read_dataset_file(gold, SplitName::Test)?;
    if preds.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "{} predictions for {} gold records",
            preds.len(),
            gold.len()
        )));
    }
    let mut scores: BTreeMap<EmotionCategory, EmotionScores> = BTreeMap::new();
    for (i, (p, g)) in preds.iter().zip(&gold.records).enumerate() {
        if p.id != g.id || p.emotion != g.emotion {
            return Err(Error::Alignment(format!(
                "record {}: prediction {} ({}) does not match gold {} ({})",
                i + 1,
                p.id,
                p.emotion,
                g.id,
                g.emotion
            )));
        }
        let s = scores.entry(g.emotion).or_default();
        s.predicted.push(p.intensity);
        s.gold.push(gold_of(g)?);
    }
    let report = evaluate(&scores)?;
    write_atomic_str(&report_dir.join("report.txt"), &report.to_table(model_name))?;
    write_atomic_str(&report_dir.join("report.kv"), &report.to_key_values())?;
    Ok(report)
}
