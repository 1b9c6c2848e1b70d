//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always show.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_force_svr_dual4, naive_gru, naive_lstm, naive_mlstm, naive_pearson, naive_spearman, naive_standardize,
    naive_svr_dual, random_vec,
};
use emoint::charlm::{extract_features, train_char_lm, CharLmConfig, CharLmModel, CharVocab};
use emoint::data::{read_dataset_file, EmotionCategory, SplitName};
use emoint::ensemble::{average_pearson, combine, grid_search_weights, simplex_grid, EnsembleWeights, PredictionSet};
use emoint::metrics::{pearson, spearman};
use emoint::nn::{
    gradient_check, gru_step, lstm_step, mlstm_step, Cell, CellKind, DenseParams, EmbeddingTable, GruCellParams,
    InputLayer, LanguageModel, LinearRegressor, LmSequence, LstmCellParams, MlstmCellParams, ParamSet,
    RegressionExample, SequenceRegressor,
};
use emoint::pipeline::{
    cmd_evaluate, cmd_predict, cmd_train_baseline, cmd_train_charlm, cmd_train_word, cmd_tune, PipelineConfig,
};
use emoint::svr::{train_svr, SvrConfig};
use emoint::synthetic::{write_bundle, SHARED_TASK_COUNTS};
use emoint::word::{train_word_model, WordExample, WordModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let spent = start.elapsed();
    ensure(spent < limit, || format!("took {spent:.1?}, limit {limit:?}"))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let vocab = 11;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for kind in [CellKind::Lstm, CellKind::Mlstm, CellKind::Gru] {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + kind as u64);
        let lm = LanguageModel {
            input: InputLayer::Embedding(EmbeddingTable::uniform(vocab, 6, 0.5, &mut rng)),
            cell: Cell::init(kind, 6, 8, &mut rng),
            head: DenseParams::init(8, vocab, &mut rng),
        };
        let batch: Vec<LmSequence> = (0..2)
            .map(|_| LmSequence {
                inputs: (0..5).map(|_| rng.gen_range(0..vocab)).collect(),
                targets: (0..5).map(|_| rng.gen_range(0..vocab)).collect(),
                init: None,
            })
            .collect();
        let r = gradient_check(&lm, batch.as_slice(), 1e-4).map_err(|e| e.to_string())?;
        ensure(r.checked == lm.num_params(), || format!("{kind} CE: checked {} params", r.checked))?;
        ensure(r.max_relative_error < 1e-4, || format!("{kind} CE: {r:?}"))?;
        worst = worst.max(r.max_relative_error);
        checked += r.checked;

        let reg = SequenceRegressor {
            embedding: EmbeddingTable::uniform(vocab, 6, 0.5, &mut rng),
            forward: Cell::init(kind, 6, 8, &mut rng),
            backward: Some(Cell::init(kind, 6, 8, &mut rng)),
            head: DenseParams::init(16, 1, &mut rng),
            squash: true,
        };
        let batch: Vec<RegressionExample> = (0..3)
            .map(|_| RegressionExample::new((0..5).map(|_| rng.gen_range(0..vocab)).collect(), rng.gen_range(0.0..1.0)))
            .collect();
        let r = gradient_check(&reg, batch.as_slice(), 1e-4).map_err(|e| e.to_string())?;
        ensure(r.max_relative_error < 1e-4, || format!("{kind} MSE: {r:?}"))?;
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dense = LinearRegressor {
        dense: DenseParams::init(5, 1, &mut rng),
    };
    let rows: Vec<(Vec<f64>, f64)> = (0..6).map(|_| (random_vec(&mut rng, 5, 1.0), rng.gen_range(0.0..1.0))).collect();
    let r = gradient_check(&dense, rows.as_slice(), 1e-4).map_err(|e| e.to_string())?;
    ensure(r.max_relative_error < 1e-4, || format!("dense MSE: {r:?}"))?;
    worst = worst.max(r.max_relative_error);
    checked += r.checked;
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("{checked} parameters, worst relative error {worst:.2e}, {:.1?}", start.elapsed()))
}

fn cell_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (input, hidden) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let x = random_vec(&mut rng, input, 2.0);
        let h = random_vec(&mut rng, hidden, 1.0);
        let c = random_vec(&mut rng, hidden, 1.0);

        let p = LstmCellParams::init(input, hidden, &mut rng);
        let (h1, c1) = lstm_step(&p, &x, &h, &c).map_err(|e| e.to_string())?;
        let (h2, c2) = naive_lstm(&p, &x, &h, &c);
        worst = worst.max(max_abs_diff(&h1, &h2)).max(max_abs_diff(&c1, &c2));

        let p = MlstmCellParams::init(input, hidden, &mut rng);
        let (h1, c1) = mlstm_step(&p, &x, &h, &c).map_err(|e| e.to_string())?;
        let (h2, c2) = naive_mlstm(&p, &x, &h, &c);
        worst = worst.max(max_abs_diff(&h1, &h2)).max(max_abs_diff(&c1, &c2));

        let p = GruCellParams::init(input, hidden, &mut rng);
        let h1 = gru_step(&p, &x, &h).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&h1, &naive_gru(&p, &x, &h)));
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("300 cell steps, max deviation {worst:.1e}"))
}

fn scaled_lm_config(kind: CellKind, steps: usize) -> CharLmConfig {
    CharLmConfig {
        cell_kind: kind,
        hidden_dim: 16,
        embedding_dim: Some(8),
        lr: 0.01,
        batch: 16,
        bptt_len: 32,
        steps,
        seed: 7,
        ..CharLmConfig::default()
    }
}

fn char_lm_learnability() -> Outcome {
    let start = Instant::now();
    let pattern = vec!["abab".to_string(); 1000];
    let mut notes = Vec::new();
    for kind in [CellKind::Lstm, CellKind::Mlstm] {
        let run = train_char_lm(&pattern, &scaled_lm_config(kind, 500)).map_err(|e| e.to_string())?;
        let ce = run.model.cross_entropy(&pattern).map_err(|e| e.to_string())?;
        ensure(ce < 0.05, || format!("{kind} abab cross-entropy {ce}"))?;
        notes.push(format!("{kind} abab {ce:.2e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut random = |n: usize| -> Vec<String> {
        (0..n)
            .map(|_| (0..500).map(|_| ['a', 'b', 'c', 'd'][rng.gen_range(0..4)]).collect())
            .collect()
    };
    let (train, held_out) = (random(1000), random(40));
    let run = train_char_lm(&train, &scaled_lm_config(CellKind::Lstm, 500)).map_err(|e| e.to_string())?;
    let ce = run.model.cross_entropy(&held_out).map_err(|e| e.to_string())?;
    ensure((ce - 4f64.ln()).abs() < 0.05, || format!("random 4-char cross-entropy {ce}"))?;
    notes.push(format!("random 4-char {ce:.4} (ln 4 = {:.4})", 4f64.ln()));
    within_time(start, Duration::from_secs(120))?;
    Ok(format!("{}, {:.1?}", notes.join(", "), start.elapsed()))
}

/// Hidden states of `model` over `text`, recomputed with the naive cells.
fn oracle_states(model: &CharLmModel, text: &str) -> Vec<Vec<f64>> {
    let hidden = model.hidden_dim();
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    let mut out = Vec::new();
    for ch in text.chars() {
        let x = match &model.lm.input {
            InputLayer::Embedding(e) => e.table.row(model.vocab.id(ch)).to_vec(),
            InputLayer::OneHot { vocab_size } => {
                let mut v = vec![0.0; *vocab_size];
                v[model.vocab.id(ch)] = 1.0;
                v
            }
        };
        (h, c) = match &model.lm.cell {
            Cell::Lstm(p) => naive_lstm(p, &x, &h, &c),
            Cell::Mlstm(p) => naive_mlstm(p, &x, &h, &c),
            Cell::Gru(_) => unreachable!("character LMs use lstm or mlstm"),
        };
        out.push(h.clone());
    }
    out
}

fn feature_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let alphabet: Vec<char> = "abcdefghij #!?".chars().collect();
    let vocab = CharVocab::from_chars(alphabet[..10].to_vec()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut tweets = 0;
    for (kind, embedding_dim) in [(CellKind::Lstm, Some(6)), (CellKind::Mlstm, None)] {
        let cfg = CharLmConfig {
            cell_kind: kind,
            hidden_dim: 12,
            embedding_dim,
            ..CharLmConfig::default()
        };
        let model = CharLmModel::init(vocab.clone(), &cfg, &mut rng).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let len = rng.gen_range(1..40);
            let text: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
            let f = extract_features(&model, &text).map_err(|e| e.to_string())?;
            ensure(f.len() == 2 * cfg.hidden_dim, || format!("{kind}: length {} for {text:?}", f.len()))?;
            let states = oracle_states(&model, &text);
            let mut mean = vec![0.0; cfg.hidden_dim];
            for s in &states {
                for (m, v) in mean.iter_mut().zip(s) {
                    *m += v / states.len() as f64;
                }
            }
            worst = worst
                .max(max_abs_diff(&f[cfg.hidden_dim..], &mean))
                .max(max_abs_diff(&f[..cfg.hidden_dim], states.last().unwrap()));
            tweets += 1;
        }
        for ch in ['a', '#', 'z'] {
            let f = extract_features(&model, &ch.to_string()).map_err(|e| e.to_string())?;
            ensure(f[..cfg.hidden_dim] == f[cfg.hidden_dim..], || format!("{kind}: halves differ for {ch:?}"))?;
        }
    }
    ensure(worst < 1e-12, || format!("oracle deviation {worst:e}"))?;
    Ok(format!("{tweets} random tweets, oracle deviation {worst:.1e}, single-char halves identical"))
}

fn word_overfit() -> Outcome {
    let start = Instant::now();
    const WORDS: [&str; 24] = [
        "happy", "sad", "angry", "scared", "day", "night", "so", "very", "not", "love", "hate", "fear", "#win",
        "#fail", "today", "again", "work", "home", "great", "awful", "lol", "omg", "!!", "why",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let train: Vec<WordExample> = (0..32)
        .map(|_| WordExample {
            tokens: (0..rng.gen_range(3..9)).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect(),
            target: rng.gen_range(0.0..1.0),
        })
        .collect();
    let cfg = WordModelConfig {
        epochs: 500,
        seed: 5,
        ..WordModelConfig::default()
    };
    let run = train_word_model(&train, None, None, &cfg).map_err(|e| e.to_string())?;
    let mse = run.model.mse(&train).map_err(|e| e.to_string())?;
    ensure(mse < 1e-3, || format!("training MSE {mse}"))?;
    for ex in &train {
        let p = run.model.predict_tokens(&ex.tokens).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&p), || format!("prediction {p} outside [0, 1]"))?;
    }
    within_time(start, Duration::from_secs(120))?;
    let first = run.epoch_losses.iter().position(|l| *l < 1e-3).map_or(0, |e| e + 1);
    Ok(format!("training MSE {mse:.2e} (below 1e-3 from epoch {first}), {:.1?}", start.elapsed()))
}

fn svr_criteria() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let coef: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.08..0.08)).collect();
    let x: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| 0.5 + r.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()).collect();
    let cfg = SvrConfig {
        c: 100.0,
        epsilon: 0.01,
        tol: 1e-9,
        max_iter: 100_000,
        seed: 1,
    };
    let fit = train_svr(&x, &y, &cfg).map_err(|e| e.to_string())?;
    let mut worst_residual: f64 = 0.0;
    for (row, t) in x.iter().zip(&y) {
        worst_residual = worst_residual.max((fit.model.predict_raw(row).map_err(|e| e.to_string())? - t).abs());
    }
    ensure(worst_residual <= 0.01 + 1e-6, || format!("residual {worst_residual}"))?;

    let mut sweeps = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(5..40);
        let x: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 4, 3.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let cfg = SvrConfig {
            c: rng.gen_range(0.1..10.0),
            seed,
            tol: 1e-8,
            ..SvrConfig::default()
        };
        let fit = train_svr(&x, &y, &cfg).map_err(|e| e.to_string())?;
        for w in fit.log.windows(2) {
            let slack = 1e-12 * (1.0 + w[0].dual_objective.abs());
            ensure(w[1].dual_objective >= w[0].dual_objective - slack, || {
                format!("seed {seed}: objective fell from {} to {}", w[0].dual_objective, w[1].dual_objective)
            })?;
        }
        sweeps += fit.log.len();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_gap: f64 = 0.0;
    for _ in 0..3 {
        let x: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let cfg = SvrConfig {
            c: 1.0,
            epsilon: 0.05,
            tol: 1e-10,
            max_iter: 10_000,
            seed: 3,
        };
        let fit = train_svr(&x, &y, &cfg).map_err(|e| e.to_string())?;
        let z = naive_standardize(&x);
        let solver = naive_svr_dual(&fit.dual, &z, &y, cfg.epsilon);
        let (brute, _) = brute_force_svr_dual4(&z, &y, cfg.epsilon, cfg.c, 0.01);
        ensure((solver - brute).abs() < 1e-3, || format!("solver {solver} vs brute force {brute}"))?;
        worst_gap = worst_gap.max((solver - brute).abs());
    }
    Ok(format!(
        "max affine residual {worst_residual:.2e}; objective non-decreasing over {sweeps} sweeps; brute-force gap {worst_gap:.1e}"
    ))
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    while compared < 1000 {
        let n = rng.gen_range(3..60);
        let tie_levels = rng.gen_range(2..8) as f64;
        let draw = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.4) {
                (rng.gen_range(0.0..1.0f64) * tie_levels).floor() / tie_levels
            } else {
                rng.gen_range(0.0..1.0)
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let (Ok(p), Ok(s)) = (pearson(&x, &y).map_err(|e| e.to_string())?, spearman(&x, &y).map_err(|e| e.to_string())?)
        else {
            continue;
        };
        worst = worst.max((p - naive_pearson(&x, &y)).abs()).max((s - naive_spearman(&x, &y)).abs());
        compared += 1;
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    let hand = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0])
        .map_err(|e| e.to_string())?
        .map_err(|d| format!("{d:?}"))?;
    ensure(hand == 0.8, || format!("hand example gave {hand:?}"))?;
    Ok(format!("{compared} vector pairs with ties, max deviation {worst:.1e}; hand example = {hand}"))
}

fn ensemble_protocol() -> Outcome {
    let coarse = simplex_grid(0.5).map_err(|e| e.to_string())?;
    ensure(coarse.len() == 6, || format!("step 0.5 gave {} triples", coarse.len()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut runs = 0;
    for _ in 0..50 {
        let dev: BTreeMap<EmotionCategory, PredictionSet> = EmotionCategory::ALL
            .iter()
            .map(|&e| {
                let n = rng.gen_range(5..30);
                let gold: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let noisy = |rng: &mut ChaCha8Rng, s: f64| -> Vec<f64> {
                    gold.iter().map(|g| (g + rng.gen_range(-s..s)).clamp(0.0, 1.0)).collect()
                };
                let set = PredictionSet {
                    baseline: noisy(&mut rng, 0.5),
                    word: noisy(&mut rng, 0.8),
                    char: noisy(&mut rng, 1.0),
                    gold: Some(gold.clone()),
                };
                (e, set)
            })
            .collect();
        for step in [0.5, 0.1, 0.05] {
            let best = grid_search_weights(&dev, step).map_err(|e| e.to_string())?;
            for corner in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)] {
                let w = EnsembleWeights::new(corner.0, corner.1, corner.2).map_err(|e| e.to_string())?;
                let leg = average_pearson(&dev, &w).map_err(|e| e.to_string())?;
                ensure(best.avg_pearson >= leg, || format!("ensemble {} below leg {leg}", best.avg_pearson))?;
            }
            runs += 1;
        }
        for set in dev.values() {
            let legs = [&set.baseline, &set.word, &set.char];
            for (k, leg) in legs.iter().enumerate() {
                let mut w = [0.0; 3];
                w[k] = 1.0;
                let out = combine(set, &EnsembleWeights::new(w[0], w[1], w[2]).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                ensure(bits(&out) == bits(leg), || format!("corner {k} does not reproduce its leg"))?;
            }
        }
    }

    let perfect: BTreeMap<EmotionCategory, PredictionSet> = EmotionCategory::ALL
        .iter()
        .map(|&e| {
            let gold: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
            let set = PredictionSet {
                baseline: gold.clone(),
                word: (0..20).map(|_| rng.gen_range(0.0..1.0)).collect(),
                char: (0..20).map(|_| rng.gen_range(0.0..1.0)).collect(),
                gold: Some(gold),
            };
            (e, set)
        })
        .collect();
    let best = grid_search_weights(&perfect, 0.05).map_err(|e| e.to_string())?;
    ensure(best.weights == EnsembleWeights::baseline_only(), || format!("perfect baseline gave {:?}", best.weights))?;
    Ok(format!("6 triples at step 0.5; dominance on {runs} searches; corners bit-exact; perfect baseline -> (1, 0, 0)"))
}

fn bundle_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

/// Trains every leg, tunes, predicts the test split and evaluates it.
/// Returns every produced file, keyed by name relative to `root`.
fn full_run(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut cfg = PipelineConfig::load(&bundle_dir().join("pipeline.conf")).map_err(|e| e.to_string())?;
    cfg.output_dir = root.join("models");
    let test = cfg.test.clone().ok_or("demo config has no test split")?;
    let steps = || -> emoint::Result<()> {
        cmd_train_baseline(&cfg)?;
        cmd_train_word(&cfg)?;
        cmd_train_charlm(&cfg)?;
        cmd_tune(&cfg)?;
        cmd_predict(&cfg, &test, &root.join("predictions.tsv"), None)?;
        cmd_evaluate(&root.join("predictions.tsv"), &test, &root.join("report"), "ensemble")?;
        Ok(())
    };
    steps().map_err(|e| e.to_string())?;
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(root).unwrap().display().to_string();
                files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn end_to_end_determinism() -> Outcome {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let first = full_run(a.path())?;
    let second = full_run(b.path())?;
    ensure(first.keys().eq(second.keys()), || "runs produced different file sets".into())?;
    if let Some(name) = first.keys().find(|k| first[*k] != second[*k]) {
        return Err(format!("{name} differs between runs"));
    }
    let kv = String::from_utf8_lossy(&first["report/report.kv"]).into_owned();
    ensure(kv.contains("full.avg_p") && kv.contains("high.avg_p"), || "report lacks a range".into())?;
    let preds = String::from_utf8_lossy(&first["predictions.tsv"]).lines().count();
    ensure(preds == 40, || format!("{preds} predictions for 40 test tweets"))?;
    within_time(start, Duration::from_secs(600))?;
    let avg = |key: &str| kv.lines().find(|l| l.starts_with(key)).map_or("?", |l| l.rsplit(' ').next().unwrap());
    Ok(format!(
        "{} files byte-identical across two runs; test avg Pearson {} (0-1), {} (0.5-1); {:.1?}",
        first.len(),
        avg("full.avg_p "),
        avg("high.avg_p "),
        start.elapsed()
    ))
}

fn dataset_structure() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_bundle(dir.path(), &SHARED_TASK_COUNTS, 3).map_err(|e| e.to_string())?;
    let mut totals = Vec::new();
    for (split, expected) in SHARED_TASK_COUNTS {
        let data = read_dataset_file(&dir.path().join(format!("{}.tsv", split.as_str())), split)
            .map_err(|e| e.to_string())?;
        let counts = data.counts_by_emotion();
        for (emotion, want) in EmotionCategory::ALL.iter().zip(expected) {
            ensure(counts[emotion] == want, || format!("{split:?} {emotion}: {} != {want}", counts[emotion]))?;
        }
        let sum: usize = counts.values().sum();
        ensure(sum == data.len(), || format!("{split:?}: emotion counts sum to {sum}, split has {}", data.len()))?;
        totals.push(sum);
    }
    ensure(totals == [3612, 343, 3142], || format!("split totals {totals:?}"))?;
    let train = read_dataset_file(&dir.path().join("train.tsv"), SplitName::Train).map_err(|e| e.to_string())?;
    let c = train.counts_by_emotion();
    Ok(format!(
        "train joy/anger/fear/sadness = {}/{}/{}/{}; totals {totals:?}",
        c[&EmotionCategory::Joy],
        c[&EmotionCategory::Anger],
        c[&EmotionCategory::Fear],
        c[&EmotionCategory::Sadness]
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient suite", gradient_suite),
        ("cell oracles", cell_oracles),
        ("char-LM learnability", char_lm_learnability),
        ("feature contract", feature_contract),
        ("word-model overfit", word_overfit),
        ("SVR", svr_criteria),
        ("metrics oracle", metrics_oracle),
        ("ensemble protocol", ensemble_protocol),
        ("end-to-end determinism", end_to_end_determinism),
        ("dataset structural check", dataset_structure),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
