//! Seeded generator for tweet-like records, a matching lexicon and word
//! vectors. Used for the bundled demo dataset and for tests that need files
//! in the shared-task format.
//!
//! Each tweet mixes filler words with cue words of its emotion; cues are
//! drawn near the tweet's intensity, and intense tweets are more likely to
//! carry intensifiers, exclamation marks, elongations and capitals. Mentions
//! and links are sprinkled in so that preprocessing has something to strip.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{write_dataset, DatasetSplit, EmotionCategory, SplitName, TweetRecord};
use crate::error::Result;
use crate::io_util::write_atomic_str;
use crate::seed::{derive_seed, rng_from_seed};

/// Per-split record counts in `EmotionCategory::ALL` order (anger, fear, joy, sadness).
pub type SplitCounts = [(SplitName, [usize; 4]); 3];

/// Shared-task sizes: train 3612, dev 343, test 3142.
pub const SHARED_TASK_COUNTS: SplitCounts = [
    (SplitName::Train, [856, 1147, 823, 786]),
    (SplitName::Dev, [83, 109, 78, 73]),
    (SplitName::Test, [760, 995, 714, 673]),
];

/// The bundled demo set: 50 tweets per emotion.
pub const BUNDLED_COUNTS: SplitCounts = [
    (SplitName::Train, [30; 4]),
    (SplitName::Dev, [10; 4]),
    (SplitName::Test, [10; 4]),
];

pub const BUNDLED_SEED: u64 = 2017;
pub const EMBEDDING_DIM: usize = 50;

fn cues(emotion: EmotionCategory) -> &'static [(&'static str, f64)] {
    match emotion {
        EmotionCategory::Anger => &[
            ("grr", 0.3),
            ("annoyed", 0.4),
            ("irritated", 0.45),
            ("mad", 0.6),
            ("angry", 0.7),
            ("hate", 0.75),
            ("#pissed", 0.8),
            ("rage", 0.85),
            ("furious", 0.9),
            ("outraged", 0.95),
        ],
        EmotionCategory::Fear => &[
            ("worried", 0.3),
            ("nervous", 0.4),
            ("anxious", 0.5),
            ("shaking", 0.6),
            ("afraid", 0.65),
            ("scared", 0.7),
            ("#nightmare", 0.75),
            ("horror", 0.8),
            ("panic", 0.85),
            ("terrified", 0.95),
        ],
        EmotionCategory::Joy => &[
            ("lol", 0.3),
            ("glad", 0.4),
            ("smile", 0.45),
            ("fun", 0.5),
            ("happy", 0.6),
            ("love", 0.7),
            ("#blessed", 0.7),
            ("delighted", 0.75),
            ("amazing", 0.8),
            ("ecstatic", 0.95),
        ],
        EmotionCategory::Sadness => &[
            ("sigh", 0.3),
            ("miss", 0.4),
            ("gloomy", 0.45),
            ("lonely", 0.55),
            ("sad", 0.6),
            ("#sad", 0.6),
            ("crying", 0.75),
            ("depressed", 0.85),
            ("heartbroken", 0.9),
            ("devastated", 0.95),
        ],
    }
}

const FILLERS: [&str; 30] = [
    "the", "a", "today", "just", "my", "day", "work", "so", "really", "when", "i", "you", "this", "that", "and", "is",
    "it", "at", "home", "again", "morning", "night", "people", "feel", "why", "what", "with", "about", "still", "ok",
];
const INTENSIFIERS: [&str; 4] = ["very", "so", "totally", "extremely"];

fn elongate(word: &str) -> String {
    match word.char_indices().rev().find(|(_, c)| "aeiouy".contains(*c)) {
        Some((i, c)) => format!("{}{}{}", &word[..i], c.to_string().repeat(4), &word[i + c.len_utf8()..]),
        None => word.to_string(),
    }
}

fn nearest_cue<R: Rng>(emotion: EmotionCategory, intensity: f64, rng: &mut R) -> &'static str {
    let aim = intensity + rng.gen_range(-0.15..0.15);
    cues(emotion)
        .iter()
        .min_by(|a, b| (a.1 - aim).abs().total_cmp(&(b.1 - aim).abs()))
        .expect("cue lists are non-empty")
        .0
}

/// One raw tweet for `emotion` at `intensity`.
pub fn generate_text<R: Rng>(emotion: EmotionCategory, intensity: f64, rng: &mut R) -> String {
    let mut words: Vec<String> = (0..rng.gen_range(3..8))
        .map(|_| FILLERS[rng.gen_range(0..FILLERS.len())].to_string())
        .collect();
    let n_cues = 1 + (intensity * 2.0 * rng.gen::<f64>()).round() as usize;
    for _ in 0..n_cues {
        let mut cue = nearest_cue(emotion, intensity, rng).to_string();
        if intensity > 0.6 && rng.gen_bool(0.3) {
            cue = elongate(&cue);
        }
        if intensity > 0.5 && rng.gen_bool(intensity * 0.5) {
            cue = format!("{} {cue}", INTENSIFIERS[rng.gen_range(0..INTENSIFIERS.len())]);
        }
        let at = rng.gen_range(0..=words.len());
        words.insert(at, cue);
    }
    if intensity < 0.3 && rng.gen_bool(0.2) {
        let at = rng.gen_range(0..words.len());
        words.insert(at, "not".to_string());
    }
    if intensity > 0.7 && rng.gen_bool(0.4) {
        let i = rng.gen_range(0..words.len());
        words[i] = words[i].to_uppercase();
    }
    if rng.gen_bool(0.3) {
        words.insert(0, format!("@user{}", rng.gen_range(1..1000)));
    }
    let mut text = words.join(" ");
    if intensity > 0.5 && rng.gen_bool(intensity) {
        text.push_str(&"!".repeat(rng.gen_range(1..4)));
    } else if rng.gen_bool(0.15) {
        text.push('?');
    }
    if rng.gen_bool(0.2) {
        let _ = write!(text, " http://t.co/{:x}", rng.gen::<u32>());
    }
    if rng.gen_bool(0.05) {
        text.push_str(" 100% ~");
    }
    text
}

/// Records for every split, ids unique across splits, intensities with three
/// decimals. Emotions are interleaved within each split.
pub fn generate_dataset(counts: &SplitCounts, seed: u64) -> Vec<DatasetSplit> {
    let mut next_id = 10_000u64;
    counts
        .iter()
        .map(|(split, per_emotion)| {
            let mut rng = rng_from_seed(derive_seed(seed, &format!("synthetic/{}", split.as_str())));
            let mut records = Vec::new();
            for (emotion, &n) in EmotionCategory::ALL.iter().zip(per_emotion) {
                for _ in 0..n {
                    let intensity = (rng.gen_range(0.0..1.0f64) * 1000.0).round() / 1000.0;
                    records.push(TweetRecord {
                        id: String::new(),
                        raw_text: generate_text(*emotion, intensity, &mut rng),
                        emotion: *emotion,
                        intensity: Some(intensity),
                    });
                }
            }
            records.shuffle(&mut rng);
            for r in &mut records {
                r.id = next_id.to_string();
                next_id += 1;
            }
            DatasetSplit::new(*split, records)
        })
        .collect()
}

/// `term \t label \t score` lines: each cue scored for its emotion, plus a
/// polarity label (`positive` for joy cues, `negative` otherwise).
pub fn lexicon_tsv() -> String {
    let mut out = String::new();
    for emotion in EmotionCategory::ALL {
        for (term, strength) in cues(emotion) {
            let _ = writeln!(out, "{term}\t{emotion}\t{strength}");
            let (label, sign) = if emotion == EmotionCategory::Joy { ("positive", 1.0) } else { ("negative", -1.0) };
            let _ = writeln!(out, "{term}\t{label}\t{}", sign * strength);
        }
    }
    out
}

/// 50-d vectors for cue words, fillers and intensifiers. Dimensions 0-3
/// carry emotion membership scaled by strength, the rest is seeded noise.
/// A few cue words are left out so that random initialization is exercised.
pub fn embeddings_text(seed: u64) -> String {
    let mut rng = rng_from_seed(derive_seed(seed, "synthetic/embeddings"));
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (e_idx, emotion) in EmotionCategory::ALL.iter().enumerate() {
        for (k, (term, strength)) in cues(*emotion).iter().enumerate() {
            if k % 5 == 4 {
                continue;
            }
            let mut v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.gen_range(-0.1..0.1)).collect();
            v[e_idx] = *strength;
            v[4] = *strength;
            rows.insert(term.to_string(), v);
        }
    }
    for word in FILLERS.iter().chain(&INTENSIFIERS) {
        rows.entry(word.to_string())
            .or_insert_with(|| (0..EMBEDDING_DIM).map(|_| rng.gen_range(-0.1..0.1)).collect());
    }
    let mut out = String::new();
    for (word, v) in rows {
        out.push_str(&word);
        for x in v {
            let _ = write!(out, " {x:.6}");
        }
        out.push('\n');
    }
    out
}

/// Writes `train.tsv`, `dev.tsv`, `test.tsv`, `lexicon.tsv` and
/// `embeddings.txt` into `dir`.
pub fn write_bundle(dir: &Path, counts: &SplitCounts, seed: u64) -> Result<()> {
    for split in generate_dataset(counts, seed) {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &split.records)?;
        write_atomic_str(
            &dir.join(format!("{}.tsv", split.split_name.as_str())),
            std::str::from_utf8(&buf).expect("dataset output is UTF-8"),
        )?;
    }
    write_atomic_str(&dir.join("lexicon.tsv"), &lexicon_tsv())?;
    write_atomic_str(&dir.join("embeddings.txt"), &embeddings_text(seed))?;
    Ok(())
}
