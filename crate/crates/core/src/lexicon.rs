//! Lexicon and n-gram features for the baseline leg.
//!
//! A lexicon is a TSV of `term \t label \t score`. For each loaded lexicon,
//! and for each of its labels in sorted order, three features are emitted:
//! the sum, the maximum and the count of matched (signed) scores. Six global
//! features follow:
//!
//! | name           | value                                                |
//! |----------------|------------------------------------------------------|
//! | `tokens`       | number of tokens                                     |
//! | `all_caps`     | raw tokens with ≥ 2 letters, all of them upper case  |
//! | `elongated`    | tokens with some character repeated ≥ 3 times in a row |
//! | `exclamations` | `!` characters                                        |
//! | `questions`    | `?` characters                                        |
//! | `hashtags`     | tokens starting with `#`                              |
//!
//! Negation: after a negator token every score is multiplied by −1 until a
//! token containing one of `, . ; ! ?` closes the scope (that token is still
//! negated). A second negator inside the scope flips the sign back.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::seed::fnv1a64;

pub const DEFAULT_NEGATORS: [&str; 9] = ["not", "no", "never", "n't", "cannot", "nobody", "nothing", "neither", "nor"];
pub const GLOBAL_FEATURES: [&str; 6] = ["tokens", "all_caps", "elongated", "exclamations", "questions", "hashtags"];
const SCOPE_CLOSERS: [char; 5] = [',', '.', ';', '!', '?'];
const TRIM_CHARS: &[char] = &['!', '?', '.', ',', ';', ':', '"', '\'', '(', ')', '*', '-'];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    pub name: String,
    pub entries: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Lexicon {
    pub fn labels(&self) -> BTreeSet<&str> {
        self.entries.values().flat_map(|m| m.keys().map(String::as_str)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, token: &str) -> Option<&BTreeMap<String, f64>> {
        self.entries.get(token).or_else(|| {
            let trimmed = token.trim_matches(TRIM_CHARS);
            if trimmed.is_empty() || trimmed == token {
                None
            } else {
                self.entries.get(trimmed)
            }
        })
    }
}

pub fn load_lexicon<R: BufRead>(reader: R, name: &str) -> Result<Lexicon> {
    let mut lex = Lexicon {
        name: name.to_string(),
        entries: BTreeMap::new(),
    };
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(name, line_no, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let term = fields[0].trim().to_lowercase();
        let label = fields[1].trim().to_string();
        if term.is_empty() || label.is_empty() {
            return Err(Error::parse(name, line_no, "empty term or label"));
        }
        let score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(name, line_no, format!("score {:?} is not a number", fields[2].trim())))?;
        if !score.is_finite() {
            return Err(Error::parse(name, line_no, "score must be finite"));
        }
        if lex.entries.entry(term.clone()).or_default().insert(label.clone(), score).is_some() {
            warn!("{name}: line {line_no}: duplicate entry ({term}, {label}); keeping the later score");
        }
    }
    Ok(lex)
}

/// Loads a lexicon file, naming it after the file stem.
pub fn load_lexicon_file(path: &Path) -> Result<Lexicon> {
    let file = std::fs::File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().map_or_else(|| "lexicon".to_string(), |s| s.to_string_lossy().into_owned());
    load_lexicon(std::io::BufReader::new(file), &name).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegatorSet(BTreeSet<String>);

impl Default for NegatorSet {
    fn default() -> Self {
        NegatorSet(DEFAULT_NEGATORS.iter().map(|s| s.to_string()).collect())
    }
}

impl NegatorSet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        NegatorSet(words.into_iter().map(|w| w.into().to_lowercase()).collect())
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut words = BTreeSet::new();
        for line in reader.lines() {
            let line = line?;
            let word = line.trim();
            if !word.is_empty() && !word.starts_with('#') {
                words.insert(word.to_lowercase());
            }
        }
        Ok(NegatorSet(words))
    }

    pub fn is_negator(&self, token: &str) -> bool {
        let trimmed = token.trim_matches(TRIM_CHARS);
        self.0.contains(token) || self.0.contains(trimmed) || trimmed.ends_with("n't")
    }
}

/// Names of the features produced by [`extract_lexicon_features`], in order.
pub fn lexicon_feature_names(lexicons: &[Lexicon]) -> Vec<String> {
    let mut names = Vec::new();
    for lex in lexicons {
        for label in lex.labels() {
            for stat in ["sum", "max", "count"] {
                names.push(format!("{}.{label}.{stat}", lex.name));
            }
        }
    }
    names.extend(GLOBAL_FEATURES.iter().map(|s| s.to_string()));
    names
}

/// Sign (+1 or −1) applied to each token's lexicon scores.
pub fn negation_signs(tokens: &[String], negators: &NegatorSet) -> Vec<f64> {
    let mut sign = 1.0;
    tokens
        .iter()
        .map(|tok| {
            let current = sign;
            if negators.is_negator(tok) {
                sign = -sign;
            }
            if tok.contains(SCOPE_CLOSERS) {
                sign = 1.0;
            }
            current
        })
        .collect()
}

fn is_elongated(token: &str) -> bool {
    let chars: Vec<char> = token.chars().collect();
    chars.windows(3).any(|w| w[0] == w[1] && w[1] == w[2])
}

fn is_all_caps(raw_token: &str) -> bool {
    let letters: Vec<char> = raw_token.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

pub fn extract_lexicon_features(tokens: &[String], lexicons: &[Lexicon], negators: &NegatorSet) -> Vec<f64> {
    extract_lexicon_features_with_raw(tokens, None, lexicons, negators)
}

/// As [`extract_lexicon_features`], counting capitalized words in `raw_text`
/// (the text before lowercasing) when it is given.
pub fn extract_lexicon_features_with_raw(
    tokens: &[String],
    raw_text: Option<&str>,
    lexicons: &[Lexicon],
    negators: &NegatorSet,
) -> Vec<f64> {
    let signs = negation_signs(tokens, negators);
    let mut out = Vec::new();
    for lex in lexicons {
        let labels = lex.labels();
        let mut stats: BTreeMap<&str, (f64, f64, f64)> =
            labels.iter().map(|l| (*l, (0.0, f64::NEG_INFINITY, 0.0))).collect();
        for (tok, sign) in tokens.iter().zip(&signs) {
            if let Some(entry) = lex.lookup(tok) {
                for (label, score) in entry {
                    let s = stats.get_mut(label.as_str()).expect("label set covers all entries");
                    let v = sign * score;
                    s.0 += v;
                    s.1 = s.1.max(v);
                    s.2 += 1.0;
                }
            }
        }
        for (sum, max, count) in stats.into_values() {
            out.extend([sum, if count > 0.0 { max } else { 0.0 }, count]);
        }
    }
    let all_caps = raw_text.map_or_else(
        || tokens.iter().filter(|t| is_all_caps(t)).count(),
        |raw| raw.split_whitespace().filter(|t| is_all_caps(t)).count(),
    );
    let char_count = |ch: char| tokens.iter().map(|t| t.matches(ch).count()).sum::<usize>() as f64;
    out.extend([
        tokens.len() as f64,
        all_caps as f64,
        tokens.iter().filter(|t| is_elongated(t)).count() as f64,
        char_count('!'),
        char_count('?'),
        tokens.iter().filter(|t| t.starts_with('#') && t.len() > 1).count() as f64,
    ]);
    out
}

/// Hashed n-gram settings. A range with `max < min` is disabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub word_min: usize,
    pub word_max: usize,
    pub char_min: usize,
    pub char_max: usize,
    pub hash_dim: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            word_min: 1,
            word_max: 2,
            char_min: 3,
            char_max: 4,
            hash_dim: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: BTreeMap<usize, f64>,
}

impl SparseVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (&i, &x) in &self.entries {
            v[i] = x;
        }
        v
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

/// Bucket for an n-gram: FNV-1a 64 of `"w:" + words joined by spaces` or
/// `"c:" + characters`, modulo `hash_dim`.
pub fn ngram_bucket(key: &str, hash_dim: usize) -> usize {
    (fnv1a64(key.as_bytes()) % hash_dim as u64) as usize
}

/// Word n-grams over the token sequence and character n-grams within each
/// token, counted into hashed buckets.
pub fn extract_ngram_features(tokens: &[String], config: &NgramConfig) -> Result<SparseVector> {
    if config.hash_dim == 0 {
        return Err(Error::InvalidArgument("hash_dim must be positive".into()));
    }
    let mut entries = BTreeMap::new();
    let mut bump = |key: String| *entries.entry(ngram_bucket(&key, config.hash_dim)).or_insert(0.0) += 1.0;
    for n in config.word_min.max(1)..=config.word_max {
        for window in tokens.windows(n) {
            bump(format!("w:{}", window.join(" ")));
        }
    }
    for tok in tokens {
        let chars: Vec<char> = tok.chars().collect();
        for n in config.char_min.max(1)..=config.char_max {
            for window in chars.windows(n) {
                bump(format!("c:{}", window.iter().collect::<String>()));
            }
        }
    }
    Ok(SparseVector {
        dim: config.hash_dim,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn joy_lexicon() -> Lexicon {
        load_lexicon("happy\tjoy\t0.8\n".as_bytes(), "toy").unwrap()
    }

    #[test]
    fn load_examples() {
        let lex = joy_lexicon();
        assert_eq!(lex.entries["happy"]["joy"], 0.8);
        assert!(load_lexicon("".as_bytes(), "e").unwrap().is_empty());
        match load_lexicon("ok\tjoy\t1\nsad\tsadness\tx\n".as_bytes(), "bad") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let dup = load_lexicon("Sad\tsadness\t0.2\nsad\tsadness\t0.9\n".as_bytes(), "d").unwrap();
        assert_eq!(dup.entries["sad"]["sadness"], 0.9);
    }

    #[test]
    fn single_match() {
        let f = extract_lexicon_features(&toks("happy"), &[joy_lexicon()], &NegatorSet::default());
        assert_eq!(&f[..3], &[0.8, 0.8, 1.0]);
        assert_eq!(f.len(), 3 + GLOBAL_FEATURES.len());
    }

    #[test]
    fn negation_examples() {
        let lex = [joy_lexicon()];
        let neg = NegatorSet::default();
        assert_eq!(extract_lexicon_features(&toks("not happy"), &lex, &neg)[0], -0.8);
        let f = extract_lexicon_features(&toks("not happy! happy"), &lex, &neg);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.8);
        assert_eq!(f[2], 2.0);
        assert_eq!(extract_lexicon_features(&toks("don't happy"), &lex, &neg)[0], -0.8);
        assert_eq!(extract_lexicon_features(&toks("not never happy"), &lex, &neg)[0], 0.8);
    }

    #[test]
    fn global_features() {
        let neg = NegatorSet::default();
        let t = toks("soooo happy!! #blessed what?");
        let f = extract_lexicon_features_with_raw(&t, Some("SOOOO Happy!! #blessed WHAT?"), &[], &neg);
        assert_eq!(f, vec![4.0, 2.0, 1.0, 2.0, 1.0, 1.0]);
        assert_eq!(lexicon_feature_names(&[]), GLOBAL_FEATURES.to_vec());
    }

    #[test]
    fn feature_layout_is_sorted_by_label() {
        let lex = load_lexicon("a\tz\t1\nb\tm\t2\n".as_bytes(), "l").unwrap();
        assert_eq!(&lexicon_feature_names(&[lex])[..6], ["l.m.sum", "l.m.max", "l.m.count", "l.z.sum", "l.z.max", "l.z.count"]);
    }

    #[test]
    fn ngram_examples() {
        let only_chars = NgramConfig {
            word_min: 1,
            word_max: 0,
            char_min: 3,
            char_max: 3,
            hash_dim: 1024,
        };
        assert!(extract_ngram_features(&[], &NgramConfig::default()).unwrap().entries.is_empty());
        let v = extract_ngram_features(&toks("abab"), &only_chars).unwrap();
        assert_eq!(v.total(), 2.0);
        let expected: BTreeSet<usize> = ["c:aba", "c:bab"].iter().map(|k| ngram_bucket(k, 1024)).collect();
        assert_eq!(v.entries.keys().copied().collect::<BTreeSet<_>>(), expected);
        let t = toks("so happy today");
        assert_eq!(
            extract_ngram_features(&t, &NgramConfig::default()).unwrap(),
            extract_ngram_features(&t, &NgramConfig::default()).unwrap()
        );
        assert!(extract_ngram_features(&t, &NgramConfig { hash_dim: 0, ..NgramConfig::default() }).is_err());
    }

    #[test]
    fn ngram_counts_match_enumeration() {
        // 3 unigrams + 2 bigrams; char 3/4-grams: "so" none, "happy" 3+2, "today" 3+2.
        let v = extract_ngram_features(&toks("so happy today"), &NgramConfig::default()).unwrap();
        assert_eq!(v.total(), 15.0);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["happy", "sad", "ok", "great", "meh", "fine"]).prop_map(String::from)
    }

    fn lexicons() -> Vec<Lexicon> {
        vec![load_lexicon("happy\tjoy\t0.8\ngreat\tjoy\t0.5\nsad\tsadness\t0.9\nsad\tjoy\t-0.4\n".as_bytes(), "x").unwrap()]
    }

    proptest! {
        #[test]
        fn sums_are_additive(a in prop::collection::vec(word(), 0..8), b in prop::collection::vec(word(), 0..8)) {
            let neg = NegatorSet::default();
            let lex = lexicons();
            let fa = extract_lexicon_features(&a, &lex, &neg);
            let fb = extract_lexicon_features(&b, &lex, &neg);
            let joined: Vec<String> = a.iter().chain(&b).cloned().collect();
            let fj = extract_lexicon_features(&joined, &lex, &neg);
            for k in (0..6).step_by(3) {
                prop_assert!((fj[k] - fa[k] - fb[k]).abs() < 1e-12);
                prop_assert_eq!(fj[k + 2], fa[k + 2] + fb[k + 2]);
            }
        }

        #[test]
        fn double_negation_restores_sums(words in prop::collection::vec(word(), 1..8)) {
            let neg = NegatorSet::default();
            let lex = lexicons();
            let plain = extract_lexicon_features(&words, &lex, &neg);
            let mut twice = vec!["not".to_string(), "no".to_string()];
            twice.extend(words.iter().cloned());
            let negated = extract_lexicon_features(&twice, &lex, &neg);
            for k in (0..6).step_by(3) {
                prop_assert!((plain[k] - negated[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn layout_length_is_fixed(words in prop::collection::vec(word(), 0..8)) {
            let lex = lexicons();
            prop_assert_eq!(
                extract_lexicon_features(&words, &lex, &NegatorSet::default()).len(),
                lexicon_feature_names(&lex).len()
            );
        }
    }
}
