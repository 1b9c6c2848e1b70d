//! Dataset ingestion and tweet preprocessing.
//!
//! Dataset files are UTF-8 TSV with one record per line:
//! `id \t text \t emotion \t intensity`. Unlabeled test files may leave the
//! intensity out or use the placeholder `NONE`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder written for records without a gold intensity.
pub const MISSING_INTENSITY: &str = "NONE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionCategory {
    Anger,
    Fear,
    Joy,
    Sadness,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; 4] = [
        EmotionCategory::Anger,
        EmotionCategory::Fear,
        EmotionCategory::Joy,
        EmotionCategory::Sadness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionCategory::Anger => "anger",
            EmotionCategory::Fear => "fear",
            EmotionCategory::Joy => "joy",
            EmotionCategory::Sadness => "sadness",
        }
    }
}

impl fmt::Display for EmotionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "anger" => Ok(EmotionCategory::Anger),
            "fear" => Ok(EmotionCategory::Fear),
            "joy" => Ok(EmotionCategory::Joy),
            "sadness" => Ok(EmotionCategory::Sadness),
            other => Err(format!("unknown emotion {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidArgument(format!("unknown split name {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TweetRecord {
    pub id: String,
    pub raw_text: String,
    pub emotion: EmotionCategory,
    /// Gold intensity in `[0, 1]`; `None` for unlabeled data.
    pub intensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub split_name: SplitName,
    pub records: Vec<TweetRecord>,
}

impl DatasetSplit {
    pub fn new(split_name: SplitName, records: Vec<TweetRecord>) -> Self {
        DatasetSplit { split_name, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts_by_emotion(&self) -> BTreeMap<EmotionCategory, usize> {
        let mut counts: BTreeMap<_, _> = EmotionCategory::ALL.iter().map(|&e| (e, 0)).collect();
        for r in &self.records {
            *counts.get_mut(&r.emotion).unwrap() += 1;
        }
        counts
    }
}

fn parse_intensity(field: &str) -> std::result::Result<Option<f64>, String> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case(MISSING_INTENSITY) || field == "?" {
        return Ok(None);
    }
    let value: f64 = field
        .parse()
        .map_err(|_| format!("intensity {field:?} is not a number"))?;
    if !(0.0..=1.0).contains(&value) {
        return Err(format!("intensity {value} outside [0, 1]"));
    }
    Ok(Some(value))
}

/// Parses one dataset stream. Blank lines are skipped; line numbers in errors
/// are 1-based physical line numbers.
pub fn parse_dataset<R: BufRead>(reader: R, split_name: SplitName) -> Result<DatasetSplit> {
    let source = split_name.as_str();
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(
                source,
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(Error::parse(source, line_no, "empty id"));
        }
        let raw_text = fields[1];
        if raw_text.trim().is_empty() {
            return Err(Error::parse(source, line_no, "empty tweet text"));
        }
        let emotion = fields[2]
            .trim()
            .parse::<EmotionCategory>()
            .map_err(|m| Error::parse(source, line_no, m))?;
        let intensity = match fields.get(3) {
            Some(f) => parse_intensity(f).map_err(|m| Error::parse(source, line_no, m))?,
            None => None,
        };
        records.push(TweetRecord {
            id: id.to_string(),
            raw_text: raw_text.to_string(),
            emotion,
            intensity,
        });
    }
    Ok(DatasetSplit { split_name, records })
}

pub fn read_dataset_file(path: &std::path::Path, split_name: SplitName) -> Result<DatasetSplit> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    parse_dataset(std::io::BufReader::new(file), split_name).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}

/// Writes records in the dataset format accepted by [`parse_dataset`].
pub fn write_dataset<W: Write>(mut out: W, records: &[TweetRecord]) -> Result<()> {
    for r in records {
        match r.intensity {
            Some(v) => writeln!(out, "{}\t{}\t{}\t{}", r.id, r.raw_text, r.emotion, v)?,
            None => writeln!(out, "{}\t{}\t{}\t{}", r.id, r.raw_text, r.emotion, MISSING_INTENSITY)?,
        }
    }
    Ok(())
}

/// Characters kept by [`preprocess`] besides ASCII letters, digits and space.
pub const ALLOWED_PUNCTUATION: &[char] = &['@', '-', '!', ':', '(', ')', ',', ';', '?', '.', '#', '\'', '*'];

pub fn is_allowed_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == ' ' || ALLOWED_PUNCTUATION.contains(&c)
}

fn starts_with_ignore_ascii_case(token: &str, prefix: &str) -> bool {
    token.len() >= prefix.len()
        && token.is_char_boundary(prefix.len())
        && token[..prefix.len()].eq_ignore_ascii_case(prefix)
}

fn is_url_or_mention(token: &str) -> bool {
    token.starts_with('@')
        || starts_with_ignore_ascii_case(token, "http://")
        || starts_with_ignore_ascii_case(token, "https://")
        || starts_with_ignore_ascii_case(token, "www.")
}

fn strip_urls_and_mentions(text: &str) -> String {
    text.split_whitespace()
        .filter(|t| !is_url_or_mention(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalizes a raw tweet: drops URLs and user mentions, replaces every
/// character outside the allowed set with a space, lowercases, and collapses
/// whitespace.
///
/// Filtering can expose new mention or `www.` tokens (`"x~@bob"` becomes
/// `"x @bob"`), so stripping runs a second time after filtering. That keeps
/// the function idempotent.
pub fn preprocess(raw_text: &str) -> String {
    let stripped = strip_urls_and_mentions(raw_text);
    let filtered: String = stripped
        .chars()
        .map(|c| if is_allowed_char(c) { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    strip_urls_and_mentions(&filtered)
}

/// Partitions records by emotion. All four buckets are always present.
pub fn split_by_emotion(split: &DatasetSplit) -> BTreeMap<EmotionCategory, Vec<TweetRecord>> {
    let mut buckets: BTreeMap<_, _> = EmotionCategory::ALL.iter().map(|&e| (e, Vec::new())).collect();
    for r in &split.records {
        buckets.get_mut(&r.emotion).unwrap().push(r.clone());
    }
    buckets
}
