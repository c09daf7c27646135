//! Parallel caption corpus: annotation parsing, translation, per-video
//! splitting, rare-word filtering and the vocabulary.

mod tokenize;
pub mod translate;
mod vocab;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tokenize::tokenize;
pub use translate::{
    translate_corpus, CommandTranslator, TranslateOptions, TranslationCache, Translator,
};
pub use vocab::{
    decode_ids, encode_caption, TokenSequence, Vocabulary, BOS, EOS, MAX_LEN, PAD, SPECIALS, UNK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRecord {
    pub video_id: String,
    pub english: String,
    /// Empty until translated.
    pub nepali: String,
    pub split: Option<Split>,
}

impl CaptionRecord {
    pub fn new(video_id: impl Into<String>, english: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            english: english.into(),
            nepali: String::new(),
            split: None,
        }
    }
}

/// Parses `<video_id> <caption>` lines. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_annotations(raw: &str) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once(' ') {
            Some((id, caption)) if !id.is_empty() => {
                out.push(CaptionRecord::new(id, caption.trim()));
            }
            _ => return Err(Error::MalformedLine { line: n + 1 }),
        }
    }
    Ok(out)
}

/// Split fractions for (train, val, test).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// (train, val, test) video counts for `n` videos. Val and test are
    /// floored; the remainder goes to train.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let val = floor(self.val);
        let test = floor(self.test);
        (n - val - test, val, test)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "split ratios must be non-negative and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }
}

/// Assigns splits per video: the sorted distinct ids are shuffled with a
/// seeded generator, then the first block goes to val, the next to test and
/// the rest to train.
pub fn split_by_video(
    mut records: Vec<CaptionRecord>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<CaptionRecord>> {
    ratios.validate()?;
    let mut videos: Vec<String> = records
        .iter()
        .map(|r| r.video_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if videos.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 distinct videos to split, found {}",
            videos.len()
        )));
    }
    videos.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (_, n_val, n_test) = ratios.counts(videos.len());
    let assignment: HashMap<&str, Split> = videos
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let split = if i < n_val {
                Split::Val
            } else if i < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
            (v.as_str(), split)
        })
        .collect();
    for r in &mut records {
        r.split = Some(assignment[r.video_id.as_str()]);
    }
    Ok(records)
}

/// Drops training captions that contain a word seen fewer than `min_count`
/// times in the training captions. Dropping captions lowers other counts, so
/// this repeats until nothing changes; the result is a fixpoint. Val/test
/// records pass through untouched.
pub fn filter_rare(mut records: Vec<CaptionRecord>, min_count: usize) -> Vec<CaptionRecord> {
    loop {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for r in records.iter().filter(|r| r.split == Some(Split::Train)) {
            for tok in tokenize(&r.nepali) {
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        let before = records.len();
        records.retain(|r| {
            r.split != Some(Split::Train)
                || tokenize(&r.nepali).iter().all(|t| counts[*t] >= min_count)
        });
        if records.len() == before {
            return records;
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    video_id: String,
    english: String,
    nepali: String,
    split: String,
}

/// Writes the corpus CSV (`video_id,english,nepali,split`).
pub fn write_csv<W: std::io::Write>(records: &[CaptionRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(CsvRow {
            video_id: r.video_id.clone(),
            english: r.english.clone(),
            nepali: r.nepali.clone(),
            split: r.split.map(|s| s.to_string()).unwrap_or_default(),
        })?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<CaptionRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["video_id", "english", "nepali", "split"] {
        return Err(Error::Config(format!(
            "corpus CSV header must be video_id,english,nepali,split, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            if row.video_id.is_empty() {
                return Err(Error::Config("corpus CSV row with empty video_id".into()));
            }
            let split = match row.split.as_str() {
                "" => None,
                s => Some(s.parse()?),
            };
            Ok(CaptionRecord {
                video_id: row.video_id,
                english: row.english,
                nepali: row.nepali,
                split,
            })
        })
        .collect()
}

pub fn save_csv(records: &[CaptionRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn load_csv(path: &Path) -> Result<Vec<CaptionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

pub fn records_in(records: &[CaptionRecord], split: Split) -> Vec<CaptionRecord> {
    records
        .iter()
        .filter(|r| r.split == Some(split))
        .cloned()
        .collect()
}
