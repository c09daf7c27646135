//! Corpus BLEU-1..4 and exact-match METEOR over multi-reference captions,
//! both reported on a 0–100 scale, plus model evaluation on a split.

mod bleu;
mod meteor;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

pub use bleu::{bleu, bleu_from_stats, closest_ref_len, item_stats, NgramStats};
pub use meteor::{align, meteor, meteor_item, meteor_pair, Alignment};

use crate::corpus::{tokenize, CaptionRecord, Split, Vocabulary, MAX_LEN};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frames::FeatureStore;
use crate::kv::KvDoc;
use crate::seq2seq::{greedy_decode, Checkpoint};

/// Whitespace/punctuation tokenization shared with the corpus builder.
pub fn toks(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(String::from).collect()
}

/// One candidate and its references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredItem {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl ScoredItem {
    pub fn new(candidate: Vec<String>, references: Vec<Vec<String>>) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::InsufficientData("scored item has no references".into()));
        }
        Ok(Self {
            candidate,
            references,
        })
    }

    pub fn from_text(candidate: &str, references: &[&str]) -> Result<Self> {
        Self::new(toks(candidate), references.iter().map(|r| toks(r)).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScoredCorpus {
    items: Vec<ScoredItem>,
}

impl ScoredCorpus {
    pub fn new(items: Vec<ScoredItem>) -> Self {
        Self { items }
    }

    pub fn items(&self) -> &[ScoredItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Pairs `video_id<TAB>caption` candidates with every reference caption
    /// of the same video. Videos without references are an error.
    pub fn from_tsv(candidates: &[(String, String)], references: &[(String, String)]) -> Result<Self> {
        let mut refs: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
        for (id, text) in references {
            refs.entry(id).or_default().push(toks(text));
        }
        let items = candidates
            .iter()
            .map(|(id, text)| {
                let r = refs
                    .get(id.as_str())
                    .ok_or_else(|| Error::InsufficientData(format!("no references for video {id}")))?;
                ScoredItem::new(toks(text), r.clone())
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(items))
    }
}

/// Reads `video_id<TAB>caption` lines; blank lines are skipped.
pub fn read_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text)
}

pub fn parse_tsv(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(id, c)| (id.trim().to_string(), c.trim().to_string()))
                .ok_or(Error::MalformedLine { line: i + 1 })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    /// BLEU-1..4.
    pub bleu: [f64; 4],
    pub meteor: f64,
    pub items: usize,
}

impl EvalReport {
    pub fn score(corpus: &ScoredCorpus, label: impl Into<String>, exec: Exec) -> Result<Self> {
        let b = bleu(corpus, 4, exec)?;
        Ok(Self {
            label: label.into(),
            bleu: [b[0], b[1], b[2], b[3]],
            meteor: meteor(corpus, exec)?,
            items: corpus.len(),
        })
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set("label", &self.label);
        for (n, s) in self.bleu.iter().enumerate() {
            doc.set(&format!("bleu{}", n + 1), s);
        }
        doc.set("meteor", self.meteor);
        doc.set("items", self.items);
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        Ok(Self {
            label: doc.require("label")?.to_string(),
            bleu: [
                doc.require_value("bleu1")?,
                doc.require_value("bleu2")?,
                doc.require_value("bleu3")?,
                doc.require_value("bleu4")?,
            ],
            meteor: doc.require_value("meteor")?,
            items: doc.require_value("items")?,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: BLEU-1 {:.2}  BLEU-2 {:.2}  BLEU-3 {:.2}  BLEU-4 {:.2}  METEOR {:.2}  ({} videos)",
            self.label, self.bleu[0], self.bleu[1], self.bleu[2], self.bleu[3], self.meteor, self.items
        )
    }
}

/// Greedy captions for every video with a record in `split`, keyed by
/// video id in sorted order.
pub fn caption_split(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    records: &[CaptionRecord],
    split: Split,
    store: &dyn FeatureStore,
    exec: Exec,
) -> Result<Vec<(String, String)>> {
    let model = checkpoint.model_for(vocab)?;
    let mut ids: Vec<&str> = records
        .iter()
        .filter(|r| r.split == Some(split))
        .map(|r| r.video_id.as_str())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let missing: Vec<String> = ids.iter().filter(|id| !store.contains(id)).map(|s| s.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingFeatures(missing));
    }
    exec.map(&ids, |id| {
        let features = store.load(id)?.features;
        Ok((id.to_string(), greedy_decode(&model, features.view(), vocab, MAX_LEN)?))
    })
    .into_iter()
    .collect()
}

/// Decodes one caption per video of `split` and scores it against all of
/// that video's Nepali captions.
pub fn evaluate_model(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    records: &[CaptionRecord],
    split: Split,
    store: &dyn FeatureStore,
    label: &str,
    exec: Exec,
) -> Result<EvalReport> {
    let candidates = caption_split(checkpoint, vocab, records, split, store, exec)?;
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let references: Vec<(String, String)> = records
        .iter()
        .filter(|r| r.split == Some(split))
        .map(|r| (r.video_id.clone(), r.nepali.clone()))
        .collect();
    EvalReport::score(&ScoredCorpus::from_tsv(&candidates, &references)?, label, exec)
}
