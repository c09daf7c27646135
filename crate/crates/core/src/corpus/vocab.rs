use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tokenize::tokenize;
use super::{CaptionRecord, Split};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Default caption length cap (content tokens + bos/eos ≤ this + 1).
pub const MAX_LEN: usize = 10;

/// Frequency-ordered token ↔ index map. Indices are contiguous and the four
/// specials occupy 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    token_to_index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from the Nepali captions of training-split records only. Tokens
    /// are ordered by descending frequency, ties broken by first occurrence.
    pub fn build<'a>(records: impl IntoIterator<Item = &'a CaptionRecord>) -> Self {
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut next = 0usize;
        for record in records.into_iter().filter(|r| r.split == Some(Split::Train)) {
            for tok in tokenize(&record.nepali) {
                let entry = counts.entry(tok).or_insert_with(|| {
                    next += 1;
                    (0, next)
                });
                entry.0 += 1;
            }
        }
        let mut ordered: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
        ordered.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        Self::from_tokens(ordered.into_iter().map(|(t, _)| t.to_string()))
            .expect("corpus tokens never collide with specials")
    }

    /// Builds from words in index order; the specials are prepended.
    pub fn from_tokens(words: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut index_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        index_to_token.extend(words);
        let mut token_to_index = HashMap::with_capacity(index_to_token.len());
        for (i, tok) in index_to_token.iter().enumerate() {
            if token_to_index.insert(tok.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        Ok(Self {
            index_to_token,
            token_to_index,
        })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == SPECIALS.len()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn index_or_unk(&self, token: &str) -> usize {
        self.index(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.index_to_token.get(id).map(String::as_str)
    }

    /// Non-special words in index order.
    pub fn words(&self) -> &[String] {
        &self.index_to_token[SPECIALS.len()..]
    }

    /// SHA-256 over the tokens in index order; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for tok in &self.index_to_token {
            hasher.update(tok.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// One token per line, specials included, index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.index_to_token.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < SPECIALS.len() || lines[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Config(format!(
                "{}: vocabulary must start with {}",
                path.display(),
                SPECIALS.join(" ")
            )));
        }
        Self::from_tokens(lines[SPECIALS.len()..].iter().map(|s| s.to_string()))
    }
}

/// Fixed-length id sequence: `[bos, content.., eos, pad..]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// Number of non-pad ids (content + bos + eos).
    pub raw_length: usize,
}

/// Encodes to `max_len + 1` ids. Content beyond `max_len - 1` tokens is
/// truncated; unknown words map to `<unk>`.
pub fn encode_caption(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    assert!(max_len >= 2, "max_len must leave room for bos and eos");
    let mut ids = Vec::with_capacity(max_len + 1);
    ids.push(BOS);
    ids.extend(
        tokenize(text)
            .into_iter()
            .take(max_len - 1)
            .map(|t| vocab.index_or_unk(t)),
    );
    ids.push(EOS);
    let raw_length = ids.len();
    ids.resize(max_len + 1, PAD);
    TokenSequence { ids, raw_length }
}

/// Drops pad/bos/eos and joins the rest with single spaces.
pub fn decode_ids(ids: &[usize], vocab: &Vocabulary) -> Result<String> {
    let mut words = Vec::new();
    for &id in ids {
        let tok = vocab.token(id).ok_or(Error::InvalidId {
            id,
            size: vocab.len(),
        })?;
        if !matches!(id, PAD | BOS | EOS) {
            words.push(tok);
        }
    }
    Ok(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(nepali: &str) -> CaptionRecord {
        CaptionRecord {
            video_id: "v".into(),
            english: String::new(),
            nepali: nepali.into(),
            split: Some(Split::Train),
        }
    }

    fn hand_vocab() -> Vocabulary {
        Vocabulary::build(&[train("क ख क"), train("ख क")])
    }

    #[test]
    fn empty_training_set_has_only_specials() {
        let v = Vocabulary::build(&[]);
        assert_eq!(v.len(), 4);
        assert!(v.is_empty());
    }

    #[test]
    fn orders_by_frequency() {
        // क appears 3 times, ख twice
        let v = hand_vocab();
        assert_eq!(v.len(), 6);
        let order: Vec<&str> = (0..v.len()).map(|i| v.token(i).unwrap()).collect();
        assert_eq!(order, ["<pad>", "<bos>", "<eos>", "<unk>", "क", "ख"]);
    }

    #[test]
    fn frequency_ties_break_on_first_occurrence() {
        let v = Vocabulary::build(&[train("ग ख"), train("ख ग")]);
        assert_eq!(v.words(), ["ग", "ख"]);
    }

    #[test]
    fn ignores_non_training_records() {
        let mut val = train("नयाँ");
        val.split = Some(Split::Val);
        let v = Vocabulary::build(&[train("क"), val]);
        assert_eq!(v.index("नयाँ"), None);
    }

    #[test]
    fn encodes_empty_caption() {
        let s = encode_caption("", &hand_vocab(), MAX_LEN);
        assert_eq!(s.ids, [BOS, EOS, PAD, PAD, PAD, PAD, PAD, PAD, PAD, PAD, PAD]);
        assert_eq!(s.raw_length, 2);
    }

    #[test]
    fn encodes_with_hand_vocab() {
        let v = hand_vocab();
        let s = encode_caption("क ख", &v, MAX_LEN);
        assert_eq!(s.ids, [BOS, 4, 5, EOS, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.raw_length, 4);
    }

    #[test]
    fn truncates_long_captions() {
        let v = hand_vocab();
        let text = vec!["क"; 20].join(" ");
        let s = encode_caption(&text, &v, MAX_LEN);
        assert_eq!(s.ids.len(), 11);
        assert_eq!(s.raw_length, 11);
        assert_eq!(s.ids[0], BOS);
        assert_eq!(s.ids[10], EOS);
        assert!(s.ids[1..10].iter().all(|&i| i == 4));
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let s = encode_caption("क घ", &hand_vocab(), MAX_LEN);
        assert_eq!(&s.ids[..4], [BOS, 4, UNK, EOS]);
        assert_eq!(decode_ids(&s.ids, &hand_vocab()).unwrap(), "क <unk>");
    }

    #[test]
    fn decodes() {
        let v = hand_vocab();
        assert_eq!(decode_ids(&[BOS, EOS, PAD, PAD], &v).unwrap(), "");
        let s = encode_caption("क ख", &v, MAX_LEN);
        assert_eq!(decode_ids(&s.ids, &v).unwrap(), "क ख");
        assert!(matches!(
            decode_ids(&[BOS, v.len()], &v),
            Err(Error::InvalidId { id: 6, size: 6 })
        ));
    }

    #[test]
    fn save_load_preserves_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = hand_vocab();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded, v);
        assert_eq!(loaded.fingerprint(), v.fingerprint());
    }

    #[test]
    fn fingerprint_tracks_contents() {
        let other = Vocabulary::build(&[train("क ख ख")]);
        assert_ne!(hand_vocab().fingerprint(), other.fingerprint());
    }
}
