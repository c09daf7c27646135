//! Teacher-forcing batches: cached video features paired with one-hot
//! caption inputs and next-token targets.
//!
//! A caption stored as `[bos, w1, .., eos, pad..]` (length `max_len + 1`)
//! becomes decoder input `ids[0..max_len]` and target `ids[1..max_len + 1]`,
//! so the target at step `t` is the input at step `t + 1`.

use std::collections::HashMap;

use ndarray::{s, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{encode_caption, CaptionRecord, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::frames::FeatureStore;

/// One caption of one video.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pair {
    pub video_id: String,
    pub sequence: TokenSequence,
}

/// One pair per caption, ordered by video id and then by the caption's
/// position in `records`. Every referenced video must have features.
pub fn make_pairs(
    records: &[CaptionRecord],
    vocab: &Vocabulary,
    store: &dyn FeatureStore,
    max_len: usize,
) -> Result<Vec<Pair>> {
    let mut missing: Vec<String> = records
        .iter()
        .map(|r| r.video_id.as_str())
        .filter(|id| !store.contains(id))
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingFeatures(missing));
    }
    let mut pairs: Vec<Pair> = records
        .iter()
        .map(|r| Pair {
            video_id: r.video_id.clone(),
            sequence: encode_caption(&r.nepali, vocab, max_len),
        })
        .collect();
    // stable: captions of one video keep their input order
    pairs.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(pairs)
}

/// `(len(ids), vocab_size)` one-hot rows.
pub fn one_hot(ids: &[usize], vocab_size: usize) -> Result<Array2<f32>> {
    let mut out = Array2::zeros((ids.len(), vocab_size));
    for (t, &id) in ids.iter().enumerate() {
        if id >= vocab_size {
            return Err(Error::InvalidId {
                id,
                size: vocab_size,
            });
        }
        out[[t, id]] = 1.0;
    }
    Ok(out)
}

/// A training batch. Token ids are carried as integers; the one-hot views
/// are materialized on demand and are what the model contract describes.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub video_ids: Vec<String>,
    /// `(B, 30, D)`
    pub encoder_input: Array3<f32>,
    /// `(B, max_len)` ids of the decoder input (starts with bos).
    pub input_ids: Array2<usize>,
    /// `(B, max_len)` ids of the decoder target (input shifted by one).
    pub target_ids: Array2<usize>,
    pub vocab_size: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.video_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.video_ids.is_empty()
    }

    fn expand(&self, ids: &Array2<usize>) -> Array3<f32> {
        let (b, t) = ids.dim();
        let mut out = Array3::zeros((b, t, self.vocab_size));
        for ((i, j), &id) in ids.indexed_iter() {
            out[[i, j, id]] = 1.0;
        }
        out
    }

    /// `(B, max_len, V)` one-hot decoder input.
    pub fn decoder_input(&self) -> Array3<f32> {
        self.expand(&self.input_ids)
    }

    /// `(B, max_len, V)` one-hot decoder target.
    pub fn decoder_target(&self) -> Array3<f32> {
        self.expand(&self.target_ids)
    }
}

/// Epoch-wise batch producer over a fixed list of pairs. Features are read
/// from the store per batch, so only one batch of features is resident.
pub struct BatchSource<'a> {
    pairs: &'a [Pair],
    store: &'a dyn FeatureStore,
    vocab_size: usize,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
}

impl<'a> BatchSource<'a> {
    pub fn new(
        pairs: &'a [Pair],
        vocab_size: usize,
        store: &'a dyn FeatureStore,
        batch_size: usize,
        seed: u64,
        shuffle: bool,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for p in pairs {
            if let Some(&bad) = p.sequence.ids.iter().find(|&&id| id >= vocab_size) {
                return Err(Error::InvalidId {
                    id: bad,
                    size: vocab_size,
                });
            }
        }
        Ok(Self {
            pairs,
            store,
            vocab_size,
            batch_size,
            seed,
            shuffle,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Pair visiting order for `epoch`: identity, or a permutation drawn
    /// from ChaCha8 seeded by `seed` on stream `epoch`.
    pub fn order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        if self.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
        }
        order
    }

    pub fn epoch(&self, epoch: usize) -> Batches<'_> {
        Batches {
            source: self,
            order: self.order(epoch),
            pos: 0,
        }
    }

    fn assemble(&self, members: &[usize]) -> Result<Batch> {
        let mut cache: HashMap<&str, ndarray::Array2<f32>> = HashMap::new();
        let mut dims: Option<(usize, usize)> = None;
        for &i in members {
            let id = self.pairs[i].video_id.as_str();
            if cache.contains_key(id) {
                continue;
            }
            let features = self.store.load(id)?.features;
            match dims {
                None => dims = Some(features.dim()),
                Some((_, d)) if d != features.ncols() => {
                    return Err(Error::Shape {
                        axis: "feature dim",
                        expected: d,
                        found: features.ncols(),
                    })
                }
                Some((t, _)) if t != features.nrows() => {
                    return Err(Error::Shape {
                        axis: "feature rows",
                        expected: t,
                        found: features.nrows(),
                    })
                }
                _ => {}
            }
            cache.insert(id, features);
        }
        let (frames, dim) = dims.unwrap_or((0, 0));
        let steps = self.pairs[members[0]].sequence.ids.len() - 1;
        let b = members.len();
        let mut encoder_input = Array3::zeros((b, frames, dim));
        let mut input_ids = Array2::zeros((b, steps));
        let mut target_ids = Array2::zeros((b, steps));
        let mut video_ids = Vec::with_capacity(b);
        for (row, &i) in members.iter().enumerate() {
            let pair = &self.pairs[i];
            encoder_input
                .slice_mut(s![row, .., ..])
                .assign(&cache[pair.video_id.as_str()]);
            let ids = &pair.sequence.ids;
            for t in 0..steps {
                input_ids[[row, t]] = ids[t];
                target_ids[[row, t]] = ids[t + 1];
            }
            video_ids.push(pair.video_id.clone());
        }
        Ok(Batch {
            video_ids,
            encoder_input,
            input_ids,
            target_ids,
            vocab_size: self.vocab_size,
        })
    }
}

pub struct Batches<'a> {
    source: &'a BatchSource<'a>,
    order: Vec<usize>,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.source.batch_size).min(self.order.len());
        let members = &self.order[self.pos..end];
        self.pos = end;
        Some(self.source.assemble(members))
    }
}
