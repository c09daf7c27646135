use super::ScoredCorpus;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Upper bound on search nodes per alignment; far above what captions of a
/// dozen tokens need.
const NODE_BUDGET: usize = 2_000_000;

/// An exact-match alignment: `pairs[k] = (candidate index, reference index)`
/// in candidate order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
}

struct Search<'a> {
    cand: &'a [String],
    refr: &'a [String],
    /// For each candidate position: how many matches its token still needs
    /// from this position on, by token id.
    need: Vec<usize>,
    /// Remaining candidate occurrences per token id at or after the cursor.
    remaining: Vec<usize>,
    token_of_cand: Vec<usize>,
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    best: Option<Alignment>,
    nodes: usize,
}

impl Search<'_> {
    fn run(&mut self, i: usize, chunks: usize) {
        self.nodes += 1;
        if let Some(best) = &self.best {
            if chunks >= best.chunks || self.nodes > NODE_BUDGET {
                return;
            }
        }
        if i == self.cand.len() {
            self.best = Some(Alignment {
                pairs: self.current.clone(),
                chunks,
            });
            return;
        }
        let tok = self.token_of_cand[i];
        self.remaining[tok] -= 1;
        if self.need[tok] > 0 {
            let prev = self.current.last().copied();
            self.need[tok] -= 1;
            for j in 0..self.refr.len() {
                if self.used[j] || self.refr[j] != self.cand[i] {
                    continue;
                }
                let extends = prev.is_some_and(|(pi, pj)| pi + 1 == i && pj + 1 == j);
                self.used[j] = true;
                self.current.push((i, j));
                self.run(i + 1, chunks + usize::from(!extends));
                self.current.pop();
                self.used[j] = false;
            }
            self.need[tok] += 1;
        }
        // leaving position i unmatched keeps the match count maximal only if
        // later occurrences can still cover what this token needs
        if self.remaining[tok] >= self.need[tok] {
            self.run(i + 1, chunks);
        }
        self.remaining[tok] += 1;
    }
}

/// Maximum exact-match alignment with the fewest chunks; among equally good
/// alignments the one found first, matching each token to the leftmost
/// free reference position, wins.
pub fn align(candidate: &[String], reference: &[String]) -> Alignment {
    let mut vocab: Vec<&String> = candidate.iter().collect();
    vocab.sort();
    vocab.dedup();
    let id = |t: &String| vocab.binary_search(&t).expect("candidate token");
    let token_of_cand: Vec<usize> = candidate.iter().map(id).collect();
    let mut remaining = vec![0; vocab.len()];
    for &t in &token_of_cand {
        remaining[t] += 1;
    }
    let need = vocab
        .iter()
        .enumerate()
        .map(|(k, tok)| remaining[k].min(reference.iter().filter(|r| r == tok).count()))
        .collect();
    let mut search = Search {
        cand: candidate,
        refr: reference,
        need,
        remaining,
        token_of_cand,
        used: vec![false; reference.len()],
        current: Vec::new(),
        best: None,
        nodes: 0,
    };
    search.run(0, 0);
    search.best.unwrap_or(Alignment {
        pairs: Vec::new(),
        chunks: 0,
    })
}

/// Exact-match METEOR of one candidate against one reference, on 0–1.
pub fn meteor_pair(candidate: &[String], reference: &[String]) -> f64 {
    let a = align(candidate, reference);
    let m = a.pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m as f64).powi(3);
    f * (1.0 - penalty)
}

/// Best score over the references, on 0–1.
pub fn meteor_item(candidate: &[String], references: &[Vec<String>]) -> f64 {
    references
        .iter()
        .map(|r| meteor_pair(candidate, r))
        .fold(0.0, f64::max)
}

/// Corpus METEOR: mean item score, on the 0–100 scale.
pub fn meteor(corpus: &ScoredCorpus, exec: Exec) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let scores = exec.map(corpus.items(), |item| meteor_item(&item.candidate, &item.references));
    Ok(100.0 * scores.iter().sum::<f64>() / scores.len() as f64)
}
