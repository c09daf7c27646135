use std::collections::HashMap;

use super::ScoredCorpus;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Clipped match count and candidate n-gram total for one item and order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NgramStats {
    pub matches: usize,
    pub total: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Per-order statistics of one candidate against its references: each
/// candidate n-gram count is clipped at its largest count in any single
/// reference.
pub fn item_stats(candidate: &[String], references: &[Vec<String>], n_max: usize) -> Vec<NgramStats> {
    (1..=n_max)
        .map(|n| {
            let cand = ngram_counts(candidate, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in references {
                for (gram, c) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(c);
                }
            }
            let matches = cand
                .iter()
                .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
                .sum();
            NgramStats {
                matches,
                total: candidate.len().saturating_sub(n - 1),
            }
        })
        .collect()
}

/// Length of the reference closest to `candidate_len`; ties go to the
/// shorter reference.
pub fn closest_ref_len(candidate_len: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(candidate_len), len))
        .unwrap_or(0)
}

/// Corpus BLEU-1..`n_max` on the 0–100 scale.
///
/// For order `n`, precision is the summed clipped matches over the summed
/// candidate n-grams; an order with no matches uses `1 / (2 * total)`
/// instead. BLEU-n is the brevity penalty times the geometric mean of the
/// precisions of orders `1..=n`. Orders for which the corpus has no
/// candidate n-grams at all carry no information and are left out of the
/// mean; a corpus of empty candidates scores 0.
pub fn bleu(corpus: &ScoredCorpus, n_max: usize, exec: Exec) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let per_item = exec.map(corpus.items(), |item| {
        (
            item_stats(&item.candidate, &item.references, n_max),
            item.candidate.len(),
            closest_ref_len(item.candidate.len(), &item.references),
        )
    });
    let mut sums = vec![NgramStats::default(); n_max];
    let (mut c, mut r) = (0usize, 0usize);
    for (stats, cand_len, ref_len) in &per_item {
        for (acc, s) in sums.iter_mut().zip(stats) {
            acc.matches += s.matches;
            acc.total += s.total;
        }
        c += cand_len;
        r += ref_len;
    }
    Ok(bleu_from_stats(&sums, c, r))
}

/// BLEU-1..n from corpus totals; see [`bleu`].
pub fn bleu_from_stats(sums: &[NgramStats], cand_len: usize, ref_len: usize) -> Vec<f64> {
    if cand_len == 0 {
        return vec![0.0; sums.len()];
    }
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    sums.iter()
        .map(|s| {
            if s.total > 0 {
                let p = if s.matches == 0 {
                    1.0 / (2.0 * s.total as f64)
                } else {
                    s.matches as f64 / s.total as f64
                };
                log_sum += p.ln();
                orders += 1;
            }
            100.0 * bp * (log_sum / orders as f64).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{toks, ScoredItem};

    fn corpus(items: &[(&str, &[&str])]) -> ScoredCorpus {
        ScoredCorpus::new(
            items
                .iter()
                .map(|(c, refs)| ScoredItem::new(toks(c), refs.iter().map(|r| toks(r)).collect()).unwrap())
                .collect(),
        )
    }

    #[test]
    fn perfect_match_is_100() {
        let c = corpus(&[("a b c d e", &["a b c d e", "x y"]), ("f g h i", &["f g h i"])]);
        for s in bleu(&c, 4, Exec::Sequential).unwrap() {
            assert!((s - 100.0).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn disjoint_unigrams_near_zero() {
        // only the smoothing term 1 / (2 * 3) is left
        let c = corpus(&[("p q r", &["a b c"])]);
        let b = bleu(&c, 4, Exec::Sequential).unwrap();
        assert!((b[0] - 100.0 / 6.0).abs() < 1e-12);
        assert!(b.iter().all(|&s| s > 0.0 && s / 100.0 < 1.0));
    }

    #[test]
    fn short_candidate_hand_computed() {
        // "a b c" vs "a b c d": p1 = p2 = p3 = 1, no 4-grams, BP = exp(1 - 4/3)
        let c = corpus(&[("a b c", &["a b c d"])]);
        let b = bleu(&c, 4, Exec::Sequential).unwrap();
        let bp = (1.0f64 - 4.0 / 3.0).exp();
        for s in &b {
            assert!((s / 100.0 - bp).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_uses_the_max_single_reference_count() {
        let stats = item_stats(&toks("the the the"), &[toks("the cat"), toks("the the")], 1);
        assert_eq!(stats[0], NgramStats { matches: 2, total: 3 });
    }

    #[test]
    fn closest_length_ties_pick_shorter() {
        assert_eq!(closest_ref_len(4, &[toks("a b c d e"), toks("a b c")]), 3);
        assert_eq!(closest_ref_len(4, &[toks("a b c d e f"), toks("a b c")]), 3);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(bleu(&ScoredCorpus::default(), 4, Exec::Sequential), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn higher_orders_can_exceed_lower_ones() {
        // Clipping caps the repeated "a" at one unigram match, while both
        // bigrams occur in some reference: p1 = 2/3 < p2 = 1.
        let c = corpus(&[("a b a", &["a b", "b a"])]);
        let b = bleu(&c, 2, Exec::Sequential).unwrap();
        assert!(b[1] > b[0], "{b:?}");
    }
}
