use ndarray::{ArrayView1, ArrayView2, NdFloat};

use super::model::Seq2Seq;
use crate::corpus::{decode_ids, Vocabulary, BOS, EOS, MAX_LEN};
use crate::error::Result;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<F: NdFloat>(row: ArrayView1<F>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Token ids emitted by greedy decoding, without `<bos>`/`<eos>`.
pub fn greedy_ids<F: NdFloat>(model: &Seq2Seq<F>, features: ArrayView2<F>, max_steps: usize) -> Result<Vec<usize>> {
    let state = model.encode(features)?;
    let mut prefix = vec![BOS];
    let mut emitted = Vec::new();
    for _ in 0..max_steps.saturating_sub(1) {
        let probs = model.next_token_probs(&state, &prefix)?;
        let id = argmax(probs.view());
        if id == EOS {
            break;
        }
        emitted.push(id);
        prefix.push(id);
    }
    Ok(emitted)
}

/// Greedy caption for one video's `(30, D)` feature matrix.
pub fn greedy_decode<F: NdFloat>(
    model: &Seq2Seq<F>,
    features: ArrayView2<F>,
    vocab: &Vocabulary,
    max_steps: usize,
) -> Result<String> {
    decode_ids(&greedy_ids(model, features, max_steps)?, vocab)
}

/// [`greedy_decode`] with the default step budget.
pub fn caption<F: NdFloat>(model: &Seq2Seq<F>, features: ArrayView2<F>, vocab: &Vocabulary) -> Result<String> {
    greedy_decode(model, features, vocab, MAX_LEN)
}
