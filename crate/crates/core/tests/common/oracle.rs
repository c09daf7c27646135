//! Straightforward re-derivations of the metric formulas, written for
//! clarity rather than speed.

pub type Item = (Vec<String>, Vec<Vec<String>>);

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count(list: &[Vec<String>], gram: &[String]) -> usize {
    list.iter().filter(|g| g.as_slice() == gram).count()
}

/// Corpus BLEU-1..n_max on the 0–1 scale.
pub fn bleu(items: &[Item], n_max: usize) -> Vec<f64> {
    let mut c = 0usize;
    let mut r = 0usize;
    for (cand, refs) in items {
        c += cand.len();
        let mut best = refs[0].len();
        for rf in refs {
            let d = rf.len().abs_diff(cand.len());
            let bd = best.abs_diff(cand.len());
            if d < bd || (d == bd && rf.len() < best) {
                best = rf.len();
            }
        }
        r += best;
    }
    let mut precisions = Vec::new();
    for n in 1..=n_max {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, refs) in items {
            let cg = grams(cand, n);
            total += cg.len();
            let mut seen: Vec<Vec<String>> = Vec::new();
            for g in &cg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                let max_ref = refs.iter().map(|rf| count(&grams(rf, n), g)).max().unwrap_or(0);
                matched += count(&cg, g).min(max_ref);
            }
        }
        precisions.push(if total == 0 {
            None
        } else if matched == 0 {
            Some(1.0 / (2.0 * total as f64))
        } else {
            Some(matched as f64 / total as f64)
        });
    }
    let bp = if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    (1..=n_max)
        .map(|n| {
            let used: Vec<f64> = precisions[..n].iter().flatten().copied().collect();
            if used.is_empty() || c == 0 {
                return 0.0;
            }
            let product: f64 = used.iter().product();
            bp * product.powf(1.0 / used.len() as f64)
        })
        .collect()
}

/// Every maximal-size exact alignment, as (matches, chunks) pairs.
fn alignments(cand: &[String], refr: &[String]) -> Vec<(usize, usize)> {
    fn walk(cand: &[String], refr: &[String], i: usize, used: &mut Vec<bool>, map: &mut Vec<Option<usize>>, out: &mut Vec<(usize, usize)>) {
        if i == cand.len() {
            let pairs: Vec<(usize, usize)> = map.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
            let mut chunks = 0;
            for k in 0..pairs.len() {
                if k == 0 || !(pairs[k].0 == pairs[k - 1].0 + 1 && pairs[k].1 == pairs[k - 1].1 + 1) {
                    chunks += 1;
                }
            }
            out.push((pairs.len(), chunks));
            return;
        }
        map.push(None);
        walk(cand, refr, i + 1, used, map, out);
        map.pop();
        for j in 0..refr.len() {
            if !used[j] && refr[j] == cand[i] {
                used[j] = true;
                map.push(Some(j));
                walk(cand, refr, i + 1, used, map, out);
                map.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    walk(cand, refr, 0, &mut vec![false; refr.len()], &mut Vec::new(), &mut out);
    out
}

/// Exact-match METEOR of one pair on the 0–1 scale, by exhaustive search.
pub fn meteor_pair(cand: &[String], refr: &[String]) -> f64 {
    let all = alignments(cand, refr);
    let m = all.iter().map(|a| a.0).max().unwrap_or(0);
    if m == 0 {
        return 0.0;
    }
    let chunks = all.iter().filter(|a| a.0 == m).map(|a| a.1).min().unwrap();
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / refr.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}
