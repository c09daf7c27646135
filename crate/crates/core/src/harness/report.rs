use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use super::grid::RunRecord;
use crate::error::{Error, Result};
use crate::frames::BackboneKind;
use crate::kv::KvDoc;
use crate::seq2seq::DecoderKind;

const BUILTIN_BASELINES: &str = include_str!("../../data/baselines.kv");

/// A published score row shown next to local runs for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub backbone: String,
    pub decoder: DecoderKind,
    pub hidden_dim: usize,
    pub bleu: [f64; 4],
    pub meteor: f64,
}

/// Parses `<backbone>.<decoder>.<hidden> = b1, b2, b3, b4, meteor` lines.
pub fn parse_baselines(text: &str) -> Result<Vec<Baseline>> {
    let doc = KvDoc::parse(text)?;
    doc.iter()
        .map(|(key, _)| {
            let bad = || Error::Config(format!("malformed baseline entry `{key}`"));
            let mut parts = key.split('.');
            let (Some(backbone), Some(decoder), Some(hidden), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad());
            };
            backbone.parse::<BackboneKind>()?;
            let scores: Vec<f64> = doc.list(key)?.ok_or_else(bad)?;
            let [b1, b2, b3, b4, meteor] = scores[..] else {
                return Err(bad());
            };
            Ok(Baseline {
                backbone: backbone.to_string(),
                decoder: decoder.parse()?,
                hidden_dim: hidden.parse().map_err(|_| bad())?,
                bleu: [b1, b2, b3, b4],
                meteor,
            })
        })
        .collect()
}

/// The published rows bundled with the crate.
pub fn default_baselines() -> Vec<Baseline> {
    parse_baselines(BUILTIN_BASELINES).expect("bundled baselines parse")
}

pub fn load_baselines(path: &Path) -> Result<Vec<Baseline>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_baselines(&text)
}

fn model_name(backbone: &str, decoder: DecoderKind) -> String {
    let title = backbone.parse::<BackboneKind>().map(|k| k.title()).unwrap_or(backbone);
    format!("{title} + {}", decoder.title())
}

struct Row {
    model: String,
    hidden: usize,
    run: String,
    bleu: [f64; 4],
    meteor: f64,
    label: String,
}

/// BLEU-4 descending, then METEOR descending, then label.
fn order(a: &Row, b: &Row) -> Ordering {
    b.bleu[3]
        .total_cmp(&a.bleu[3])
        .then(b.meteor.total_cmp(&a.meteor))
        .then_with(|| a.label.cmp(&b.label))
}

fn push_rows(out: &mut String, rows: &[Row], decimals: usize) {
    for r in rows {
        let _ = write!(out, "{:<28} {:>6} {:<14}", r.model, r.hidden, r.run);
        for s in r.bleu.iter().chain([&r.meteor]) {
            let _ = write!(out, " {:>7.*}", decimals, s);
        }
        out.push('\n');
    }
}

/// Plain-text comparison table of local runs, optionally followed by the
/// published reference rows. Output depends only on the inputs.
pub fn render_report(records: &[RunRecord], baselines: &[Baseline]) -> String {
    let mut runs: Vec<Row> = records
        .iter()
        .map(|r| Row {
            model: model_name(&r.backbone, r.decoder),
            hidden: r.hidden_dim,
            run: format!("b{} e{} s{}", r.batch_size, r.epochs, r.seed),
            bleu: r.report.bleu,
            meteor: r.report.meteor,
            label: r.label.clone(),
        })
        .collect();
    runs.sort_by(order);
    let mut refs: Vec<Row> = baselines
        .iter()
        .map(|b| Row {
            model: model_name(&b.backbone, b.decoder),
            hidden: b.hidden_dim,
            run: "reference".into(),
            bleu: b.bleu,
            meteor: b.meteor,
            label: format!("{}.{}.{}", b.backbone, b.decoder.name(), b.hidden_dim),
        })
        .collect();
    refs.sort_by(order);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>6} {:<14} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "Model", "Hidden", "Run", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR"
    );
    let _ = writeln!(out, "{}", "-".repeat(28 + 1 + 6 + 1 + 14 + 5 * 8));
    push_rows(&mut out, &runs, 2);
    if !refs.is_empty() {
        out.push('\n');
        out.push_str("Reference values (published full-scale results, not reproduced here):\n");
        push_rows(&mut out, &refs, 0);
    }
    out
}
