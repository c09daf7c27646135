#![allow(dead_code)]

pub mod oracle;

use rand::Rng;

use std::path::Path;

use image::{Rgb, RgbImage};
use vidcap::corpus::{CaptionRecord, Split, Vocabulary};
use vidcap::frames::{extract_features, sample_video, MemoryFeatureStore, MemoryFrames, SyntheticBackbone};

const WORDS: [&str; 24] = [
    "केटा", "केटी", "मान्छे", "बिरालो", "कुकुर", "घोडा", "गितार", "बजाउँदै", "दौडिरहेको", "खाँदै",
    "पौडिरहेको", "नाच्दै", "छ", "एक", "सानो", "ठूलो", "रातो", "सेतो", "पानीमा", "सडकमा", "घरमा",
    "बगैंचामा", "खाना", "बल",
];

/// Eight videos with three captions each; the first two captions of a video
/// agree and the third swaps one word.
pub fn toy_records() -> Vec<CaptionRecord> {
    let mut out = Vec::new();
    for v in 0..8 {
        let base: Vec<&str> = (0..5).map(|k| WORDS[(v * 3 + k * 5) % 20]).collect();
        let mut alt = base.clone();
        alt[2] = WORDS[20 + v % 4];
        for caption in [&base, &base, &alt] {
            let mut r = CaptionRecord::new(format!("vid{v}"), "");
            r.nepali = caption.join(" ");
            r.split = Some(Split::Train);
            out.push(r);
        }
    }
    out
}

pub fn toy_vocab(records: &[CaptionRecord]) -> Vocabulary {
    Vocabulary::build(records)
}

/// Thirty distinct frames per video, each a flat color derived from the
/// video and frame index.
pub fn toy_frames(video_id: &str, seed: u8) -> MemoryFrames {
    let frames = (0..30u8)
        .map(|i| {
            let c = [seed.wrapping_mul(37), i.wrapping_mul(7), seed ^ i];
            RgbImage::from_pixel(224, 224, Rgb(c))
        })
        .collect();
    MemoryFrames {
        video_id: video_id.to_string(),
        frames,
    }
}

pub fn toy_store(records: &[CaptionRecord]) -> MemoryFeatureStore {
    let backbone = SyntheticBackbone::default();
    let mut store = MemoryFeatureStore::new("synthetic");
    let mut ids: Vec<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    ids.dedup();
    for (i, id) in ids.iter().enumerate() {
        let stack = sample_video(&toy_frames(id, i as u8 + 1)).unwrap();
        store.insert(extract_features(&stack, &backbone).unwrap());
    }
    store
}

/// Random multi-reference corpus: 1–5 items, candidates of 0–8 tokens and
/// 1–3 references of 1–8 tokens over a small alphabet.
pub fn random_corpus<R: Rng>(rng: &mut R, alphabet: usize) -> Vec<oracle::Item> {
    let sentence = |rng: &mut R, min: usize| -> Vec<String> {
        let len = rng.random_range(min..=8);
        (0..len).map(|_| format!("w{}", rng.random_range(0..alphabet))).collect()
    };
    let items = rng.random_range(1..=5);
    (0..items)
        .map(|_| {
            let cand = sentence(rng, 0);
            let refs = (0..rng.random_range(1..=3)).map(|_| sentence(rng, 1)).collect();
            (cand, refs)
        })
        .collect()
}

pub fn scored(items: &[oracle::Item]) -> vidcap::metrics::ScoredCorpus {
    vidcap::metrics::ScoredCorpus::new(
        items
            .iter()
            .map(|(c, r)| vidcap::metrics::ScoredItem::new(c.clone(), r.clone()).unwrap())
            .collect(),
    )
}

/// Ten videos of frame PNGs, English annotations and an offline translation
/// table.
pub fn write_dataset(root: &Path) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    let nepali = [
        "एक केटा गितार बजाउँदै छ",
        "एक केटी दौडिरहेको छ",
        "एक बिरालो खाँदै छ",
        "एक कुकुर पौडिरहेको छ",
        "एक मान्छे नाच्दै छ",
    ];
    let english = ["a boy is playing a guitar", "a girl is running", "a cat is eating", "a dog is swimming", "a man is dancing"];
    let mut ann = String::new();
    let mut csv = String::from("video_id,english,nepali,split\n");
    for v in 0..10 {
        let id = format!("clip{v:02}_0_5");
        for k in 0..3 {
            let c = (v + k) % 5;
            ann.push_str(&format!("{id} {}\n", english[c]));
            csv.push_str(&format!("{id},{},{},\n", english[c], nepali[c]));
        }
        let dir = root.join("frames").join(&id);
        std::fs::create_dir_all(&dir).map_err(io)?;
        for f in 0..6u8 {
            let img = RgbImage::from_fn(32, 24, |x, y| Rgb([v as u8 * 20 + f, x as u8 * 7, y as u8 * 9]));
            img.save(dir.join(format!("{f:03}.png"))).map_err(|e| e.to_string())?;
        }
    }
    std::fs::write(root.join("annotations.txt"), ann).map_err(io)?;
    std::fs::write(root.join("translations.csv"), csv).map_err(io)
}
