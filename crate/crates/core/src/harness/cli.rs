//! `vidcap` command line.
//!
//! Every subcommand accepts `--config <file>` with flat `key = value` lines
//! whose keys are the long flag names with `-` replaced by `_`; flags given
//! on the command line override the file.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use super::grid::{load_records, run_grid, GridOptions, GridSpec};
use super::report::{default_baselines, load_baselines, render_report};
use crate::corpus::{
    filter_rare, load_csv, parse_annotations, records_in, save_csv, split_by_video, translate_corpus,
    CaptionRecord, CommandTranslator, Split, SplitRatios, TranslateOptions, TranslationCache, Translator,
    Vocabulary,
};
use crate::datagen::{make_pairs, BatchSource};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frames::{backbone, cache_videos, import_raw_features, save_features, DiskFeatureStore, FeatureStore, ImageSequence};
use crate::kv::KvDoc;
use crate::metrics::{caption_split, evaluate_model, read_tsv, EvalReport, ScoredCorpus};
use crate::seq2seq::{
    caption, load_checkpoint, save_checkpoint, train, Checkpoint, DecoderKind, ModelConfig, Seq2Seq, TrainConfig,
};

/// Environment variable naming the cache root (features and translations).
pub const CACHE_ENV: &str = "VIDCAP_CACHE";
const DEFAULT_CACHE: &str = ".vidcap-cache";
pub const CORPUS_FILE: &str = "corpus.csv";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Parser, Debug)]
#[command(name = "vidcap", version, about = "Nepali video captioning: corpus, features, training, evaluation")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, split, filter and build the vocabulary.
    Prepare(PrepareArgs),
    /// Fill Nepali captions through a translation command and a cache.
    Translate(TranslateArgs),
    /// Sample frames, extract features and cache them.
    Features(FeaturesArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Greedy caption for one video (or a whole split).
    Caption(CaptionArgs),
    /// Score candidates against references, or a checkpoint on a split.
    Eval(EvalArgs),
    /// Train and evaluate a grid of configurations (resumable).
    Grid(GridArgs),
    /// Render the comparison table of finished grid runs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Translated corpus CSV (`video_id,english,nepali,split`).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Raw `<video_id> <caption>` annotations, translated offline from `--translations`.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Pre-translated corpus CSV used as the offline translation source.
    #[arg(long)]
    translations: Option<PathBuf>,
    /// Output directory for `corpus.csv` and `vocab.txt`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    val_ratio: Option<f64>,
    #[arg(long)]
    test_ratio: Option<f64>,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Output corpus CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Translator command: reads English on stdin, writes Nepali to stdout.
    #[arg(long)]
    command: Option<String>,
    /// Pre-translated CSV merged into the cache before translating.
    #[arg(long)]
    translations: Option<PathBuf>,
    /// Never call the translator; cache misses are errors.
    #[arg(long)]
    offline: bool,
    /// Translation cache file (default: `<cache root>/translations.tsv`).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    min_interval_ms: Option<u64>,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// One sub-directory of frame images per video.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    /// Directory of `<video_id>.f32` files (precomputed backbone only).
    #[arg(long)]
    raw_dir: Option<PathBuf>,
    /// Feature width of the raw files.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    backbone: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory written by `prepare`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    backbone: Option<String>,
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    mask_pad_loss: Option<bool>,
    /// Final-epoch checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Best-validation-loss checkpoint path.
    #[arg(long)]
    best_out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CaptionArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    video: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Directory written by `prepare` (for the vocabulary and splits).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Caption every video of this split instead of one video.
    #[arg(long)]
    split: Option<String>,
    /// TSV output for `--split`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `video_id<TAB>caption`, one line per candidate.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// `video_id<TAB>caption`, several lines per video.
    #[arg(long)]
    references: Option<PathBuf>,
    /// Decode with this checkpoint instead of reading candidates.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    label: Option<String>,
    /// Report output (key-value document).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated lists for each grid axis.
    #[arg(long)]
    backbones: Option<String>,
    #[arg(long)]
    decoders: Option<String>,
    #[arg(long)]
    hidden_dims: Option<String>,
    #[arg(long)]
    batch_sizes: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    mask_pad_loss: Option<bool>,
    /// Grid points trained concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// Start at most this many new runs, then stop.
    #[arg(long)]
    max_runs: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid output directory.
    #[arg(long)]
    runs: Option<PathBuf>,
    /// Alternative baseline file (`backbone.decoder.hidden = b1, b2, b3, b4, meteor`).
    #[arg(long)]
    baselines: Option<PathBuf>,
    #[arg(long)]
    no_baselines: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Config file values overlaid with command-line flags.
struct Settings {
    doc: KvDoc,
}

macro_rules! settings {
    ($args:expr; $($field:ident),* $(,)?) => {{
        let overrides: Vec<(&str, Option<String>)> = vec![
            $((stringify!($field), $args.$field.as_ref().map(AsSetting::as_setting)),)*
        ];
        Settings::new($args.config.as_deref(), overrides)
    }};
}

/// Flag value as it would be written in a config file.
trait AsSetting {
    fn as_setting(&self) -> String;
}

impl AsSetting for PathBuf {
    fn as_setting(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! as_setting_via_to_string {
    ($($t:ty),*) => {
        $(impl AsSetting for $t {
            fn as_setting(&self) -> String {
                self.to_string()
            }
        })*
    };
}
as_setting_via_to_string!(String, u32, u64, usize, f64, bool);

impl Settings {
    fn new(config: Option<&Path>, overrides: Vec<(&str, Option<String>)>) -> Result<Self> {
        let mut doc = match config {
            Some(path) => {
                if !path.is_file() {
                    return Err(Error::Config(format!("config file {} not found", path.display())));
                }
                KvDoc::load(path)?
            }
            None => KvDoc::new(),
        };
        for (key, value) in overrides {
            if let Some(v) = value {
                doc.set(key, v);
            }
        }
        Ok(Self { doc })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.doc.parse_value(key)
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| {
            Error::Config(format!("`--{}` is required (or `{key}` in the config file)", key.replace('_', "-")))
        })
    }

    fn flag(&self, key: &str, set: bool) -> Result<bool> {
        Ok(set || self.or(key, false)?)
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        Ok(self.doc.list(key)?.unwrap_or(default))
    }

    fn cache_root(&self) -> Result<PathBuf> {
        if let Some(dir) = self.get::<PathBuf>("cache_dir")? {
            return Ok(dir);
        }
        Ok(std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE)))
    }

    fn feature_dir(&self) -> Result<PathBuf> {
        Ok(self.cache_root()?.join("features"))
    }
}

fn load_data(dir: &Path) -> Result<(Vec<CaptionRecord>, Vocabulary)> {
    Ok((load_csv(&dir.join(CORPUS_FILE))?, Vocabulary::load(&dir.join(VOCAB_FILE))?))
}

fn cmd_prepare(a: &PrepareArgs) -> Result<()> {
    let s = settings!(a; corpus, annotations, translations, out_dir, seed, min_count, val_ratio, test_ratio)?;
    let out_dir: PathBuf = s.require("out_dir")?;
    let records = match (s.get::<PathBuf>("corpus")?, s.get::<PathBuf>("annotations")?) {
        (Some(corpus), _) => load_csv(&corpus)?,
        (None, Some(ann)) => {
            let raw = std::fs::read_to_string(&ann).map_err(|e| Error::io(&ann, e))?;
            let cache = TranslationCache::in_memory();
            cache.seed_from(&load_csv(&s.require::<PathBuf>("translations")?)?)?;
            translate_corpus(parse_annotations(&raw)?, None, &cache, &TranslateOptions::default())?
        }
        (None, None) => return Err(Error::Config("`--corpus` or `--annotations` is required".into())),
    };
    if let Some(r) = records.iter().find(|r| r.nepali.trim().is_empty()) {
        return Err(Error::MissingTranslation {
            video_id: r.video_id.clone(),
        });
    }
    let val = s.or("val_ratio", 0.1)?;
    let test = s.or("test_ratio", 0.1)?;
    let ratios = SplitRatios {
        train: 1.0 - val - test,
        val,
        test,
    };
    let split = split_by_video(records, ratios, s.or("seed", 0)?)?;
    let filtered = filter_rare(split, s.or("min_count", 2)?);
    let vocab = Vocabulary::build(&filtered);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    save_csv(&filtered, &out_dir.join(CORPUS_FILE))?;
    vocab.save(&out_dir.join(VOCAB_FILE))?;
    let count = |split| records_in(&filtered, split).len();
    println!(
        "{} captions (train {}, val {}, test {}), vocabulary {} -> {}",
        filtered.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        vocab.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_translate(a: &TranslateArgs, exec: Exec) -> Result<()> {
    let s = settings!(a; annotations, out, command, translations, cache, cache_dir, max_retries, min_interval_ms)?;
    let ann: PathBuf = s.require("annotations")?;
    let out: PathBuf = s.require("out")?;
    let raw = std::fs::read_to_string(&ann).map_err(|e| Error::io(&ann, e))?;
    let records = parse_annotations(&raw)?;
    let cache_path = match s.get::<PathBuf>("cache")? {
        Some(p) => p,
        None => s.cache_root()?.join("translations.tsv"),
    };
    if let Some(dir) = cache_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let cache = TranslationCache::open(&cache_path)?;
    if let Some(csv) = s.get::<PathBuf>("translations")? {
        cache.seed_from(&load_csv(&csv)?)?;
    }
    let translator = match (s.flag("offline", a.offline)?, s.get::<String>("command")?) {
        (false, Some(cmd)) => Some(CommandTranslator::from_command_line(&cmd)?),
        (false, None) => return Err(Error::Config("`--command` is required unless `--offline`".into())),
        (true, _) => None,
    };
    let defaults = TranslateOptions::default();
    let opts = TranslateOptions {
        max_retries: s.or("max_retries", defaults.max_retries)?,
        min_interval: s
            .get::<u64>("min_interval_ms")?
            .map(Duration::from_millis)
            .unwrap_or(defaults.min_interval),
        exec,
        ..defaults
    };
    let translated = translate_corpus(records, translator.as_ref().map(|t| t as &dyn Translator), &cache, &opts)?;
    save_csv(&translated, &out)?;
    println!("{} captions translated -> {}", translated.len(), out.display());
    Ok(())
}

fn cmd_features(a: &FeaturesArgs, exec: Exec) -> Result<()> {
    let s = settings!(a; frames_dir, raw_dir, dim, backbone, cache_dir)?;
    let name: String = s.require("backbone")?;
    let cache_dir = s.feature_dir()?;
    if name == "precomputed" {
        let raw_dir: PathBuf = s.require("raw_dir")?;
        let dim: usize = s.require("dim")?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&raw_dir)
            .map_err(|e| Error::io(&raw_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "f32"))
            .collect();
        files.sort();
        let results = exec.map(&files, |path| {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            save_features(&import_raw_features(id, &bytes, dim)?, &cache_dir)
        });
        let n = results.into_iter().collect::<Result<Vec<_>>>()?.len();
        println!("{n} videos imported -> {}", cache_dir.join(&name).display());
        return Ok(());
    }
    let frames_dir: PathBuf = s.require("frames_dir")?;
    let model = backbone(&name)?;
    let sources = ImageSequence::discover(&frames_dir)?;
    let results = cache_videos(&sources, model.as_ref(), &cache_dir, exec);
    let n = results.into_iter().collect::<Result<Vec<_>>>()?.len();
    println!("{n} videos cached -> {}", cache_dir.join(&name).display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let s = settings!(a; data, backbone, decoder, hidden_dim, batch_size, epochs, seed, learning_rate,
        mask_pad_loss, out, best_out, cache_dir)?;
    let (records, vocab) = load_data(&s.require::<PathBuf>("data")?)?;
    let name: String = s.require("backbone")?;
    let store = DiskFeatureStore::new(s.feature_dir()?, name.clone());
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        batch_size: s.or("batch_size", defaults.batch_size)?,
        epochs: s.or("epochs", defaults.epochs)?,
        seed: s.or("seed", defaults.seed)?,
        learning_rate: s.or("learning_rate", defaults.learning_rate)?,
        ..defaults
    };
    cfg.validate()?;
    let train_records = records_in(&records, Split::Train);
    let train_pairs = make_pairs(&train_records, &vocab, &store, crate::corpus::MAX_LEN)?;
    let val_pairs = make_pairs(&records_in(&records, Split::Val), &vocab, &store, crate::corpus::MAX_LEN)?;
    let train_src = BatchSource::new(&train_pairs, vocab.len(), &store, cfg.batch_size, cfg.seed, cfg.shuffle)?;
    let val_src = BatchSource::new(&val_pairs, vocab.len(), &store, cfg.batch_size, cfg.seed, false)?;
    let first = train_records
        .first()
        .ok_or_else(|| Error::InsufficientData("no training captions".into()))?;
    let dim = store.load(&first.video_id)?.dim();
    let mut model_cfg = ModelConfig::with_feature_dim(
        &name,
        dim,
        s.or("decoder", DecoderKind::Lstm)?,
        s.or("hidden_dim", 512)?,
        vocab.len(),
    )?;
    model_cfg.mask_pad_loss = s.or("mask_pad_loss", false)?;
    let model = Seq2Seq::<f32>::new(model_cfg, cfg.seed)?;
    let outcome = train(model, &train_src, Some(&val_src), &cfg)?;
    for h in &outcome.history {
        let val = h.val_loss.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!("epoch {:>3}  train {:.4}  val {val}", h.epoch, h.train_loss);
    }
    let out: PathBuf = s.require("out")?;
    save_checkpoint(&Checkpoint::new(&outcome.last, &cfg, &vocab, cfg.epochs, outcome.history.clone()), &out)?;
    if let Some(best) = s.get::<PathBuf>("best_out")? {
        save_checkpoint(&Checkpoint::new(&outcome.best, &cfg, &vocab, outcome.best_epoch, outcome.history), &best)?;
    }
    println!("checkpoint -> {} (best epoch {})", out.display(), outcome.best_epoch);
    Ok(())
}

fn checkpoint_store(s: &Settings, ck: &Checkpoint) -> Result<DiskFeatureStore> {
    Ok(DiskFeatureStore::new(s.feature_dir()?, ck.config.backbone.clone()))
}

fn write_tsv(rows: &[(String, String)], path: &Path) -> Result<()> {
    let mut text = String::new();
    for (id, c) in rows {
        text.push_str(&format!("{id}\t{c}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_caption(a: &CaptionArgs, exec: Exec) -> Result<()> {
    let s = settings!(a; video, checkpoint, data, split, out, cache_dir)?;
    let ck = load_checkpoint(&s.require::<PathBuf>("checkpoint")?)?;
    let data: PathBuf = s.require("data")?;
    let store = checkpoint_store(&s, &ck)?;
    if let Some(split) = s.get::<Split>("split")? {
        let (records, vocab) = load_data(&data)?;
        let rows = caption_split(&ck, &vocab, &records, split, &store, exec)?;
        match s.get::<PathBuf>("out")? {
            Some(path) => write_tsv(&rows, &path)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                for (id, c) in &rows {
                    let _ = writeln!(stdout, "{id}\t{c}");
                }
            }
        }
        return Ok(());
    }
    let vocab = Vocabulary::load(&data.join(VOCAB_FILE))?;
    let video: String = s.require("video")?;
    let model = ck.model_for(&vocab)?;
    let features = store.load(&video)?.features;
    println!("{}", caption(&model, features.view(), &vocab)?);
    Ok(())
}

fn cmd_eval(a: &EvalArgs, exec: Exec) -> Result<()> {
    let s = settings!(a; candidates, references, checkpoint, data, split, label, out, cache_dir)?;
    let report = if let Some(ck_path) = s.get::<PathBuf>("checkpoint")? {
        let ck = load_checkpoint(&ck_path)?;
        let (records, vocab) = load_data(&s.require::<PathBuf>("data")?)?;
        let store = checkpoint_store(&s, &ck)?;
        let label = s.or("label", ck_path.display().to_string())?;
        evaluate_model(&ck, &vocab, &records, s.or("split", Split::Test)?, &store, &label, exec)?
    } else {
        let cands = read_tsv(&s.require::<PathBuf>("candidates")?)?;
        let refs = read_tsv(&s.require::<PathBuf>("references")?)?;
        let label = s.or("label", "candidates".to_string())?;
        EvalReport::score(&ScoredCorpus::from_tsv(&cands, &refs)?, label, exec)?
    };
    if let Some(out) = s.get::<PathBuf>("out")? {
        report.to_kv().save(&out)?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_grid(a: &GridArgs, exec: Exec) -> Result<()> {
    let s = settings!(a; data, out_dir, backbones, decoders, hidden_dims, batch_sizes, epochs, seeds,
        learning_rate, mask_pad_loss, workers, max_runs, cache_dir)?;
    let (records, vocab) = load_data(&s.require::<PathBuf>("data")?)?;
    let d = GridSpec::default();
    let spec = GridSpec {
        backbones: s.list("backbones", d.backbones)?,
        decoders: s.list("decoders", d.decoders)?,
        hidden_dims: s.list("hidden_dims", d.hidden_dims)?,
        batch_sizes: s.list("batch_sizes", d.batch_sizes)?,
        epochs: s.list("epochs", d.epochs)?,
        seeds: s.list("seeds", d.seeds)?,
        base: TrainConfig {
            learning_rate: s.or("learning_rate", d.base.learning_rate)?,
            ..d.base
        },
        mask_pad_loss: s.or("mask_pad_loss", false)?,
    };
    let feature_dir = s.feature_dir()?;
    let stores = move |name: &str| -> Result<Box<dyn FeatureStore>> {
        Ok(Box::new(DiskFeatureStore::new(feature_dir.clone(), name)))
    };
    let out_dir: PathBuf = s.require("out_dir")?;
    let opts = GridOptions {
        workers: s.or("workers", 1)?,
        max_new_runs: s.get("max_runs")?,
        exec,
    };
    let outcome = run_grid(&spec, &records, &vocab, &stores, &out_dir, &opts)?;
    for (label, msg) in &outcome.failures {
        eprintln!("run {label} failed: {msg}");
    }
    println!(
        "{} new run(s), {} of {} complete -> {}",
        outcome.new_runs,
        outcome.records.len(),
        spec.points().len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let s = settings!(a; runs, baselines, out)?;
    let records = load_records(&s.require::<PathBuf>("runs")?)?;
    let baselines = if s.flag("no_baselines", a.no_baselines)? {
        Vec::new()
    } else if let Some(path) = s.get::<PathBuf>("baselines")? {
        load_baselines(&path)?
    } else {
        default_baselines()
    };
    let table = render_report(&records, &baselines);
    if let Some(out) = s.get::<PathBuf>("out")? {
        std::fs::write(&out, &table).map_err(|e| Error::io(&out, e))?;
    }
    print!("{table}");
    Ok(())
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code: 0 on success, 2 on usage errors, 1 otherwise.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let result = match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Translate(a) => cmd_translate(a, exec),
        Command::Features(a) => cmd_features(a, exec),
        Command::Train(a) => cmd_train(a),
        Command::Caption(a) => cmd_caption(a, exec),
        Command::Eval(a) => cmd_eval(a, exec),
        Command::Grid(a) => cmd_grid(a, exec),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
