use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::corpus::{records_in, CaptionRecord, Split, Vocabulary, MAX_LEN};
use crate::datagen::{make_pairs, BatchSource};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frames::{BackboneKind, FeatureStore};
use crate::kv::KvDoc;
use crate::metrics::{evaluate_model, EvalReport};
use crate::seq2seq::{save_checkpoint, train, Checkpoint, DecoderKind, ModelConfig, Seq2Seq, TrainConfig};

pub const RECORD_FILE: &str = "record.kv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const BEST_CHECKPOINT_FILE: &str = "best.ckpt";
pub const ERROR_FILE: &str = "error.txt";

/// Cross-product of model and training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub backbones: Vec<String>,
    pub decoders: Vec<DecoderKind>,
    pub hidden_dims: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Optimizer settings shared by every point; its batch size, epochs and
    /// seed are replaced per point.
    pub base: TrainConfig,
    pub mask_pad_loss: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            backbones: vec!["efficientnetb0".into(), "resnet101".into(), "vgg16".into()],
            decoders: vec![DecoderKind::Lstm, DecoderKind::Gru, DecoderKind::BiLstm],
            hidden_dims: vec![512, 1024],
            batch_sizes: vec![64, 128, 512],
            epochs: vec![15, 30, 60],
            seeds: vec![0],
            base: TrainConfig::default(),
            mask_pad_loss: false,
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub backbone: String,
    pub decoder: DecoderKind,
    pub hidden_dim: usize,
    pub train: TrainConfig,
    pub mask_pad_loss: bool,
}

impl GridPoint {
    pub fn label(&self) -> String {
        format!(
            "{}-{}-h{}-b{}-e{}-s{}",
            self.backbone,
            self.decoder.name(),
            self.hidden_dim,
            self.train.batch_size,
            self.train.epochs,
            self.train.seed
        )
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("backbones", self.backbones.is_empty()),
            ("decoders", self.decoders.is_empty()),
            ("hidden_dims", self.hidden_dims.is_empty()),
            ("batch_sizes", self.batch_sizes.is_empty()),
            ("epochs", self.epochs.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("grid has no {name}")));
        }
        for b in &self.backbones {
            b.parse::<BackboneKind>()?;
        }
        Ok(())
    }

    /// Points in nested order: backbone, decoder, hidden dim, batch size,
    /// epochs, seed.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for backbone in &self.backbones {
            for &decoder in &self.decoders {
                for &hidden_dim in &self.hidden_dims {
                    for &batch_size in &self.batch_sizes {
                        for &epochs in &self.epochs {
                            for &seed in &self.seeds {
                                out.push(GridPoint {
                                    backbone: backbone.clone(),
                                    decoder,
                                    hidden_dim,
                                    train: TrainConfig {
                                        batch_size,
                                        epochs,
                                        seed,
                                        ..self.base.clone()
                                    },
                                    mask_pad_loss: self.mask_pad_loss,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Outcome of one completed grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub label: String,
    pub backbone: String,
    pub decoder: DecoderKind,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub wall_time_secs: f64,
    pub report: EvalReport,
}

impl RunRecord {
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = self.report.to_kv();
        doc.set("label", &self.label);
        doc.set("backbone", &self.backbone);
        doc.set("decoder", self.decoder.name());
        doc.set("hidden_dim", self.hidden_dim);
        doc.set("batch_size", self.batch_size);
        doc.set("epochs", self.epochs);
        doc.set("seed", self.seed);
        doc.set("checkpoint", self.checkpoint.display());
        doc.set("best_epoch", self.best_epoch);
        doc.set("wall_time_secs", self.wall_time_secs);
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        Ok(Self {
            label: doc.require("label")?.to_string(),
            backbone: doc.require("backbone")?.to_string(),
            decoder: doc.require_value("decoder")?,
            hidden_dim: doc.require_value("hidden_dim")?,
            batch_size: doc.require_value("batch_size")?,
            epochs: doc.require_value("epochs")?,
            seed: doc.require_value("seed")?,
            checkpoint: PathBuf::from(doc.require("checkpoint")?),
            best_epoch: doc.require_value("best_epoch")?,
            wall_time_secs: doc.require_value("wall_time_secs")?,
            report: EvalReport::from_kv(doc)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvDoc::load(path)?)
    }
}

/// Every completed run under `out_dir`, sorted by label.
pub fn load_records(out_dir: &Path) -> Result<Vec<RunRecord>> {
    let entries = fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(out_dir, e))?.path().join(RECORD_FILE);
        if path.is_file() {
            out.push(RunRecord::load(&path)?);
        }
    }
    out.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GridOptions {
    /// Grid points trained concurrently.
    pub workers: usize,
    /// Stop after this many newly started runs (the rest stay pending).
    pub max_new_runs: Option<usize>,
    /// Execution mode for decoding and scoring inside each run.
    pub exec: Exec,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            max_new_runs: None,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// All completed runs of this grid, old and new, in grid order.
    pub records: Vec<RunRecord>,
    pub new_runs: usize,
    /// `(label, message)` of runs that failed in this invocation.
    pub failures: Vec<(String, String)>,
}

/// Feature dimension for a backbone: fixed for the CNNs, read from the
/// first cached video otherwise.
fn feature_dim(backbone: &str, store: &dyn FeatureStore, records: &[CaptionRecord]) -> Result<usize> {
    let kind: BackboneKind = backbone.parse()?;
    if let (Some(dim), false) = (kind.dim(), kind == BackboneKind::Synthetic) {
        return Ok(dim);
    }
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientData("no training records".into()))?;
    Ok(store.load(&first.video_id)?.dim())
}

/// Trains, checkpoints and evaluates one grid point inside `run_dir`.
pub fn run_point(
    point: &GridPoint,
    records: &[CaptionRecord],
    vocab: &Vocabulary,
    store: &dyn FeatureStore,
    run_dir: &Path,
    exec: Exec,
) -> Result<RunRecord> {
    let start = Instant::now();
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let train_records = records_in(records, Split::Train);
    let val_records = records_in(records, Split::Val);
    let train_pairs = make_pairs(&train_records, vocab, store, MAX_LEN)?;
    let val_pairs = make_pairs(&val_records, vocab, store, MAX_LEN)?;
    let cfg = &point.train;
    let train_source = BatchSource::new(&train_pairs, vocab.len(), store, cfg.batch_size, cfg.seed, cfg.shuffle)?;
    let val_source = BatchSource::new(&val_pairs, vocab.len(), store, cfg.batch_size, cfg.seed, false)?;

    let dim = feature_dim(&point.backbone, store, &train_records)?;
    let mut model_cfg = ModelConfig::with_feature_dim(&point.backbone, dim, point.decoder, point.hidden_dim, vocab.len())?;
    model_cfg.mask_pad_loss = point.mask_pad_loss;
    let model = Seq2Seq::<f32>::new(model_cfg, cfg.seed)?;
    let outcome = train(model, &train_source, Some(&val_source), cfg)?;

    let last = Checkpoint::new(&outcome.last, cfg, vocab, cfg.epochs, outcome.history.clone());
    let best = Checkpoint::new(&outcome.best, cfg, vocab, outcome.best_epoch, outcome.history.clone());
    let ckpt_path = run_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&last, &ckpt_path)?;
    save_checkpoint(&best, &run_dir.join(BEST_CHECKPOINT_FILE))?;

    let label = point.label();
    let report = evaluate_model(&last, vocab, records, Split::Test, store, &label, exec)?;
    let record = RunRecord {
        label,
        backbone: point.backbone.clone(),
        decoder: point.decoder,
        hidden_dim: point.hidden_dim,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        checkpoint: ckpt_path,
        best_epoch: outcome.best_epoch,
        wall_time_secs: start.elapsed().as_secs_f64(),
        report,
    };
    // the record is written last; its presence marks the run complete
    record.to_kv().save(&run_dir.join(RECORD_FILE))?;
    Ok(record)
}

/// Runs every grid point without a completed record under `out_dir`.
///
/// `stores` resolves a backbone name to its feature store. Failed points are
/// logged to `<label>/error.txt` and retried on the next call; the grid as a
/// whole fails only when runs were attempted and none has ever completed.
pub fn run_grid(
    spec: &GridSpec,
    records: &[CaptionRecord],
    vocab: &Vocabulary,
    stores: &(dyn Fn(&str) -> Result<Box<dyn FeatureStore>> + Sync),
    out_dir: &Path,
    opts: &GridOptions,
) -> Result<GridOutcome> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let points = spec.points();
    let mut pending: Vec<&GridPoint> = points
        .iter()
        .filter(|p| !out_dir.join(p.label()).join(RECORD_FILE).is_file())
        .collect();
    if let Some(cap) = opts.max_new_runs {
        pending.truncate(cap);
    }
    log::info!("grid: {} points, {} to run", points.len(), pending.len());

    let results = opts.exec.map_with_workers(&pending, opts.workers.max(1), |point| {
        let label = point.label();
        let run_dir = out_dir.join(&label);
        let result = stores(&point.backbone).and_then(|store| run_point(point, records, vocab, store.as_ref(), &run_dir, opts.exec));
        if let Err(e) = &result {
            log::warn!("run {label} failed: {e}");
            let _ = fs::create_dir_all(&run_dir);
            let _ = fs::write(run_dir.join(ERROR_FILE), format!("{e}\n"));
        } else {
            let _ = fs::remove_file(run_dir.join(ERROR_FILE));
        }
        (label, result)
    });

    let new_runs = results.len();
    let failures: Vec<(String, String)> = results
        .iter()
        .filter_map(|(label, r)| r.as_ref().err().map(|e| (label.clone(), e.to_string())))
        .collect();

    let mut completed = Vec::new();
    for p in &points {
        let path = out_dir.join(p.label()).join(RECORD_FILE);
        if path.is_file() {
            completed.push(RunRecord::load(&path)?);
        }
    }
    if new_runs > 0 && failures.len() == new_runs && completed.is_empty() {
        return Err(Error::GridFailed(new_runs));
    }
    Ok(GridOutcome {
        records: completed,
        new_runs,
        failures,
    })
}
