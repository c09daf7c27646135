//! Single-file checkpoint archive.
//!
//! Layout: magic `VIDCAPCKPT\0\0`, `u32` version, then named sections, each
//! `u32` name length, name bytes, `u64` payload length, payload. Sections:
//! `config` (key-value document), `manifest` (`name<TAB>shape<TAB>offset<TAB>len`
//! per tensor, offsets in floats), `vocab` (fingerprint hex) and `params`
//! (little-endian f32). Integers are little-endian.

use std::fs;
use std::path::Path;

use ndarray::NdFloat;

use super::config::{DecoderKind, ModelConfig, TrainConfig};
use super::model::{Params, Seq2Seq};
use super::train::EpochLoss;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::kv::KvDoc;

const MAGIC: &[u8; 12] = b"VIDCAPCKPT\0\0";
const VERSION: u32 = 1;
const INIT_SCHEME: &str = "uniform_fan_in";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub train: TrainConfig,
    pub params: Params<f32>,
    pub vocab_fingerprint: String,
    pub epoch: usize,
    pub history: Vec<EpochLoss>,
}

impl Checkpoint {
    pub fn new<F: NdFloat>(
        model: &Seq2Seq<F>,
        train: &TrainConfig,
        vocab: &Vocabulary,
        epoch: usize,
        history: Vec<EpochLoss>,
    ) -> Self {
        Self {
            config: model.config.clone(),
            train: train.clone(),
            params: model.params.cast(&model.config),
            vocab_fingerprint: vocab.fingerprint(),
            epoch,
            history,
        }
    }

    pub fn model(&self) -> Result<Seq2Seq<f32>> {
        Seq2Seq::from_params(self.config.clone(), self.params.clone())
    }

    /// Fails unless the checkpoint was trained against `vocab`.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.fingerprint();
        if found != self.vocab_fingerprint {
            return Err(Error::IncompatibleVocab {
                expected: self.vocab_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Model ready for inference with `vocab`.
    pub fn model_for(&self, vocab: &Vocabulary) -> Result<Seq2Seq<f32>> {
        self.check_vocab(vocab)?;
        self.model()
    }

    fn config_doc(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        let m = &self.config;
        doc.set("model.backbone", &m.backbone);
        doc.set("model.feature_dim", m.feature_dim);
        doc.set("model.decoder", m.decoder.name());
        doc.set("model.hidden_dim", m.hidden_dim);
        doc.set("model.vocab_size", m.vocab_size);
        doc.set("model.encoder_steps", m.encoder_steps);
        doc.set("model.decoder_steps", m.decoder_steps);
        doc.set("model.mask_pad_loss", m.mask_pad_loss);
        let t = &self.train;
        doc.set("train.optimizer", "adam");
        doc.set("train.init", INIT_SCHEME);
        doc.set("train.batch_size", t.batch_size);
        doc.set("train.epochs", t.epochs);
        doc.set("train.seed", t.seed);
        doc.set("train.learning_rate", t.learning_rate);
        doc.set("train.beta1", t.beta1);
        doc.set("train.beta2", t.beta2);
        doc.set("train.epsilon", t.epsilon);
        doc.set("train.shuffle", t.shuffle);
        doc.set("epoch", self.epoch);
        for h in &self.history {
            let val = h.val_loss.map(|v| v.to_string()).unwrap_or_default();
            doc.set(&format!("history.{}", h.epoch), format!("{},{}", h.train_loss, val));
        }
        doc
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = String::new();
        let mut payload = Vec::new();
        let mut offset = 0usize;
        for (name, tensor) in self.params.named() {
            let shape: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!("{name}\t{}\t{offset}\t{}\n", shape.join("x"), tensor.len()));
            for v in tensor.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            offset += tensor.len();
        }
        let mut out = Vec::with_capacity(payload.len() + 4096);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, body) in [
            ("config", self.config_doc().to_string().into_bytes()),
            ("manifest", manifest.into_bytes()),
            ("vocab", self.vocab_fingerprint.clone().into_bytes()),
            ("params", payload),
        ] {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(body.len() as u64).to_le_bytes());
            out.extend_from_slice(&body);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let sections = read_sections(bytes)?;
        let section = |name: &str| {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| *b)
                .ok_or_else(|| Error::Config(format!("checkpoint has no `{name}` section")))
        };
        let text = |name: &str| -> Result<String> {
            String::from_utf8(section(name)?.to_vec())
                .map_err(|_| Error::Config(format!("checkpoint section `{name}` is not UTF-8")))
        };
        let doc = KvDoc::parse(&text("config")?)?;
        let config = ModelConfig {
            backbone: doc.require("model.backbone")?.to_string(),
            feature_dim: doc.require_value("model.feature_dim")?,
            decoder: doc.require_value::<DecoderKind>("model.decoder")?,
            hidden_dim: doc.require_value("model.hidden_dim")?,
            vocab_size: doc.require_value("model.vocab_size")?,
            encoder_steps: doc.require_value("model.encoder_steps")?,
            decoder_steps: doc.require_value("model.decoder_steps")?,
            mask_pad_loss: doc.require_value("model.mask_pad_loss")?,
        };
        config.validate()?;
        let init = doc.require("train.init")?;
        if init != INIT_SCHEME {
            return Err(Error::Config(format!("unknown initialization scheme `{init}`")));
        }
        let train = TrainConfig {
            batch_size: doc.require_value("train.batch_size")?,
            epochs: doc.require_value("train.epochs")?,
            seed: doc.require_value("train.seed")?,
            learning_rate: doc.require_value("train.learning_rate")?,
            beta1: doc.require_value("train.beta1")?,
            beta2: doc.require_value("train.beta2")?,
            epsilon: doc.require_value("train.epsilon")?,
            shuffle: doc.require_value("train.shuffle")?,
        };
        let epoch = doc.require_value("epoch")?;
        let mut history = Vec::new();
        for (key, value) in doc.iter() {
            let Some(n) = key.strip_prefix("history.") else { continue };
            let bad = || Error::Config(format!("malformed history entry `{key} = {value}`"));
            let epoch: usize = n.parse().map_err(|_| bad())?;
            let (train_loss, val_loss) = value.split_once(',').ok_or_else(bad)?;
            history.push(EpochLoss {
                epoch,
                train_loss: train_loss.parse().map_err(|_| bad())?,
                val_loss: match val_loss {
                    "" => None,
                    v => Some(v.parse().map_err(|_| bad())?),
                },
            });
        }
        history.sort_by_key(|h| h.epoch);

        let manifest = text("manifest")?;
        let payload = section("params")?;
        if payload.len() % 4 != 0 {
            return Err(Error::Config("parameter payload is not a whole number of floats".into()));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut params = Params::<f32>::zeros(&config);
        let mut entries = manifest.lines();
        for (name, mut tensor) in params.named_mut() {
            let line = entries
                .next()
                .ok_or_else(|| Error::Config(format!("manifest lacks tensor {name}")))?;
            let fields: Vec<&str> = line.split('\t').collect();
            let [entry_name, shape, offset, len] = fields[..] else {
                return Err(Error::Config(format!("malformed manifest line `{line}`")));
            };
            let want: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
            if entry_name != name || shape != want.join("x") {
                return Err(Error::Config(format!(
                    "tensor {entry_name} with shape {shape} does not fit config (expected {name} {})",
                    want.join("x")
                )));
            }
            let bad = || Error::Config(format!("malformed manifest line `{line}`"));
            let offset: usize = offset.parse().map_err(|_| bad())?;
            let len: usize = len.parse().map_err(|_| bad())?;
            let src = floats.get(offset..offset + len).filter(|_| len == tensor.len()).ok_or_else(bad)?;
            tensor.iter_mut().zip(src).for_each(|(d, &s)| *d = s);
        }
        if entries.next().is_some() {
            return Err(Error::Config("manifest lists more tensors than the config implies".into()));
        }
        Ok(Self {
            config,
            train,
            params,
            vocab_fingerprint: text("vocab")?.trim().to_string(),
            epoch,
            history,
        })
    }
}

fn read_sections(bytes: &[u8]) -> Result<Vec<(String, &[u8])>> {
    let short = || Error::Config("truncated checkpoint".into());
    if bytes.len() < 16 || &bytes[..12] != MAGIC {
        return Err(Error::Config("not a checkpoint archive".into()));
    }
    let version = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Config(format!("unsupported checkpoint version {version}")));
    }
    let mut pos = 16;
    let mut take = |n: usize| -> Result<&[u8]> {
        let slice = bytes.get(pos..pos + n).ok_or_else(short)?;
        pos += n;
        Ok(slice)
    };
    let mut sections = Vec::new();
    while let Ok(head) = take(4) {
        let name_len = u32::from_le_bytes(head.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec()).map_err(|_| short())?;
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        sections.push((name, take(len)?));
    }
    Ok(sections)
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, checkpoint.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
