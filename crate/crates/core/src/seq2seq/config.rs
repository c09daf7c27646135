use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frames::{BackboneKind, FRAMES_PER_VIDEO};
use crate::corpus::MAX_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Lstm,
    Gru,
    BiLstm,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [DecoderKind::Lstm, DecoderKind::Gru, DecoderKind::BiLstm];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Lstm => "lstm",
            DecoderKind::Gru => "gru",
            DecoderKind::BiLstm => "bilstm",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            DecoderKind::Lstm => "LSTM",
            DecoderKind::Gru => "GRU",
            DecoderKind::BiLstm => "BiLSTM",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown decoder kind `{s}` (lstm, gru, bilstm)")))
    }
}

/// Architecture of one encoder–decoder model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Backbone registry name; fixes `feature_dim` for the CNN adapters.
    pub backbone: String,
    pub feature_dim: usize,
    pub decoder: DecoderKind,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub encoder_steps: usize,
    pub decoder_steps: usize,
    /// Exclude cells whose target is `<pad>` from the loss mean.
    pub mask_pad_loss: bool,
}

impl ModelConfig {
    /// Feature width taken from the backbone registry.
    pub fn new(backbone: &str, decoder: DecoderKind, hidden_dim: usize, vocab_size: usize) -> Result<Self> {
        let kind: BackboneKind = backbone.parse()?;
        let feature_dim = kind.dim().ok_or_else(|| {
            Error::Config(format!("backbone `{backbone}` needs an explicit feature dimension"))
        })?;
        Self::with_feature_dim(backbone, feature_dim, decoder, hidden_dim, vocab_size)
    }

    pub fn with_feature_dim(
        backbone: &str,
        feature_dim: usize,
        decoder: DecoderKind,
        hidden_dim: usize,
        vocab_size: usize,
    ) -> Result<Self> {
        let cfg = Self {
            backbone: backbone.to_string(),
            feature_dim,
            decoder,
            hidden_dim,
            vocab_size,
            encoder_steps: FRAMES_PER_VIDEO,
            decoder_steps: MAX_LEN,
            mask_pad_loss: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let kind: BackboneKind = self.backbone.parse()?;
        if let (Some(dim), false) = (kind.dim(), matches!(kind, BackboneKind::Synthetic)) {
            if dim != self.feature_dim {
                return Err(Error::Config(format!(
                    "backbone {} produces {dim} features, config says {}",
                    self.backbone, self.feature_dim
                )));
            }
        }
        if self.feature_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("feature_dim and hidden_dim must be positive".into()));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no room for words beside the 4 specials",
                self.vocab_size
            )));
        }
        if self.encoder_steps == 0 || self.decoder_steps == 0 {
            return Err(Error::Config("time steps must be positive".into()));
        }
        Ok(())
    }

    /// Width of the decoder output fed to the dense head.
    pub fn decoder_out_dim(&self) -> usize {
        match self.decoder {
            DecoderKind::BiLstm => 2 * self.hidden_dim,
            _ => self.hidden_dim,
        }
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 30,
            seed: 0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be at least 1".into()));
        }
        if !self.learning_rate.is_finite()
            || self.learning_rate <= 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !self.epsilon.is_finite()
            || self.epsilon <= 0.0
        {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}
