use std::fmt;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{FrameStack, FRAMES_PER_VIDEO, FRAME_SIZE};
use crate::error::{Error, Result};

/// Per-frame feature extractor: a CNN with its classification head removed,
/// or a stand-in. `apply` must be deterministic and callable from several
/// threads at once.
pub trait Backbone: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn apply(&self, stack: &FrameStack) -> Result<Array2<f32>>;
}

/// Registry names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackboneKind {
    EfficientNetB0,
    ResNet101,
    Vgg16,
    Synthetic,
    /// Features computed elsewhere and imported into the cache.
    Precomputed,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 5] = [
        BackboneKind::EfficientNetB0,
        BackboneKind::ResNet101,
        BackboneKind::Vgg16,
        BackboneKind::Synthetic,
        BackboneKind::Precomputed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::EfficientNetB0 => "efficientnetb0",
            BackboneKind::ResNet101 => "resnet101",
            BackboneKind::Vgg16 => "vgg16",
            BackboneKind::Synthetic => "synthetic",
            BackboneKind::Precomputed => "precomputed",
        }
    }

    /// Pooled feature width. `None` for imported features, whose width comes
    /// from the files themselves.
    pub fn dim(self) -> Option<usize> {
        match self {
            BackboneKind::EfficientNetB0 => Some(1280),
            BackboneKind::ResNet101 => Some(2048),
            BackboneKind::Vgg16 => Some(4096),
            BackboneKind::Synthetic => Some(SyntheticBackbone::DEFAULT_DIM),
            BackboneKind::Precomputed => None,
        }
    }

    /// Display name used in reports.
    pub fn title(self) -> &'static str {
        match self {
            BackboneKind::EfficientNetB0 => "EfficientNetB0",
            BackboneKind::ResNet101 => "ResNet101",
            BackboneKind::Vgg16 => "VGG16",
            BackboneKind::Synthetic => "Synthetic",
            BackboneKind::Precomputed => "Precomputed",
        }
    }

    /// Environment variable naming the plug-in command of a CNN adapter.
    pub fn plugin_env(self) -> Option<String> {
        match self {
            BackboneKind::EfficientNetB0 | BackboneKind::ResNet101 | BackboneKind::Vgg16 => {
                Some(format!("VIDCAP_BACKBONE_{}", self.name().to_ascii_uppercase()))
            }
            _ => None,
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownBackbone(s.to_string()))
    }
}

/// Resolves a registry name to a runnable backbone.
///
/// `synthetic` is always available. The CNN adapters need a plug-in command
/// in `VIDCAP_BACKBONE_<NAME>`; `precomputed` features are imported with
/// [`super::import_raw_features`] and cannot be computed from frames.
pub fn backbone(name: &str) -> Result<Box<dyn Backbone>> {
    let kind: BackboneKind = name.parse()?;
    match kind {
        BackboneKind::Synthetic => Ok(Box::new(SyntheticBackbone::default())),
        BackboneKind::Precomputed => Err(Error::BackboneUnavailable {
            name: name.to_string(),
            reason: "precomputed features are imported, not extracted".into(),
        }),
        cnn => {
            let var = cnn.plugin_env().expect("CNN kinds have a plug-in variable");
            let command = std::env::var(&var).map_err(|_| Error::BackboneUnavailable {
                name: name.to_string(),
                reason: format!("set {var} to a feature-extractor command"),
            })?;
            Ok(Box::new(PluginBackbone::new(cnn, &command)?))
        }
    }
}

/// Deterministic stand-in: each row is a ChaCha stream seeded by the SHA-256
/// of that frame's raw bytes, mapped to `[-1, 1)`. No pixel normalization.
#[derive(Debug, Clone)]
pub struct SyntheticBackbone {
    dim: usize,
}

impl SyntheticBackbone {
    pub const DEFAULT_DIM: usize = 1280;

    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }
}

impl Default for SyntheticBackbone {
    fn default() -> Self {
        Self::with_dim(Self::DEFAULT_DIM)
    }
}

impl Backbone for SyntheticBackbone {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, stack: &FrameStack) -> Result<Array2<f32>> {
        let mut out = Array2::zeros((FRAMES_PER_VIDEO, self.dim));
        for (i, mut row) in out.outer_iter_mut().enumerate() {
            let seed: [u8; 32] = Sha256::digest(stack.frame_bytes(i)).into();
            let mut rng = ChaCha8Rng::from_seed(seed);
            row.iter_mut()
                .for_each(|v| *v = rng.random_range(-1.0f32..1.0));
        }
        Ok(out)
    }
}

/// Input normalization a pretrained CNN expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocess {
    /// RGB floats in `[0, 255]`; the network rescales internally (EfficientNet).
    Raw,
    /// BGR with the ImageNet channel means subtracted (VGG16, ResNet101).
    CaffeBgr,
}

impl Preprocess {
    const CAFFE_MEAN_BGR: [f32; 3] = [103.939, 116.779, 123.68];

    pub fn for_kind(kind: BackboneKind) -> Self {
        match kind {
            BackboneKind::Vgg16 | BackboneKind::ResNet101 => Preprocess::CaffeBgr,
            _ => Preprocess::Raw,
        }
    }

    /// `(30, 224, 224, 3)` floats, row-major.
    pub fn apply(self, stack: &FrameStack) -> Vec<f32> {
        let frames = stack.frames();
        let mut out = Vec::with_capacity(frames.len());
        for px in frames.as_standard_layout().as_slice().unwrap().chunks_exact(3) {
            match self {
                Preprocess::Raw => out.extend(px.iter().map(|&v| v as f32)),
                Preprocess::CaffeBgr => {
                    let [r, g, b] = [px[0] as f32, px[1] as f32, px[2] as f32];
                    let [mb, mg, mr] = Self::CAFFE_MEAN_BGR;
                    out.extend([b - mb, g - mg, r - mr]);
                }
            }
        }
        out
    }
}

/// Delegates to an external feature extractor (e.g. a Keras script with
/// `include_top=False, pooling="avg"`).
///
/// Protocol: the command reads `30 * 224 * 224 * 3` little-endian `f32`
/// preprocessed pixels from stdin and writes `30 * dim` little-endian `f32`
/// features to stdout.
#[derive(Debug, Clone)]
pub struct PluginBackbone {
    kind: BackboneKind,
    preprocess: Preprocess,
    program: String,
    args: Vec<String>,
}

impl PluginBackbone {
    pub fn new(kind: BackboneKind, command: &str) -> Result<Self> {
        if kind.dim().is_none() {
            return Err(Error::Config(format!("{kind} has no fixed dimension")));
        }
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts.next().ok_or_else(|| Error::BackboneUnavailable {
            name: kind.name().to_string(),
            reason: "empty plug-in command".into(),
        })?;
        Ok(Self {
            kind,
            preprocess: Preprocess::for_kind(kind),
            program,
            args: parts.collect(),
        })
    }

    fn unavailable(&self, reason: impl Into<String>) -> Error {
        Error::BackboneUnavailable {
            name: self.kind.name().to_string(),
            reason: reason.into(),
        }
    }
}

impl Backbone for PluginBackbone {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn dim(&self) -> usize {
        self.kind.dim().expect("checked in new")
    }

    fn apply(&self, stack: &FrameStack) -> Result<Array2<f32>> {
        let pixels = self.preprocess.apply(stack);
        debug_assert_eq!(pixels.len(), FRAMES_PER_VIDEO * FRAME_SIZE * FRAME_SIZE * 3);
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| self.unavailable(format!("spawn {}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        // feed stdin from a helper thread so a plug-in that streams output
        // early cannot deadlock against a full pipe
        let writer = std::thread::spawn(move || {
            let bytes: Vec<u8> = pixels.iter().flat_map(|v| v.to_le_bytes()).collect();
            stdin.write_all(&bytes)
        });
        let mut raw = Vec::new();
        stdout
            .read_to_end(&mut raw)
            .map_err(|e| self.unavailable(e.to_string()))?;
        let status = child.wait().map_err(|e| self.unavailable(e.to_string()))?;
        let _ = writer.join();
        if !status.success() {
            return Err(self.unavailable(format!("plug-in exited with {status}")));
        }
        let expected = FRAMES_PER_VIDEO * self.dim() * 4;
        if raw.len() != expected {
            return Err(self.unavailable(format!(
                "plug-in wrote {} bytes, expected {expected}",
                raw.len()
            )));
        }
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Array2::from_shape_vec((FRAMES_PER_VIDEO, self.dim()), values).expect("length checked"))
    }
}
