//! Frame sampling, resizing and per-frame feature extraction.

mod backbone;
mod cache;

use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;
use ndarray::{s, Array2, Array4};

use crate::error::{Error, Result};
use crate::exec::Exec;

pub use backbone::{
    backbone, Backbone, BackboneKind, PluginBackbone, Preprocess, SyntheticBackbone,
};
pub use cache::{
    cache_path, import_raw_features, load_features, save_features, DiskFeatureStore, FeatureStore,
    MemoryFeatureStore,
};

/// Frames sampled per video (encoder time steps).
pub const FRAMES_PER_VIDEO: usize = 30;
/// Square side of every sampled frame.
pub const FRAME_SIZE: usize = 224;

/// `(30, 224, 224, 3)` RGB frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub video_id: String,
    frames: Array4<u8>,
}

impl FrameStack {
    pub fn new(video_id: impl Into<String>, frames: Array4<u8>) -> Result<Self> {
        let video_id = video_id.into();
        let expect = [FRAMES_PER_VIDEO, FRAME_SIZE, FRAME_SIZE, 3];
        for (axis, (&found, expected)) in ["frames", "height", "width", "channels"]
            .into_iter()
            .zip(frames.shape().iter().zip(expect))
        {
            if found != expected {
                return Err(Error::Shape {
                    axis,
                    expected,
                    found,
                });
            }
        }
        Ok(Self { video_id, frames })
    }

    pub fn frames(&self) -> &Array4<u8> {
        &self.frames
    }

    /// Row-major `224 * 224 * 3` bytes of frame `i`.
    pub fn frame_bytes(&self, i: usize) -> Vec<u8> {
        self.frames.slice(s![i, .., .., ..]).iter().copied().collect()
    }
}

/// `(30, D)` features of one video for one backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub video_id: String,
    pub backbone: String,
    pub features: Array2<f32>,
}

impl FeatureTensor {
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Endpoint-inclusive rounded linspace over `[0, total_frames - 1]`.
/// Short videos repeat frames.
pub fn sample_frame_indices(total_frames: usize, k: usize) -> Result<Vec<usize>> {
    if total_frames == 0 {
        return Err(Error::EmptyVideo {
            video_id: String::new(),
        });
    }
    if k <= 1 {
        return Ok(vec![0; k]);
    }
    let span = total_frames - 1;
    let steps = k - 1;
    // round(i * span / steps), halves rounded up, in integer arithmetic
    Ok((0..k).map(|i| (2 * i * span + steps) / (2 * steps)).collect())
}

/// Random access to the decoded frames of one video.
pub trait FrameSource {
    fn video_id(&self) -> &str;
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<RgbImage>;
}

/// Frames held in memory.
#[derive(Debug, Clone)]
pub struct MemoryFrames {
    pub video_id: String,
    pub frames: Vec<RgbImage>,
}

impl FrameSource for MemoryFrames {
    fn video_id(&self) -> &str {
        &self.video_id
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<RgbImage> {
        self.frames.get(index).cloned().ok_or_else(|| Error::Decode {
            video_id: self.video_id.clone(),
            reason: format!("frame {index} out of range ({} frames)", self.frames.len()),
        })
    }
}

/// A directory of pre-decoded frame images (`.png`, `.jpg`, `.jpeg`) in
/// file-name order, e.g. the output of `ffmpeg -i clip.avi dir/%05d.png`.
#[derive(Debug, Clone)]
pub struct ImageSequence {
    video_id: String,
    files: Vec<PathBuf>,
}

impl ImageSequence {
    pub fn open(video_id: impl Into<String>, dir: &Path) -> Result<Self> {
        let video_id = video_id.into();
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::Decode {
                video_id: video_id.clone(),
                reason: format!("{}: {e}", dir.display()),
            })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            })
            .collect();
        files.sort();
        Ok(Self { video_id, files })
    }

    /// One sequence per sub-directory of `root`, named by the sub-directory.
    pub fn discover(root: &Path) -> Result<Vec<Self>> {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(|e| Error::io(root, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        dirs.iter()
            .map(|d| {
                let id = d.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                Self::open(id, d)
            })
            .collect()
    }
}

impl FrameSource for ImageSequence {
    fn video_id(&self) -> &str {
        &self.video_id
    }

    fn frame_count(&self) -> usize {
        self.files.len()
    }

    fn frame(&self, index: usize) -> Result<RgbImage> {
        let path = self.files.get(index).ok_or_else(|| Error::Decode {
            video_id: self.video_id.clone(),
            reason: format!("frame {index} out of range ({} frames)", self.files.len()),
        })?;
        image::open(path)
            .map(|img| img.to_rgb8())
            .map_err(|e| Error::Decode {
                video_id: self.video_id.clone(),
                reason: format!("frame {index} ({}): {e}", path.display()),
            })
    }
}

fn resize_frame(img: &RgbImage) -> RgbImage {
    let side = FRAME_SIZE as u32;
    if img.dimensions() == (side, side) {
        img.clone()
    } else {
        imageops::resize(img, side, side, FilterType::Triangle)
    }
}

/// Reads the frames at `indices` and resizes each to 224×224 (bilinear).
pub fn extract_frames(source: &dyn FrameSource, indices: &[usize]) -> Result<FrameStack> {
    let mut frames = Array4::<u8>::zeros((indices.len(), FRAME_SIZE, FRAME_SIZE, 3));
    for (slot, &index) in indices.iter().enumerate() {
        let img = resize_frame(&source.frame(index)?);
        let raw = ndarray::ArrayView3::from_shape((FRAME_SIZE, FRAME_SIZE, 3), img.as_raw())
            .expect("resized frame is 224x224x3");
        frames.slice_mut(s![slot, .., .., ..]).assign(&raw);
    }
    FrameStack::new(source.video_id(), frames)
}

/// Samples 30 evenly spaced frames and extracts them.
pub fn sample_video(source: &dyn FrameSource) -> Result<FrameStack> {
    let indices = sample_frame_indices(source.frame_count(), FRAMES_PER_VIDEO).map_err(|_| {
        Error::EmptyVideo {
            video_id: source.video_id().to_string(),
        }
    })?;
    extract_frames(source, &indices)
}

/// Runs the backbone and checks the `(30, dim)` shape and finiteness.
pub fn extract_features(stack: &FrameStack, backbone: &dyn Backbone) -> Result<FeatureTensor> {
    let features = backbone.apply(stack)?;
    if features.nrows() != FRAMES_PER_VIDEO {
        return Err(Error::Shape {
            axis: "feature rows",
            expected: FRAMES_PER_VIDEO,
            found: features.nrows(),
        });
    }
    if features.ncols() != backbone.dim() {
        return Err(Error::Shape {
            axis: "feature dim",
            expected: backbone.dim(),
            found: features.ncols(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::BackboneUnavailable {
            name: backbone.name().to_string(),
            reason: format!("non-finite features for {}", stack.video_id),
        });
    }
    Ok(FeatureTensor {
        video_id: stack.video_id.clone(),
        backbone: backbone.name().to_string(),
        features,
    })
}

/// Looks the backbone up by registry name, then extracts.
pub fn extract_features_named(stack: &FrameStack, name: &str) -> Result<FeatureTensor> {
    extract_features(stack, backbone(name)?.as_ref())
}

/// Sample → extract → cache for many videos; one result per source, in order.
pub fn cache_videos<S>(
    sources: &[S],
    backbone: &dyn Backbone,
    cache_dir: &Path,
    exec: Exec,
) -> Vec<Result<PathBuf>>
where
    S: FrameSource + Sync,
{
    exec.map(sources, |source| {
        let stack = sample_video(source)?;
        let tensor = extract_features(&stack, backbone)?;
        save_features(&tensor, cache_dir)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn oracle(total: usize, k: usize) -> Vec<usize> {
        (0..k)
            .map(|i| (i as f64 * (total as f64 - 1.0) / (k as f64 - 1.0)).round() as usize)
            .collect()
    }

    #[test]
    fn identity_spacing() {
        assert_eq!(sample_frame_indices(30, 30).unwrap(), (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn single_frame_repeats() {
        assert_eq!(sample_frame_indices(1, 30).unwrap(), vec![0; 30]);
    }

    #[test]
    fn fifty_nine_frames_take_every_other() {
        let got = sample_frame_indices(59, 30).unwrap();
        assert_eq!(got, (0..30).map(|i| 2 * i).collect::<Vec<_>>());
        assert_eq!(got, oracle(59, 30));
    }

    #[test]
    fn short_videos_repeat_monotonically() {
        let got = sample_frame_indices(7, 30).unwrap();
        assert_eq!(got, oracle(7, 30));
        assert!(got.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((got[0], got[29]), (0, 6));
    }

    #[test]
    fn empty_video_is_rejected() {
        assert!(matches!(sample_frame_indices(0, 30), Err(Error::EmptyVideo { .. })));
    }

    fn solid(w: u32, h: u32, rgb: [u8; 3]) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb(rgb))
    }

    #[test]
    fn single_solid_frame_fills_the_stack() {
        let src = MemoryFrames {
            video_id: "solid".into(),
            frames: vec![solid(64, 48, [10, 200, 30])],
        };
        let stack = sample_video(&src).unwrap();
        assert_eq!(stack.frames().shape(), [30, 224, 224, 3]);
        for px in stack.frames().exact_chunks((1, 1, 1, 3)) {
            assert_eq!(px.iter().copied().collect::<Vec<_>>(), [10, 200, 30]);
        }
    }

    #[test]
    fn native_size_frames_are_untouched() {
        let mut img = RgbImage::new(224, 224);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgb([(x % 256) as u8, (y % 256) as u8, ((x * y) % 251) as u8]);
        }
        let src = MemoryFrames {
            video_id: "grad".into(),
            frames: vec![img.clone()],
        };
        let stack = extract_frames(&src, &[0; 30]).unwrap();
        assert_eq!(stack.frame_bytes(17), img.into_raw());
    }

    #[test]
    fn follows_index_order() {
        let src = MemoryFrames {
            video_id: "v".into(),
            frames: (0..3u8).map(|c| solid(8, 8, [c, c, c])).collect(),
        };
        let mut idx = vec![2; 30];
        idx[0] = 1;
        idx[1] = 0;
        let stack = extract_frames(&src, &idx).unwrap();
        assert_eq!(stack.frames()[[0, 0, 0, 0]], 1);
        assert_eq!(stack.frames()[[1, 5, 5, 2]], 0);
        assert_eq!(stack.frames()[[29, 0, 0, 0]], 2);
    }

    #[test]
    fn unreadable_frame_names_the_video() {
        let dir = tempfile::tempdir().unwrap();
        solid(16, 16, [1, 2, 3]).save(dir.path().join("0001.png")).unwrap();
        std::fs::write(dir.path().join("0002.png"), b"\x89PNG\r\n\x1a\ntruncated").unwrap();
        let seq = ImageSequence::open("clipZ", dir.path()).unwrap();
        assert_eq!(seq.frame_count(), 2);
        let err = sample_video(&seq).unwrap_err();
        assert!(matches!(err, Error::Decode { ref video_id, .. } if video_id == "clipZ"), "{err}");
    }

    #[test]
    fn frame_stack_rejects_wrong_shape() {
        let err = FrameStack::new("v", Array4::zeros((29, 224, 224, 3))).unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "frames", expected: 30, found: 29 }));
    }
}
