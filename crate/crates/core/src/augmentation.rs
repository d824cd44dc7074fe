//! Pixel transforms on RGB frame clips.
//!
//! A horizontal flip mirrors the scene, so the labels must be remapped
//! through the class flip permutation (see [`crate::taxonomy`]). Cutout
//! zeroes one square at the same position in every frame of a clip, like a
//! static occluder. Upsampling is nearest-neighbour replication.

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::taxonomy::{ClassList, NUM_CLASSES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("clip {clip_id:?}: {reason}")]
    InvalidClip { clip_id: String, reason: String },
    #[error("label vector must have {NUM_CLASSES} binary entries: {0}")]
    Labels(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// `t x h x w x 3` clip of 8-bit RGB pixels, frame-major, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameClip {
    clip_id: String,
    t: usize,
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl FrameClip {
    pub fn new(clip_id: impl Into<String>, t: usize, h: usize, w: usize, data: Vec<u8>) -> Result<Self, AugmentError> {
        let clip_id = clip_id.into();
        if t == 0 || h == 0 || w == 0 {
            return Err(AugmentError::InvalidClip {
                clip_id,
                reason: format!("dimensions must be positive, got {t}x{h}x{w}"),
            });
        }
        let expected = t
            .checked_mul(h)
            .and_then(|n| n.checked_mul(w))
            .and_then(|n| n.checked_mul(3));
        if expected != Some(data.len()) {
            return Err(AugmentError::InvalidClip {
                clip_id,
                reason: format!("buffer has {} bytes, expected {t}x{h}x{w}x3", data.len()),
            });
        }
        Ok(FrameClip { clip_id, t, h, w, data })
    }

    pub fn filled(clip_id: impl Into<String>, t: usize, h: usize, w: usize, rgb: [u8; 3]) -> Result<Self, AugmentError> {
        let data = rgb.iter().copied().cycle().take(t * h * w * 3).collect();
        FrameClip::new(clip_id, t, h, w, data)
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * 3
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    fn offset(&self, t: usize, y: usize, x: usize) -> usize {
        ((t * self.h + y) * self.w + x) * 3
    }

    pub fn pixel(&self, t: usize, y: usize, x: usize) -> [u8; 3] {
        let o = self.offset(t, y, x);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, t: usize, y: usize, x: usize, rgb: [u8; 3]) {
        let o = self.offset(t, y, x);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

/// One applied transform with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TransformRecord {
    Hflip,
    Cutout {
        side_fraction: f64,
        seed: u64,
        top: usize,
        left: usize,
        side: usize,
    },
    Upsample {
        factor: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub clip: FrameClip,
    labels: Vec<u8>,
    pub applied: Vec<TransformRecord>,
}

impl AugmentedSample {
    pub fn new(clip: FrameClip, labels: Vec<u8>) -> Result<Self, AugmentError> {
        if labels.len() != NUM_CLASSES {
            return Err(AugmentError::Labels(format!("got {} entries", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|v| **v > 1) {
            return Err(AugmentError::Labels(format!("non-binary value {bad}")));
        }
        Ok(AugmentedSample {
            clip,
            labels,
            applied: Vec::new(),
        })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

pub fn hflip_clip(clip: &FrameClip) -> FrameClip {
    let mut data = Vec::with_capacity(clip.data.len());
    for row in clip.data.chunks_exact(clip.w * 3) {
        for px in row.chunks_exact(3).rev() {
            data.extend_from_slice(px);
        }
    }
    FrameClip { data, ..clip.clone_meta() }
}

impl FrameClip {
    fn clone_meta(&self) -> FrameClip {
        FrameClip {
            clip_id: self.clip_id.clone(),
            t: self.t,
            h: self.h,
            w: self.w,
            data: Vec::new(),
        }
    }
}

/// Flips the pixels and remaps the labels through the class flip permutation.
pub fn hflip_sample(sample: &AugmentedSample, classes: &ClassList) -> AugmentedSample {
    let labels = classes
        .flip_label_vector(&sample.labels)
        .expect("sample labels are validated to 64 entries");
    let mut applied = sample.applied.clone();
    applied.push(TransformRecord::Hflip);
    AugmentedSample {
        clip: hflip_clip(&sample.clip),
        labels,
        applied,
    }
}

/// Square zeroed by Cutout, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutoutRegion {
    pub top: usize,
    pub left: usize,
    pub side: usize,
}

impl CutoutRegion {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.top + self.side).contains(&y) && (self.left..self.left + self.side).contains(&x)
    }
}

fn check_fraction(side_fraction: f64) -> Result<(), AugmentError> {
    if side_fraction > 0.0 && side_fraction <= 1.0 {
        Ok(())
    } else {
        Err(AugmentError::Parameter(format!("cutout side fraction {side_fraction} not in (0, 1]")))
    }
}

/// Side `max(1, round(fraction * min(h, w)))`; corner uniform over valid positions.
pub fn cutout_region(h: usize, w: usize, side_fraction: f64, seed: u64) -> Result<CutoutRegion, AugmentError> {
    check_fraction(side_fraction)?;
    let short = h.min(w);
    let side = ((side_fraction * short as f64).round() as usize).clamp(1, short);
    let mut rng = rng::seeded(seed);
    let top = rng.random_range(0..=h - side);
    let left = rng.random_range(0..=w - side);
    Ok(CutoutRegion { top, left, side })
}

pub fn cutout_clip(clip: &FrameClip, side_fraction: f64, seed: u64) -> Result<FrameClip, AugmentError> {
    let region = cutout_region(clip.h, clip.w, side_fraction, seed)?;
    Ok(apply_cutout(clip, region))
}

fn apply_cutout(clip: &FrameClip, region: CutoutRegion) -> FrameClip {
    let mut out = clip.clone();
    for t in 0..clip.t {
        for y in region.top..region.top + region.side {
            let start = out.offset(t, y, region.left);
            out.data[start..start + region.side * 3].fill(0);
        }
    }
    out
}

pub fn cutout_sample(sample: &AugmentedSample, side_fraction: f64, seed: u64) -> Result<AugmentedSample, AugmentError> {
    let region = cutout_region(sample.clip.h, sample.clip.w, side_fraction, seed)?;
    let mut out = sample.clone();
    out.clip = apply_cutout(&sample.clip, region);
    out.applied.push(TransformRecord::Cutout {
        side_fraction,
        seed,
        top: region.top,
        left: region.left,
        side: region.side,
    });
    Ok(out)
}

pub fn upsample_clip(clip: &FrameClip, factor: usize) -> Result<FrameClip, AugmentError> {
    if factor == 0 {
        return Err(AugmentError::Parameter("upsample factor must be at least 1".into()));
    }
    let (h, w) = (clip.h * factor, clip.w * factor);
    let mut data = Vec::with_capacity(clip.data.len() * factor * factor);
    for t in 0..clip.t {
        for y in 0..h {
            let src_row = clip.offset(t, y / factor, 0);
            for x in 0..w {
                let o = src_row + (x / factor) * 3;
                data.extend_from_slice(&clip.data[o..o + 3]);
            }
        }
    }
    Ok(FrameClip {
        data,
        h,
        w,
        ..clip.clone_meta()
    })
}

pub fn upsample_sample(sample: &AugmentedSample, factor: usize) -> Result<AugmentedSample, AugmentError> {
    let mut out = sample.clone();
    out.clip = upsample_clip(&sample.clip, factor)?;
    out.applied.push(TransformRecord::Upsample { factor });
    Ok(out)
}

/// Training-time augmentation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Probability of each transform, drawn independently.
    pub probability: f64,
    /// Last epoch (1-based, inclusive) that receives augmentation.
    pub cutoff_epoch: u32,
    pub cutout_fraction: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            probability: 0.5,
            cutoff_epoch: 50,
            cutout_fraction: 0.25,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(AugmentError::Parameter(format!(
                "augmentation probability {} not in [0, 1]",
                self.probability
            )));
        }
        check_fraction(self.cutout_fraction)
    }
}

/// Flips and cuts out with independent coin tosses while `epoch <= cutoff_epoch`.
///
/// Draw order from the generator seeded by `seed`: flip coin, cutout coin,
/// cutout seed. All three are drawn regardless of outcome.
pub fn apply_schedule(
    sample: &AugmentedSample,
    epoch: u32,
    schedule: &Schedule,
    seed: u64,
    classes: &ClassList,
) -> Result<AugmentedSample, AugmentError> {
    schedule.validate()?;
    if epoch == 0 {
        return Err(AugmentError::Parameter("epochs are numbered from 1".into()));
    }
    if epoch > schedule.cutoff_epoch {
        return Ok(sample.clone());
    }
    let mut rng = rng::seeded(seed);
    let flip = rng.random::<f64>() < schedule.probability;
    let cutout = rng.random::<f64>() < schedule.probability;
    let cutout_seed = rng.next_u64();

    let mut out = sample.clone();
    if flip {
        out = hflip_sample(&out, classes);
    }
    if cutout {
        out = cutout_sample(&out, schedule.cutout_fraction, cutout_seed)?;
    }
    Ok(out)
}
