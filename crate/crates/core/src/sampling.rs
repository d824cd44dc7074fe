//! Frame sampling sequences for a video of `n_frames` frames.
//!
//! A model consumes `seq_len` frames taken every `stride = n_frames / seq_len`
//! frames. Each phase offset `0..stride` gives one sequence; frames past
//! `stride * seq_len` are not used. The conventional single-sequence
//! evaluation takes the middle offset, `stride / 2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplingError {
    #[error("insufficient frames: {n_frames} frames cannot fill a sequence of length {seq_len}")]
    InsufficientFrames { n_frames: usize, seq_len: usize },
    #[error("sequence length must be at least 1")]
    ZeroLength,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub n_frames: usize,
    pub seq_len: usize,
    pub stride: usize,
    pub sequences: Vec<Vec<usize>>,
}

pub fn plan_sequences(n_frames: usize, seq_len: usize) -> Result<SamplingPlan, SamplingError> {
    if seq_len == 0 {
        return Err(SamplingError::ZeroLength);
    }
    if n_frames < seq_len {
        return Err(SamplingError::InsufficientFrames { n_frames, seq_len });
    }
    let stride = n_frames / seq_len;
    let sequences = (0..stride)
        .map(|offset| (0..seq_len).map(|i| offset + i * stride).collect())
        .collect();
    Ok(SamplingPlan {
        n_frames,
        seq_len,
        stride,
        sequences,
    })
}

impl SamplingPlan {
    pub fn middle_offset(&self) -> usize {
        self.stride / 2
    }

    pub fn middle_sequence(&self) -> &[usize] {
        &self.sequences[self.middle_offset()]
    }
}

pub fn middle_sequence(plan: &SamplingPlan) -> &[usize] {
    plan.middle_sequence()
}
