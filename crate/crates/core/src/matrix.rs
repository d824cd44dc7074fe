//! Per-clip score and label matrices.
//!
//! Rows are kept sorted by clip id, so two matrices over the same clips line
//! up row for row regardless of the order their files were written in.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::NUM_CLASSES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("clip {clip_id:?}: expected {expected} values, found {actual}")]
    Width {
        clip_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("clip {clip_id:?}, column {column}: {value} is outside [0, 1]")]
    ScoreRange { clip_id: String, column: usize, value: f64 },
    #[error("clip {clip_id:?}, column {column}: label {value} is not 0 or 1")]
    NonBinary { clip_id: String, column: usize, value: u8 },
    #[error("duplicate clip id {0:?}")]
    DuplicateClip(String),
}

/// Clip sets differ. `missing` are expected clips not present; `extra` are unexpected ones.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{}", describe_alignment(.context, .missing, .extra))]
pub struct AlignmentError {
    pub context: String,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
}

fn describe_alignment(context: &str, missing: &[String], extra: &[String]) -> String {
    format!(
        "clip sets differ ({context}): missing [{}], extra [{}]",
        missing.join(", "),
        extra.join(", ")
    )
}

/// Compares two sorted clip id lists.
pub fn check_alignment(expected: &[String], actual: &[String], context: impl fmt::Display) -> Result<(), AlignmentError> {
    if expected == actual {
        return Ok(());
    }
    let want: BTreeSet<&String> = expected.iter().collect();
    let have: BTreeSet<&String> = actual.iter().collect();
    Err(AlignmentError {
        context: context.to_string(),
        missing: want.difference(&have).map(|s| s.to_string()).collect(),
        extra: have.difference(&want).map(|s| s.to_string()).collect(),
    })
}

/// Provenance of a score matrix. Fields are `None` when unknown or mixed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTag {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u32>,
}

impl SourceTag {
    /// Keeps the fields on which every tag agrees.
    pub fn common<'a>(tags: impl IntoIterator<Item = &'a SourceTag>) -> SourceTag {
        fn agree<T: Clone + PartialEq>(acc: &mut Option<T>, next: &Option<T>) {
            if acc.as_ref() != next.as_ref() {
                *acc = None;
            }
        }
        let mut iter = tags.into_iter();
        let Some(first) = iter.next() else {
            return SourceTag::default();
        };
        let mut out = first.clone();
        for t in iter {
            agree(&mut out.backbone, &t.backbone);
            agree(&mut out.seq_len, &t.seq_len);
            agree(&mut out.epoch, &t.epoch);
            agree(&mut out.offset, &t.offset);
        }
        out
    }
}

/// Sorts rows by clip id and rejects duplicates.
pub(crate) fn sort_rows<T>(mut rows: Vec<(String, T)>) -> Result<Vec<(String, T)>, MatrixError> {
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(MatrixError::DuplicateClip(w[0].0.clone()));
    }
    Ok(rows)
}

pub(crate) fn check_scores(clip_id: &str, values: &[f64], width: usize) -> Result<(), MatrixError> {
    if values.len() != width {
        return Err(MatrixError::Width {
            clip_id: clip_id.to_string(),
            expected: width,
            actual: values.len(),
        });
    }
    if let Some((column, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(MatrixError::ScoreRange {
            clip_id: clip_id.to_string(),
            column,
            value,
        });
    }
    Ok(())
}

/// `clips x 64` prediction scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    clip_ids: Vec<String>,
    scores: Vec<f64>,
    pub tag: SourceTag,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<(String, Vec<f64>)>, tag: SourceTag) -> Result<Self, MatrixError> {
        let rows = sort_rows(rows)?;
        let mut clip_ids = Vec::with_capacity(rows.len());
        let mut scores = Vec::with_capacity(rows.len() * NUM_CLASSES);
        for (id, values) in rows {
            check_scores(&id, &values, NUM_CLASSES)?;
            scores.extend_from_slice(&values);
            clip_ids.push(id);
        }
        Ok(ScoreMatrix { clip_ids, scores, tag })
    }

    /// Builds from already sorted, validated parts.
    pub(crate) fn from_parts(clip_ids: Vec<String>, scores: Vec<f64>, tag: SourceTag) -> Self {
        debug_assert_eq!(scores.len(), clip_ids.len() * NUM_CLASSES);
        ScoreMatrix { clip_ids, scores, tag }
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.clip_ids
    }

    pub fn n_clips(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.clip_ids
            .iter()
            .map(String::as_str)
            .zip(self.scores.chunks_exact(NUM_CLASSES))
    }

    pub fn get(&self, clip: usize, class: usize) -> f64 {
        self.scores[clip * NUM_CLASSES + class]
    }

    pub fn column(&self, class: usize) -> Vec<f64> {
        self.scores.iter().skip(class).step_by(NUM_CLASSES).copied().collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }
}

/// `clips x 64` binary ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    clip_ids: Vec<String>,
    labels: Vec<u8>,
}

impl LabelMatrix {
    pub fn new(rows: Vec<(String, Vec<u8>)>) -> Result<Self, MatrixError> {
        let rows = sort_rows(rows)?;
        let mut clip_ids = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len() * NUM_CLASSES);
        for (id, values) in rows {
            if values.len() != NUM_CLASSES {
                return Err(MatrixError::Width {
                    clip_id: id,
                    expected: NUM_CLASSES,
                    actual: values.len(),
                });
            }
            if let Some((column, &value)) = values.iter().enumerate().find(|(_, v)| **v > 1) {
                return Err(MatrixError::NonBinary { clip_id: id, column, value });
            }
            labels.extend_from_slice(&values);
            clip_ids.push(id);
        }
        Ok(LabelMatrix { clip_ids, labels })
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.clip_ids
    }

    pub fn n_clips(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.labels[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.clip_ids
            .iter()
            .map(String::as_str)
            .zip(self.labels.chunks_exact(NUM_CLASSES))
    }

    pub fn get(&self, clip: usize, class: usize) -> u8 {
        self.labels[clip * NUM_CLASSES + class]
    }

    pub fn column(&self, class: usize) -> Vec<u8> {
        self.labels.iter().skip(class).step_by(NUM_CLASSES).copied().collect()
    }

    pub fn values(&self) -> &[u8] {
        &self.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, v: f64) -> (String, Vec<f64>) {
        (id.to_string(), vec![v; NUM_CLASSES])
    }

    #[test]
    fn rows_sorted_by_clip_id() {
        let m = ScoreMatrix::new(vec![row("b", 0.2), row("a", 0.1)], SourceTag::default()).unwrap();
        assert_eq!(m.clip_ids(), ["a", "b"]);
        assert_eq!(m.get(0, 5), 0.1);
        assert_eq!(m.column(3), vec![0.1, 0.2]);
    }

    #[test]
    fn validation() {
        assert!(matches!(
            ScoreMatrix::new(vec![row("a", 0.1), row("a", 0.2)], SourceTag::default()),
            Err(MatrixError::DuplicateClip(_))
        ));
        assert!(matches!(
            ScoreMatrix::new(vec![row("a", 1.5)], SourceTag::default()),
            Err(MatrixError::ScoreRange { .. })
        ));
        assert!(matches!(
            ScoreMatrix::new(vec![row("a", f64::NAN)], SourceTag::default()),
            Err(MatrixError::ScoreRange { .. })
        ));
        assert!(matches!(
            ScoreMatrix::new(vec![("a".into(), vec![0.0; 3])], SourceTag::default()),
            Err(MatrixError::Width { .. })
        ));
        let mut bad = vec![0u8; NUM_CLASSES];
        bad[7] = 2;
        assert!(matches!(
            LabelMatrix::new(vec![("a".into(), bad)]),
            Err(MatrixError::NonBinary { column: 7, .. })
        ));
    }

    #[test]
    fn alignment_lists_differences() {
        let a: Vec<String> = ["a", "b", "c"].map(String::from).into();
        let b: Vec<String> = ["b", "c", "d"].map(String::from).into();
        let err = check_alignment(&a, &b, "source 1").unwrap_err();
        assert_eq!(err.missing, vec!["a"]);
        assert_eq!(err.extra, vec!["d"]);
        assert!(err.to_string().contains("missing [a]"));
        assert!(check_alignment(&a, &a, "x").is_ok());
    }

    #[test]
    fn common_tag() {
        let a = SourceTag { backbone: Some("x3d".into()), epoch: Some(60), ..Default::default() };
        let b = SourceTag { backbone: Some("x3d".into()), epoch: Some(70), ..Default::default() };
        let c = SourceTag::common([&a, &b]);
        assert_eq!(c.backbone.as_deref(), Some("x3d"));
        assert_eq!(c.epoch, None);
    }
}
