//! Average precision, mAP and per-agent mAP.
//!
//! AP is the uninterpolated mean of the precision at each positive's rank:
//! clips are ranked by descending score, ties broken by ascending clip
//! position (clips are ordered by id), and
//!
//! ```text
//! AP = (1 / P) * sum over positives at rank k of (positives in top k) / k
//! ```
//!
//! A class with no positive clip has no AP. Such classes are left out of
//! every mean and listed in [`EvalReport::excluded_classes`].
//!
//! Reported numbers depend on this choice of AP variant; interpolated AP
//! variants will give different values for the same predictions.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{check_alignment, AlignmentError, LabelMatrix, ScoreMatrix};
use crate::taxonomy::{Agent, ClassIndex, ClassList, NUM_CLASSES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("score vector has length {scores}, label vector has length {labels}")]
    Dimension { scores: usize, labels: usize },
    #[error("label {value} at position {position} is not 0 or 1")]
    NonBinary { position: usize, value: u8 },
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error("malformed report record: {0}")]
    Record(String),
}

/// Returns `None` when `labels` has no positive.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<Option<f64>, EvalError> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(EvalError::Dimension {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some((position, &value)) = labels.iter().enumerate().find(|(_, v)| **v > 1) {
        return Err(EvalError::NonBinary { position, value });
    }
    Ok(ranked_ap(scores, labels))
}

fn ranked_ap(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let positives = labels.iter().filter(|v| **v == 1).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// mAP restricted to each agent type; `None` when all its classes are excluded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMap {
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "C+")]
    pub c_plus: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "K+")]
    pub k_plus: Option<f64>,
    #[serde(rename = "P")]
    pub p: Option<f64>,
    #[serde(rename = "P+")]
    pub p_plus: Option<f64>,
}

impl GroupMap {
    pub fn get(&self, agent: Agent) -> Option<f64> {
        match agent.token() {
            "C" => self.c,
            "C+" => self.c_plus,
            "K" => self.k,
            "K+" => self.k_plus,
            "P" => self.p,
            _ => self.p_plus,
        }
    }

    fn slot(&mut self, agent: Agent) -> &mut Option<f64> {
        match agent.token() {
            "C" => &mut self.c,
            "C+" => &mut self.c_plus,
            "K" => &mut self.k,
            "K+" => &mut self.k_plus,
            "P" => &mut self.p,
            _ => &mut self.p_plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_clips: usize,
    pub map: Option<f64>,
    pub group_map: GroupMap,
    pub per_class_ap: Vec<Option<f64>>,
    pub excluded_classes: Vec<ClassIndex>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    /// Derives the overall and per-agent means from per-class APs.
    pub fn from_per_class(per_class_ap: Vec<Option<f64>>, n_clips: usize, classes: &ClassList) -> Self {
        assert_eq!(per_class_ap.len(), NUM_CLASSES);
        let mut group_map = GroupMap::default();
        for agent in Agent::ALL {
            *group_map.slot(agent) = mean_defined(
                classes
                    .agent_classes(agent)
                    .into_iter()
                    .map(|c| per_class_ap[c.get()]),
            );
        }
        let excluded_classes = per_class_ap
            .iter()
            .enumerate()
            .filter(|(_, ap)| ap.is_none())
            .map(|(i, _)| ClassIndex::new(i).unwrap())
            .collect();
        EvalReport {
            n_clips,
            map: mean_defined(per_class_ap.iter().copied()),
            group_map,
            per_class_ap,
            excluded_classes,
        }
    }

    /// The seven reported numbers: mAP, then C, K, P, C+, K+, P+.
    pub fn columns(&self) -> [Option<f64>; 7] {
        let g = &self.group_map;
        [self.map, g.c, g.k, g.p, g.c_plus, g.k_plus, g.p_plus]
    }
}

pub fn evaluate(predictions: &ScoreMatrix, truth: &LabelMatrix, classes: &ClassList) -> Result<EvalReport, EvalError> {
    check_alignment(truth.clip_ids(), predictions.clip_ids(), "predictions vs truth")?;
    let per_class: Vec<Option<f64>> = (0..NUM_CLASSES)
        .into_par_iter()
        .map(|c| ranked_ap(&predictions.column(c), &truth.column(c)))
        .collect();
    Ok(EvalReport::from_per_class(per_class, truth.n_clips(), classes))
}

pub const REPORT_COLUMNS: [&str; 7] = ["mAP", "mAP@C", "mAP@K", "mAP@P", "mAP@C+", "mAP@K+", "mAP@P+"];

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "n/a".to_string(),
    }
}

/// The seven values of a report, 2 decimals, space separated.
pub fn format_values(report: &EvalReport) -> String {
    report.columns().map(fmt_value).join(" ")
}

/// Text table with one row per method, plus a note for each method with
/// excluded classes.
pub fn format_report(rows: &[(&str, &EvalReport)], classes: &ClassList) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).chain([6]).max().unwrap() + 2;
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}{}", "Method", REPORT_COLUMNS.join(" "));
    for (method, report) in rows {
        let _ = writeln!(out, "{:<width$}{}", method, format_values(report));
    }
    for (method, report) in rows {
        if !report.excluded_classes.is_empty() {
            let names: Vec<String> = report.excluded_classes.iter().map(|c| classes.name(*c)).collect();
            let _ = writeln!(
                out,
                "note: {method}: {} class(es) without positives excluded: {}",
                names.len(),
                names.join(", ")
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub method: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// One JSON record per line.
pub fn report_records(rows: &[(&str, &EvalReport)]) -> String {
    rows.iter()
        .map(|(method, report)| {
            let rec = ReportRecord {
                method: method.to_string(),
                report: (*report).clone(),
            };
            serde_json::to_string(&rec).expect("report serializes") + "\n"
        })
        .collect()
}

pub fn parse_report_records(text: &str) -> Result<Vec<ReportRecord>, EvalError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| EvalError::Record(e.to_string())))
        .collect()
}
