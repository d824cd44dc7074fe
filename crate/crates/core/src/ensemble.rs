//! Score fusion and multi-branch merging.
//!
//! Scores are post-activation probabilities in `[0, 1]`. Sources are aligned
//! by sorted clip id. Within each cell the source values are sorted before
//! they are reduced, so every operator gives bit-identical results for any
//! ordering of its inputs.
//!
//! An [`EnsembleNode`] tree describes a whole ensemble: leaves are score
//! files (one per sampling offset, sequence length, epoch or backbone), and
//! internal nodes fuse, merge the single/group branches, or blend the merged
//! branches with a full-label-space model.

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{check_alignment, AlignmentError, MatrixError, ScoreMatrix, SourceTag};
use crate::taxonomy::{ClassIndex, ClassList, BRANCH_CLASSES, NUM_CLASSES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("no sources to fuse")]
    Empty,
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error("partition error: {0}")]
    Partition(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("combine weight {0} not in [0, 1]")]
    Weight(f64),
    #[error("cannot load {path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("invalid ensemble: {0}")]
    Spec(String),
    #[error("at {path}: {source}")]
    AtNode {
        path: String,
        #[source]
        source: Box<EnsembleError>,
    },
}

impl EnsembleError {
    /// The underlying error with any tree path stripped.
    pub fn root_cause(&self) -> &EnsembleError {
        match self {
            EnsembleError::AtNode { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuseOp {
    #[default]
    Mean,
    Max,
    Median,
}

impl fmt::Display for FuseOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FuseOp::Mean => "mean",
            FuseOp::Max => "max",
            FuseOp::Median => "median",
        })
    }
}

impl std::str::FromStr for FuseOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(FuseOp::Mean),
            "max" => Ok(FuseOp::Max),
            "median" => Ok(FuseOp::Median),
            other => Err(format!("unknown fusion operator {other:?} (expected mean, max or median)")),
        }
    }
}

/// Reduces one cell. `values` must be non-empty; it is sorted in place.
fn reduce(values: &mut [f64], op: FuseOp) -> f64 {
    values.sort_by(f64::total_cmp);
    let (lo, hi) = (values[0], values[values.len() - 1]);
    match op {
        FuseOp::Max => hi,
        FuseOp::Mean => (values.iter().sum::<f64>() / values.len() as f64).clamp(lo, hi),
        FuseOp::Median => {
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                ((values[n / 2 - 1] + values[n / 2]) / 2.0).clamp(lo, hi)
            }
        }
    }
}

/// Cellwise reduction over equally shaped row-major tables.
fn reduce_tables(tables: &[&[f64]], op: FuseOp) -> Vec<f64> {
    let len = tables[0].len();
    let mut buf = Vec::with_capacity(tables.len());
    (0..len)
        .map(|i| {
            buf.clear();
            buf.extend(tables.iter().map(|t| t[i]));
            reduce(&mut buf, op)
        })
        .collect()
}

fn check_sources<'a>(ids: impl IntoIterator<Item = &'a [String]>) -> Result<(), EnsembleError> {
    let mut iter = ids.into_iter();
    let first = iter.next().ok_or(EnsembleError::Empty)?;
    for (i, other) in iter.enumerate() {
        check_alignment(first, other, format_args!("source {} vs source 0", i + 1))?;
    }
    Ok(())
}

pub fn fuse(sources: &[ScoreMatrix], op: FuseOp) -> Result<ScoreMatrix, EnsembleError> {
    check_sources(sources.iter().map(ScoreMatrix::clip_ids))?;
    let tables: Vec<&[f64]> = sources.iter().map(ScoreMatrix::values).collect();
    Ok(ScoreMatrix::from_parts(
        sources[0].clip_ids().to_vec(),
        reduce_tables(&tables, op),
        SourceTag::common(sources.iter().map(|s| &s.tag)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Single,
    Group,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Single => "single",
            Branch::Group => "group",
        })
    }
}

fn branch_classes(classes: &ClassList, branch: Branch) -> Vec<ClassIndex> {
    let p = classes.branch_partition();
    match branch {
        Branch::Single => p.single,
        Branch::Group => p.group,
    }
}

/// Scores from a model that predicts only one branch's 32 classes.
/// Column `j` holds class `class_map[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchScores {
    clip_ids: Vec<String>,
    scores: Vec<f64>,
    pub branch: Branch,
    pub class_map: Vec<ClassIndex>,
    pub tag: SourceTag,
}

impl BranchScores {
    pub fn new(
        rows: Vec<(String, Vec<f64>)>,
        branch: Branch,
        class_map: Vec<ClassIndex>,
        tag: SourceTag,
    ) -> Result<Self, EnsembleError> {
        if class_map.len() != BRANCH_CLASSES {
            return Err(EnsembleError::Partition(format!(
                "{branch} branch maps {} classes, expected {BRANCH_CLASSES}",
                class_map.len()
            )));
        }
        let rows = crate::matrix::sort_rows(rows)?;
        let mut clip_ids = Vec::with_capacity(rows.len());
        let mut scores = Vec::with_capacity(rows.len() * BRANCH_CLASSES);
        for (id, values) in rows {
            crate::matrix::check_scores(&id, &values, BRANCH_CLASSES)?;
            scores.extend_from_slice(&values);
            clip_ids.push(id);
        }
        Ok(BranchScores {
            clip_ids,
            scores,
            branch,
            class_map,
            tag,
        })
    }

    /// Uses the branch's classes in ascending index order as the column map.
    pub fn with_partition_order(
        rows: Vec<(String, Vec<f64>)>,
        branch: Branch,
        classes: &ClassList,
        tag: SourceTag,
    ) -> Result<Self, EnsembleError> {
        BranchScores::new(rows, branch, branch_classes(classes, branch), tag)
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.clip_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * BRANCH_CLASSES..(i + 1) * BRANCH_CLASSES]
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }
}

/// Keeps only the columns owned by `branch`, in ascending class order.
pub fn project(matrix: &ScoreMatrix, branch: Branch, classes: &ClassList) -> BranchScores {
    let class_map = branch_classes(classes, branch);
    let scores = matrix
        .values()
        .chunks_exact(NUM_CLASSES)
        .flat_map(|row| class_map.iter().map(|c| row[c.get()]))
        .collect();
    BranchScores {
        clip_ids: matrix.clip_ids().to_vec(),
        scores,
        branch,
        class_map,
        tag: matrix.tag.clone(),
    }
}

pub fn fuse_branches(sources: &[BranchScores], op: FuseOp) -> Result<BranchScores, EnsembleError> {
    check_sources(sources.iter().map(BranchScores::clip_ids))?;
    let first = &sources[0];
    if let Some(other) = sources
        .iter()
        .find(|s| s.branch != first.branch || s.class_map != first.class_map)
    {
        return Err(EnsembleError::Spec(format!(
            "cannot fuse {} branch scores with {} branch scores of a different column map",
            first.branch, other.branch
        )));
    }
    let tables: Vec<&[f64]> = sources.iter().map(BranchScores::values).collect();
    Ok(BranchScores {
        clip_ids: first.clip_ids.clone(),
        scores: reduce_tables(&tables, op),
        branch: first.branch,
        class_map: first.class_map.clone(),
        tag: SourceTag::common(sources.iter().map(|s| &s.tag)),
    })
}

/// Reassembles a 64-column matrix from complementary single and group branches.
pub fn merge_branches(
    single: &BranchScores,
    group: &BranchScores,
    classes: &ClassList,
) -> Result<ScoreMatrix, EnsembleError> {
    let mut owner: Vec<Option<(Branch, usize)>> = vec![None; NUM_CLASSES];
    for b in [single, group] {
        for (col, class) in b.class_map.iter().enumerate() {
            if let Some((prev, _)) = owner[class.get()].replace((b.branch, col)) {
                return Err(EnsembleError::Partition(format!(
                    "class {} claimed by both the {prev} and {} branch",
                    classes.name(*class),
                    b.branch
                )));
            }
        }
    }
    if let Some(j) = owner.iter().position(Option::is_none) {
        return Err(EnsembleError::Partition(format!(
            "class {} not covered by either branch",
            classes.name(ClassIndex::new(j).unwrap())
        )));
    }
    for (b, expected) in [(single, Branch::Single), (group, Branch::Group)] {
        if b.branch != expected {
            return Err(EnsembleError::Partition(format!(
                "expected a {expected} branch, got {}",
                b.branch
            )));
        }
        let mut claimed = b.class_map.clone();
        claimed.sort();
        if claimed != branch_classes(classes, expected) {
            return Err(EnsembleError::Partition(format!(
                "{expected} branch class map does not match the {expected} partition"
            )));
        }
    }
    check_alignment(single.clip_ids(), group.clip_ids(), "group branch vs single branch")?;

    let mut scores = Vec::with_capacity(single.clip_ids.len() * NUM_CLASSES);
    for i in 0..single.clip_ids.len() {
        scores.extend(owner.iter().map(|o| {
            let (branch, col) = o.unwrap();
            match branch {
                Branch::Single => single.row(i)[col],
                Branch::Group => group.row(i)[col],
            }
        }));
    }
    Ok(ScoreMatrix::from_parts(
        single.clip_ids.clone(),
        scores,
        SourceTag::common([&single.tag, &group.tag]),
    ))
}

/// `weight * merged + (1 - weight) * standard`, cellwise.
pub fn combine_with_standard(
    merged: &ScoreMatrix,
    standard: &ScoreMatrix,
    weight: f64,
) -> Result<ScoreMatrix, EnsembleError> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(EnsembleError::Weight(weight));
    }
    check_alignment(merged.clip_ids(), standard.clip_ids(), "standard vs merged")?;
    let scores = merged
        .values()
        .iter()
        .zip(standard.values())
        .map(|(&m, &s)| (weight * m + (1.0 - weight) * s).clamp(m.min(s), m.max(s)))
        .collect();
    Ok(ScoreMatrix::from_parts(
        merged.clip_ids().to_vec(),
        scores,
        SourceTag::common([&merged.tag, &standard.tag]),
    ))
}

pub const DEFAULT_COMBINE_WEIGHT: f64 = 0.5;

fn default_weight() -> f64 {
    DEFAULT_COMBINE_WEIGHT
}

/// A score file plus the provenance of the model run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leaf {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u32>,
    /// Set when the file holds (or should be read as) one branch's scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
}

impl Leaf {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Leaf {
            path: path.into(),
            backbone: None,
            seq_len: None,
            epoch: None,
            offset: None,
            branch: None,
        }
    }

    pub fn tag(&self) -> SourceTag {
        SourceTag {
            backbone: self.backbone.clone(),
            seq_len: self.seq_len,
            epoch: self.epoch,
            offset: self.offset,
        }
    }
}

/// Ensemble tree node, serialized with an `op` discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleNode {
    Mean { sources: Vec<EnsembleNode> },
    Max { sources: Vec<EnsembleNode> },
    Median { sources: Vec<EnsembleNode> },
    MergeBranches {
        single: Box<EnsembleNode>,
        group: Box<EnsembleNode>,
    },
    Combine {
        merged: Box<EnsembleNode>,
        standard: Box<EnsembleNode>,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    Leaf(Leaf),
}

impl EnsembleNode {
    pub fn fuse(op: FuseOp, sources: Vec<EnsembleNode>) -> Self {
        match op {
            FuseOp::Mean => EnsembleNode::Mean { sources },
            FuseOp::Max => EnsembleNode::Max { sources },
            FuseOp::Median => EnsembleNode::Median { sources },
        }
    }

    pub fn leaf(path: impl Into<PathBuf>) -> Self {
        EnsembleNode::Leaf(Leaf::new(path))
    }

    fn label(&self) -> &'static str {
        match self {
            EnsembleNode::Mean { .. } => "mean",
            EnsembleNode::Max { .. } => "max",
            EnsembleNode::Median { .. } => "median",
            EnsembleNode::MergeBranches { .. } => "merge_branches",
            EnsembleNode::Combine { .. } => "combine",
            EnsembleNode::Leaf(_) => "leaf",
        }
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match self {
            EnsembleNode::Mean { sources } | EnsembleNode::Max { sources } | EnsembleNode::Median { sources } => {
                sources.iter().for_each(|s| s.collect_leaves(out))
            }
            EnsembleNode::MergeBranches { single, group } => {
                single.collect_leaves(out);
                group.collect_leaves(out);
            }
            EnsembleNode::Combine { merged, standard, .. } => {
                merged.collect_leaves(out);
                standard.collect_leaves(out);
            }
            EnsembleNode::Leaf(l) => out.push(l),
        }
    }
}

/// Value of a subtree: either full 64-class scores or one branch's scores.
#[derive(Debug, Clone, PartialEq)]
pub enum Scores {
    Full(ScoreMatrix),
    Branch(BranchScores),
}

/// Supplies leaf scores to [`build_ensemble`].
pub trait LeafLoader: Sync {
    fn load(&self, leaf: &Leaf) -> Result<Scores, EnsembleError>;
}

impl<F> LeafLoader for F
where
    F: Fn(&Leaf) -> Result<Scores, EnsembleError> + Sync,
{
    fn load(&self, leaf: &Leaf) -> Result<Scores, EnsembleError> {
        self(leaf)
    }
}

/// Evaluates the tree bottom-up. Sibling subtrees run in parallel; the result
/// does not depend on scheduling. Errors carry the path of the failing node.
pub fn build_ensemble(
    root: &EnsembleNode,
    loader: &dyn LeafLoader,
    classes: &ClassList,
) -> Result<ScoreMatrix, EnsembleError> {
    match eval_node(root, "$", loader, classes)? {
        Scores::Full(m) => Ok(m),
        Scores::Branch(b) => Err(EnsembleError::AtNode {
            path: "$".into(),
            source: Box::new(EnsembleError::Spec(format!(
                "tree evaluates to {} branch scores; wrap it in merge_branches",
                b.branch
            ))),
        }),
    }
}

fn at(path: &str, err: EnsembleError) -> EnsembleError {
    match err {
        e @ EnsembleError::AtNode { .. } => e,
        e => EnsembleError::AtNode {
            path: path.to_string(),
            source: Box::new(e),
        },
    }
}

fn eval_node(node: &EnsembleNode, path: &str, loader: &dyn LeafLoader, classes: &ClassList) -> Result<Scores, EnsembleError> {
    let path = format!("{path}.{}", node.label());
    let result = match node {
        EnsembleNode::Leaf(leaf) => loader.load(leaf),
        EnsembleNode::Mean { sources } | EnsembleNode::Max { sources } | EnsembleNode::Median { sources } => {
            let op = match node {
                EnsembleNode::Mean { .. } => FuseOp::Mean,
                EnsembleNode::Max { .. } => FuseOp::Max,
                _ => FuseOp::Median,
            };
            let values: Vec<Result<Scores, EnsembleError>> = sources
                .par_iter()
                .enumerate()
                .map(|(i, s)| eval_node(s, &format!("{path}.sources[{i}]"), loader, classes))
                .collect();
            let values = values.into_iter().collect::<Result<Vec<_>, _>>()?;
            fuse_values(values, op)
        }
        EnsembleNode::MergeBranches { single, group } => {
            let (s, g) = rayon::join(
                || eval_node(single, &format!("{path}.single"), loader, classes),
                || eval_node(group, &format!("{path}.group"), loader, classes),
            );
            let s = as_branch(s?, Branch::Single, classes);
            let g = as_branch(g?, Branch::Group, classes);
            merge_branches(&s, &g, classes).map(Scores::Full)
        }
        EnsembleNode::Combine { merged, standard, weight } => {
            let (m, s) = rayon::join(
                || eval_node(merged, &format!("{path}.merged"), loader, classes),
                || eval_node(standard, &format!("{path}.standard"), loader, classes),
            );
            match (m?, s?) {
                (Scores::Full(m), Scores::Full(s)) => combine_with_standard(&m, &s, *weight).map(Scores::Full),
                _ => Err(EnsembleError::Spec("combine needs full 64-class scores on both sides".into())),
            }
        }
    };
    result.map_err(|e| at(&path, e))
}

fn as_branch(scores: Scores, branch: Branch, classes: &ClassList) -> BranchScores {
    match scores {
        Scores::Branch(b) => b,
        Scores::Full(m) => project(&m, branch, classes),
    }
}

fn fuse_values(values: Vec<Scores>, op: FuseOp) -> Result<Scores, EnsembleError> {
    if values.is_empty() {
        return Err(EnsembleError::Empty);
    }
    if values.iter().all(|v| matches!(v, Scores::Full(_))) {
        let full: Vec<ScoreMatrix> = values
            .into_iter()
            .map(|v| match v {
                Scores::Full(m) => m,
                Scores::Branch(_) => unreachable!(),
            })
            .collect();
        return fuse(&full, op).map(Scores::Full);
    }
    if values.iter().all(|v| matches!(v, Scores::Branch(_))) {
        let branches: Vec<BranchScores> = values
            .into_iter()
            .map(|v| match v {
                Scores::Branch(b) => b,
                Scores::Full(_) => unreachable!(),
            })
            .collect();
        return fuse_branches(&branches, op).map(Scores::Branch);
    }
    Err(EnsembleError::Spec("cannot fuse full scores with branch scores".into()))
}
