//! File formats.
//!
//! * Score file: one JSON record per line, `{"clip_id": "...", "scores": [..]}`,
//!   with 64 scores (or 32 for a branch file, columns in ascending class
//!   index order of that branch).
//! * Truth file and label sidecar: one JSON record per line,
//!   `{"clip_id": "...", "labels": ["Z1-Z2:C", ...]}`.
//! * Class list: one class name per line, line `i + 1` is class index `i`.
//! * Clip: a directory of 8-bit PNG frames in lexicographic filename order,
//!   or a raw `.rgbclip` file: the 4 magic bytes `RGBC`, then `T`, `H`, `W`
//!   as little-endian `u32`, then `T*H*W*3` bytes stored planar: for each
//!   frame the `H*W` red plane, then green, then blue, each row by row.
//! * Ensemble spec: an [`EnsembleNode`] tree in JSON (`.json`) or TOML.
//!
//! Every writer goes through [`write_atomic`].

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::FrameClip;
use crate::ensemble::{project, BranchScores, EnsembleError, EnsembleNode, Leaf, LeafLoader, Scores};
use crate::matrix::{LabelMatrix, ScoreMatrix, SourceTag};
use crate::taxonomy::{ClassList, BRANCH_CLASSES, NUM_CLASSES};

pub const RAW_CLIP_MAGIC: [u8; 4] = *b"RGBC";
pub const RAW_CLIP_EXTENSION: &str = "rgbclip";
pub const LABEL_SIDECAR_SUFFIX: &str = ".labels.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {message}", .path.display())]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, message: impl ToString) -> IoError {
    IoError::Invalid {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn parse_err(path: &Path, line: usize, message: impl ToString) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRecord {
    clip_id: String,
    scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    clip_id: String,
    labels: Vec<String>,
}

fn json_lines<'a, T: Deserialize<'a>>(path: &Path, text: &'a str) -> Result<Vec<T>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(path, i + 1, e)))
        .collect()
}

/// Raw score rows in file order.
pub fn read_score_rows(path: &Path) -> Result<Vec<(String, Vec<f64>)>, IoError> {
    let text = read_text(path)?;
    let records: Vec<ScoreRecord> = json_lines(path, &text)?;
    Ok(records.into_iter().map(|r| (r.clip_id, r.scores)).collect())
}

pub fn read_score_matrix(path: &Path, tag: SourceTag) -> Result<ScoreMatrix, IoError> {
    ScoreMatrix::new(read_score_rows(path)?, tag).map_err(|e| invalid(path, e))
}

pub fn score_lines<'a>(rows: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
    rows.into_iter()
        .map(|(clip_id, scores)| {
            let rec = ScoreRecord {
                clip_id: clip_id.to_string(),
                scores: scores.to_vec(),
            };
            serde_json::to_string(&rec).expect("score record serializes") + "\n"
        })
        .collect()
}

pub fn write_score_matrix(path: &Path, matrix: &ScoreMatrix) -> Result<(), IoError> {
    write_atomic(path, score_lines(matrix.rows()).as_bytes())
}

pub fn write_branch_scores(path: &Path, scores: &BranchScores) -> Result<(), IoError> {
    let rows = scores
        .clip_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), scores.row(i)));
    write_atomic(path, score_lines(rows).as_bytes())
}

fn labels_to_multi_hot(path: &Path, line: usize, names: &[String], classes: &ClassList) -> Result<Vec<u8>, IoError> {
    let mut hot = vec![0u8; NUM_CLASSES];
    for name in names {
        let idx = classes.index_of_name(name).map_err(|e| parse_err(path, line, e))?;
        hot[idx.get()] = 1;
    }
    Ok(hot)
}

fn multi_hot_to_names(labels: &[u8], classes: &ClassList) -> Vec<String> {
    classes
        .iter()
        .filter(|(i, _)| labels[i.get()] == 1)
        .map(|(_, a)| a.name())
        .collect()
}

pub fn read_truth(path: &Path, classes: &ClassList) -> Result<LabelMatrix, IoError> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e))?;
        let hot = labels_to_multi_hot(path, i + 1, &rec.labels, classes)?;
        rows.push((rec.clip_id, hot));
    }
    LabelMatrix::new(rows).map_err(|e| invalid(path, e))
}

fn label_line(clip_id: &str, labels: &[u8], classes: &ClassList) -> String {
    let rec = LabelRecord {
        clip_id: clip_id.to_string(),
        labels: multi_hot_to_names(labels, classes),
    };
    serde_json::to_string(&rec).expect("label record serializes") + "\n"
}

pub fn write_truth(path: &Path, truth: &LabelMatrix, classes: &ClassList) -> Result<(), IoError> {
    let text: String = truth.rows().map(|(id, labels)| label_line(id, labels, classes)).collect();
    write_atomic(path, text.as_bytes())
}

/// Label sidecar of a single clip: one truth record.
pub fn read_label_sidecar(path: &Path, classes: &ClassList) -> Result<(String, Vec<u8>), IoError> {
    let text = read_text(path)?;
    let rec: LabelRecord = serde_json::from_str(text.trim()).map_err(|e| parse_err(path, 1, e))?;
    let hot = labels_to_multi_hot(path, 1, &rec.labels, classes)?;
    Ok((rec.clip_id, hot))
}

pub fn write_label_sidecar(path: &Path, clip_id: &str, labels: &[u8], classes: &ClassList) -> Result<(), IoError> {
    write_atomic(path, label_line(clip_id, labels, classes).as_bytes())
}

pub fn read_class_list(path: &Path) -> Result<ClassList, IoError> {
    let text = read_text(path)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != NUM_CLASSES {
        return Err(invalid(path, format!("expected {NUM_CLASSES} class names, found {}", lines.len())));
    }
    ClassList::parse(&text).map_err(|e| invalid(path, e))
}

pub fn read_ensemble_spec(path: &Path) -> Result<EnsembleNode, IoError> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))
    } else {
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            parse_err(path, line, e.message())
        })
    }
}

/// Loads ensemble leaves from score files; relative paths resolve against `base`.
pub struct FileLeafLoader<'a> {
    pub base: PathBuf,
    pub classes: &'a ClassList,
}

impl LeafLoader for FileLeafLoader<'_> {
    fn load(&self, leaf: &Leaf) -> Result<Scores, EnsembleError> {
        let path = self.base.join(&leaf.path);
        let load_err = |message: String| EnsembleError::Load {
            path: path.clone(),
            message,
        };
        let rows = read_score_rows(&path).map_err(|e| load_err(e.to_string()))?;
        let width = rows.first().map_or(NUM_CLASSES, |r| r.1.len());
        match (leaf.branch, width) {
            (None, _) => Ok(Scores::Full(ScoreMatrix::new(rows, leaf.tag())?)),
            (Some(b), NUM_CLASSES) => Ok(Scores::Branch(project(&ScoreMatrix::new(rows, leaf.tag())?, b, self.classes))),
            (Some(b), BRANCH_CLASSES) => Ok(Scores::Branch(BranchScores::with_partition_order(rows, b, self.classes, leaf.tag())?)),
            (Some(_), w) => Err(load_err(format!(
                "branch file rows have {w} scores, expected {BRANCH_CLASSES} or {NUM_CLASSES}"
            ))),
        }
    }
}

/// On-disk layout of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipFormat {
    PngDir,
    Raw,
}

pub fn encode_raw_clip(clip: &FrameClip) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + clip.data().len());
    out.extend_from_slice(&RAW_CLIP_MAGIC);
    for dim in [clip.frames(), clip.height(), clip.width()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for t in 0..clip.frames() {
        let frame = clip.frame(t);
        for channel in 0..3 {
            out.extend(frame.chunks_exact(3).map(|px| px[channel]));
        }
    }
    out
}

pub fn decode_raw_clip(clip_id: &str, bytes: &[u8], path: &Path) -> Result<FrameClip, IoError> {
    if bytes.len() < 16 || bytes[..4] != RAW_CLIP_MAGIC {
        return Err(invalid(path, "not a raw clip (bad magic or short header)"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (t, h, w) = (dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    let plane = h * w;
    if t.checked_mul(plane * 3) != Some(body.len()) {
        return Err(invalid(
            path,
            format!("{} pixel bytes for a {t}x{h}x{w} clip", body.len()),
        ));
    }
    let mut data = Vec::with_capacity(body.len());
    for frame in body.chunks_exact(plane * 3) {
        for i in 0..plane {
            data.extend([frame[i], frame[plane + i], frame[2 * plane + i]]);
        }
    }
    FrameClip::new(clip_id, t, h, w, data).map_err(|e| invalid(path, e))
}

fn decode_png(path: &Path) -> Result<(usize, usize, Vec<u8>), IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| invalid(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| invalid(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| invalid(path, e))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|g| [*g; 3]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0]; 3]).collect(),
        png::ColorType::Indexed => return Err(invalid(path, "indexed PNG was not expanded")),
    };
    Ok((h, w, rgb))
}

fn encode_png(width: usize, height: usize, rgb: &[u8], path: &Path) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| invalid(path, e))?;
    writer.write_image_data(rgb).map_err(|e| invalid(path, e))?;
    writer.finish().map_err(|e| invalid(path, e))?;
    Ok(out)
}

pub fn read_png_dir(clip_id: &str, dir: &Path) -> Result<FrameClip, IoError> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(invalid(dir, "no PNG frames"));
    }
    let mut data = Vec::new();
    let mut dims = None;
    for f in &frames {
        let (h, w, rgb) = decode_png(f)?;
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(invalid(f, format!("frame is {w}x{h}, earlier frames are {}x{}", d.1, d.0)))
            }
            _ => {}
        }
        data.extend_from_slice(&rgb);
    }
    let (h, w) = dims.unwrap();
    FrameClip::new(clip_id, frames.len(), h, w, data).map_err(|e| invalid(dir, e))
}

/// Writes frames as `frame_00000.png`, `frame_00001.png`, ...
pub fn write_png_dir(clip: &FrameClip, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for t in 0..clip.frames() {
        let path = dir.join(format!("frame_{t:05}.png"));
        let bytes = encode_png(clip.width(), clip.height(), clip.frame(t), &path)?;
        write_atomic(&path, &bytes)?;
    }
    Ok(())
}

pub fn read_clip(clip_id: &str, path: &Path) -> Result<(FrameClip, ClipFormat), IoError> {
    if path.is_dir() {
        Ok((read_png_dir(clip_id, path)?, ClipFormat::PngDir))
    } else {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Ok((decode_raw_clip(clip_id, &bytes, path)?, ClipFormat::Raw))
    }
}

pub fn write_clip(clip: &FrameClip, path: &Path, format: ClipFormat) -> Result<(), IoError> {
    match format {
        ClipFormat::PngDir => write_png_dir(clip, path),
        ClipFormat::Raw => write_atomic(path, &encode_raw_clip(clip)),
    }
}

/// A clip found in an input directory together with its label sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipEntry {
    pub clip_id: String,
    pub clip_path: PathBuf,
    pub labels_path: PathBuf,
    pub format: ClipFormat,
}

/// Finds `<id>/` PNG directories and `<id>.rgbclip` files, sorted by id.
/// Each must have a `<id>.labels.json` sidecar next to it.
pub fn scan_clip_dir(dir: &Path) -> Result<Vec<ClipEntry>, IoError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let (clip_id, format) = if path.is_dir() {
            (name, ClipFormat::PngDir)
        } else if path.extension().is_some_and(|e| e == RAW_CLIP_EXTENSION) {
            (name.trim_end_matches(&format!(".{RAW_CLIP_EXTENSION}")).to_string(), ClipFormat::Raw)
        } else {
            continue;
        };
        let labels_path = dir.join(format!("{clip_id}{LABEL_SIDECAR_SUFFIX}"));
        if !labels_path.is_file() {
            return Err(invalid(&path, format!("missing label sidecar {}", labels_path.display())));
        }
        out.push(ClipEntry {
            clip_id,
            clip_path: path,
            labels_path,
            format,
        });
    }
    out.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(out)
}
