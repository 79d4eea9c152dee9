//! YOLO-format label and prediction files.
//!
//! A label file holds one object per line, `class_id cx cy w h`, fields
//! separated by one or more spaces (tabs accepted), LF or CRLF line endings.
//! A prediction file inserts the confidence as the second field:
//! `class_id confidence cx cy w h`. Blank lines are ignored. Images are keyed
//! by file stem.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::{Detection, GroundTruth};

/// Ordered category names; a class id is an index into this list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassList {
    names: Vec<String>,
}

impl ClassList {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(Error::Validation(format!("class {i} has an empty name")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Validation(format!("class name `{n}` appears twice")));
            }
        }
        Ok(ClassList { names })
    }

    /// Parses a comma-separated list such as `Bottle,Clothes,Metal`.
    pub fn parse_inline(spec: &str) -> Result<Self> {
        Self::new(spec.split(',').map(|s| s.trim().to_string()).collect())
    }

    /// Reads one name per line (blank lines and `#` comments skipped).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Annotations of a single image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageLabels {
    pub image_id: String,
    pub objects: Vec<(usize, BBox)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSplit {
    pub name: String,
    /// Sorted by image id; ids are unique.
    pub images: Vec<ImageLabels>,
}

impl DatasetSplit {
    pub fn new(name: impl Into<String>, mut images: Vec<ImageLabels>) -> Result<Self> {
        images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        if let Some(w) = images.windows(2).find(|w| w[0].image_id == w[1].image_id) {
            return Err(Error::Validation(format!("image id `{}` appears twice", w[0].image_id)));
        }
        Ok(DatasetSplit {
            name: name.into(),
            images,
        })
    }

    pub fn ground_truths(&self) -> Vec<GroundTruth> {
        self.images
            .iter()
            .flat_map(|img| {
                img.objects.iter().map(|&(class_id, bbox)| GroundTruth {
                    image_id: img.image_id.clone(),
                    class_id,
                    bbox,
                })
            })
            .collect()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.iter().map(|i| i.image_id.as_str())
    }

    pub fn instance_count(&self) -> usize {
        self.images.iter().map(|i| i.objects.len()).sum()
    }
}

fn parse_number(token: &str, path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        token: token.to_string(),
        message: format!("{field} is not a decimal number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            token: token.to_string(),
            message: format!("{field} must be finite"),
        });
    }
    Ok(v)
}

fn parse_class(token: &str, path: &Path, line: usize, classes: &ClassList) -> Result<usize> {
    let id: usize = token.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        token: token.to_string(),
        message: "class id is not a non-negative integer".into(),
    })?;
    if id >= classes.len() {
        return Err(Error::InvalidRecord {
            path: path.to_path_buf(),
            line,
            message: format!(
                "class id {id} outside class range 0..{} (token `{token}`)",
                classes.len() - 1
            ),
        });
    }
    Ok(id)
}

fn parse_box(tokens: &[&str], path: &Path, line: usize) -> Result<BBox> {
    let mut v = [0.0; 4];
    for (slot, (tok, field)) in v.iter_mut().zip(tokens.iter().zip(["cx", "cy", "w", "h"])) {
        *slot = parse_number(tok, path, line, field)?;
    }
    BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::InvalidRecord {
        path: path.to_path_buf(),
        line,
        message: format!("{e} (tokens `{}`)", tokens.join(" ")),
    })
}

fn split_fields(raw: &str) -> Vec<&str> {
    raw.split([' ', '\t']).filter(|t| !t.is_empty()).collect()
}

fn field_count_error(path: &Path, line: usize, raw: &str, expected: usize) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        token: raw.trim().to_string(),
        message: format!("expected {expected} fields"),
    }
}

/// Parses the text of one label file.
pub fn parse_label_text(text: &str, path: &Path, classes: &ClassList) -> Result<Vec<(usize, BBox)>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields = split_fields(raw.trim_end_matches('\r'));
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(field_count_error(path, line, raw, 5));
        }
        let class = parse_class(fields[0], path, line, classes)?;
        out.push((class, parse_box(&fields[1..], path, line)?));
    }
    Ok(out)
}

/// Parses the text of one prediction file.
pub fn parse_prediction_text(
    text: &str,
    path: &Path,
    image_id: &str,
    classes: &ClassList,
) -> Result<Vec<Detection>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields = split_fields(raw.trim_end_matches('\r'));
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(field_count_error(path, line, raw, 6));
        }
        let class_id = parse_class(fields[0], path, line, classes)?;
        let confidence = parse_number(fields[1], path, line, "confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidRecord {
                path: path.to_path_buf(),
                line,
                message: format!("confidence {confidence} outside [0, 1] (token `{}`)", fields[1]),
            });
        }
        out.push(Detection {
            image_id: image_id.to_string(),
            class_id,
            bbox: parse_box(&fields[2..], path, line)?,
            confidence,
        });
    }
    Ok(out)
}

fn stem_of(path: &Path) -> Option<String> {
    path.file_stem().and_then(|s| s.to_str()).map(str::to_string)
}

/// `*.txt` files directly inside `dir`, keyed by stem.
fn text_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = stem_of(&path) {
                out.insert(stem, path);
            }
        }
    }
    Ok(out)
}

const IMAGE_EXTENSIONS: [&str; 7] = ["jpg", "jpeg", "png", "bmp", "webp", "tif", "tiff"];

fn image_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if path.is_file() && is_image {
            if let Some(stem) = stem_of(&path) {
                out.insert(stem);
            }
        }
    }
    Ok(out)
}

/// Reads a manifest: one image stem per line.
pub fn read_manifest(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Loads every `*.txt` label file in `label_dir`; each becomes one image.
pub fn load_labels(label_dir: &Path, classes: &ClassList) -> Result<DatasetSplit> {
    let files = text_files(label_dir)?;
    let stems: Vec<String> = files.keys().cloned().collect();
    load_stems(&files, &stems, classes, split_name(label_dir))
}

fn split_name(dir: &Path) -> String {
    let name = dir.file_name().and_then(|s| s.to_str()).unwrap_or("split");
    if name == "labels" {
        dir.parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or(name)
            .to_string()
    } else {
        name.to_string()
    }
}

fn load_stems(
    files: &BTreeMap<String, PathBuf>,
    stems: &[String],
    classes: &ClassList,
    name: String,
) -> Result<DatasetSplit> {
    let images = stems
        .par_iter()
        .map(|stem| {
            let objects = match files.get(stem) {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    parse_label_text(&text, path, classes)?
                }
                None => Vec::new(),
            };
            Ok(ImageLabels {
                image_id: stem.clone(),
                objects,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetSplit::new(name, images)
}

/// Loads a split laid out as `root/images` + `root/labels`.
///
/// The image set comes from `manifest` when given, otherwise from the image
/// files under `images/`, otherwise from the label files. Images without a
/// label file have no objects. A label file whose stem is not in the image
/// set is a validation error. `root` may also point at a bare labels
/// directory.
pub fn load_split(root: &Path, classes: &ClassList, manifest: Option<&Path>) -> Result<DatasetSplit> {
    let labels_dir = if root.join("labels").is_dir() {
        root.join("labels")
    } else {
        root.to_path_buf()
    };
    if !labels_dir.is_dir() {
        return Err(Error::io(
            &labels_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "label directory not found"),
        ));
    }
    let files = text_files(&labels_dir)?;
    let images_dir = root.join("images");
    let stems: BTreeSet<String> = if let Some(m) = manifest {
        read_manifest(m)?.into_iter().collect()
    } else if images_dir.is_dir() {
        image_stems(&images_dir)?
    } else {
        files.keys().cloned().collect()
    };
    if let Some(orphan) = files.keys().find(|s| !stems.contains(*s)) {
        return Err(Error::Validation(format!(
            "label file {} has no matching image",
            files[orphan].display()
        )));
    }
    let stems: Vec<String> = stems.into_iter().collect();
    load_stems(&files, &stems, classes, split_name(root))
}

/// Outcome of checking every label file of a split without stopping at the
/// first bad one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub images: usize,
    pub instances: usize,
    pub histogram: BTreeMap<String, usize>,
    pub zero_instance_classes: Vec<String>,
    /// One message per failing file, each naming file and line.
    pub errors: Vec<String>,
}

impl ValidationSummary {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks a split laid out like [`load_split`] expects, collecting every
/// failing file. Only directory-level I/O problems are returned as `Err`.
pub fn validate_split(root: &Path, classes: &ClassList, manifest: Option<&Path>) -> Result<ValidationSummary> {
    let labels_dir = if root.join("labels").is_dir() {
        root.join("labels")
    } else {
        root.to_path_buf()
    };
    let files = text_files(&labels_dir)?;
    let images_dir = root.join("images");
    let stems: BTreeSet<String> = if let Some(m) = manifest {
        read_manifest(m)?.into_iter().collect()
    } else if images_dir.is_dir() {
        image_stems(&images_dir)?
    } else {
        files.keys().cloned().collect()
    };

    let mut errors = Vec::new();
    for (stem, path) in &files {
        if !stems.contains(stem) {
            errors.push(format!("{}: label file has no matching image", path.display()));
        }
    }
    let parsed: Vec<Result<Vec<(usize, BBox)>>> = files
        .par_iter()
        .map(|(_, path)| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_label_text(&text, path, classes)
        })
        .collect();
    let mut images = Vec::new();
    for ((stem, _), outcome) in files.iter().zip(parsed) {
        match outcome {
            Ok(objects) => images.push(ImageLabels {
                image_id: stem.clone(),
                objects,
            }),
            Err(e) => errors.push(e.to_string()),
        }
    }
    for stem in &stems {
        if !files.contains_key(stem) {
            images.push(ImageLabels {
                image_id: stem.clone(),
                objects: Vec::new(),
            });
        }
    }
    let split = DatasetSplit::new(split_name(root), images)?;
    let histogram = class_histogram(&split, classes);
    let zero_instance_classes = classes
        .names()
        .iter()
        .filter(|n| histogram[n.as_str()] == 0)
        .cloned()
        .collect();
    Ok(ValidationSummary {
        images: stems.len(),
        instances: split.instance_count(),
        histogram,
        zero_instance_classes,
        errors,
    })
}

/// Loads prediction files from `pred_dir` (`*.txt`, keyed by stem).
///
/// Returns detections for all files found. Callers pairing with a ground
/// truth split should use [`load_predictions_for`].
pub fn load_predictions(pred_dir: &Path, classes: &ClassList) -> Result<Vec<Detection>> {
    let files = text_files(pred_dir)?;
    let per_file = files
        .par_iter()
        .map(|(stem, path)| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_prediction_text(&text, path, stem, classes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_file.into_iter().flatten().collect())
}

/// Loads predictions and checks every file belongs to an image of `split`.
/// Images with no prediction file simply have no detections.
pub fn load_predictions_for(pred_dir: &Path, classes: &ClassList, split: &DatasetSplit) -> Result<Vec<Detection>> {
    let pred_dir = if pred_dir.join("labels").is_dir() {
        pred_dir.join("labels")
    } else {
        pred_dir.to_path_buf()
    };
    let known: BTreeSet<&str> = split.image_ids().collect();
    let files = text_files(&pred_dir)?;
    if let Some((_, path)) = files.iter().find(|(s, _)| !known.contains(s.as_str())) {
        return Err(Error::Validation(format!(
            "prediction file {} does not correspond to any image in split `{}`",
            path.display(),
            split.name
        )));
    }
    load_predictions(&pred_dir, classes)
}

/// Instance count per class name, zero-instance classes included.
pub fn class_histogram(split: &DatasetSplit, classes: &ClassList) -> BTreeMap<String, usize> {
    let mut counts = vec![0usize; classes.len()];
    for img in &split.images {
        for &(c, _) in &img.objects {
            counts[c] += 1;
        }
    }
    classes.names().iter().cloned().zip(counts).collect()
}

/// Renders one label file with six decimal places per coordinate.
pub fn serialize_labels(objects: &[(usize, BBox)]) -> String {
    let mut out = String::new();
    for (c, b) in objects {
        let _ = writeln!(out, "{c} {:.6} {:.6} {:.6} {:.6}", b.cx(), b.cy(), b.w(), b.h());
    }
    out
}

/// Renders one prediction file with six decimal places.
pub fn serialize_predictions(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        let b = d.bbox;
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
            d.class_id,
            d.confidence,
            b.cx(),
            b.cy(),
            b.w(),
            b.h()
        );
    }
    out
}
