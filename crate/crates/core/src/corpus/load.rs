//! Readers for FOIL annotation files, MSCOCO instance files and detector
//! output in the MSCOCO results layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use super::{Corpus, Example, ImageRecord, Inventory, Label, ObjectBag, PosSubset};
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Sentinel the FOIL release uses in place of foil/target words on REAL rows.
const ORIG_SENTINEL: &str = "ORIG";

/// One split of a FOIL-style release: the caption file and the MSCOCO
/// instances file describing its images.
#[derive(Debug, Clone)]
pub struct FoilSplit {
    pub foil_path: PathBuf,
    pub instances_path: PathBuf,
}

impl FoilSplit {
    pub fn new(foil_path: impl Into<PathBuf>, instances_path: impl Into<PathBuf>) -> Self {
        Self {
            foil_path: foil_path.into(),
            instances_path: instances_path.into(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Int(i64),
    Str(String),
}

impl RawId {
    fn into_string(self) -> String {
        match self {
            RawId::Int(i) => i.to_string(),
            RawId::Str(s) => s,
        }
    }
}

#[derive(Deserialize)]
struct FoilAnnotation {
    image_id: RawId,
    caption: String,
    foil: bool,
    #[serde(default)]
    foil_word: Option<String>,
    #[serde(default)]
    target_word: Option<String>,
}

#[derive(Deserialize)]
struct InstanceImage {
    id: RawId,
}

#[derive(Deserialize)]
struct InstanceAnnotation {
    image_id: RawId,
    category_id: i64,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Value::Null);
    }
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, 0, e))
}

fn array_field(path: &Path, root: &Value, field: &str) -> Result<Vec<Value>> {
    match root.get(field) {
        Some(Value::Array(items)) => Ok(items.clone()),
        Some(_) => Err(Error::malformed(path, 0, format!("\"{field}\" is not an array"))),
        None => Ok(Vec::new()),
    }
}

/// Parse an MSCOCO instances file into gold object bags keyed by image id.
fn load_instances(path: &Path, inventory: &Inventory) -> Result<BTreeMap<String, ObjectBag>> {
    let root = read_json(path)?;
    let mut bags: BTreeMap<String, ObjectBag> = BTreeMap::new();
    for (index, item) in array_field(path, &root, "images")?.into_iter().enumerate() {
        let image: InstanceImage =
            serde_json::from_value(item).map_err(|e| Error::malformed(path, index, e))?;
        bags.entry(image.id.into_string()).or_default();
    }
    for (index, item) in array_field(path, &root, "annotations")?.into_iter().enumerate() {
        let ann: InstanceAnnotation =
            serde_json::from_value(item).map_err(|e| Error::malformed(path, index, e))?;
        let category = u32::try_from(ann.category_id)
            .ok()
            .and_then(|id| inventory.by_coco_id(id))
            .ok_or(Error::UnknownCategory(ann.category_id))?;
        bags.entry(ann.image_id.into_string()).or_default().add(category, 1);
    }
    Ok(bags)
}

fn meaningful(word: Option<String>) -> Option<String> {
    word.map(|w| tokenize(&w).join(" "))
        .filter(|w| !w.is_empty() && !w.eq_ignore_ascii_case(ORIG_SENTINEL))
}

/// Load one split: its examples plus the image records they reference.
pub fn load_foil_split(
    split: &FoilSplit,
    inventory: &Inventory,
    pos_subset: PosSubset,
) -> Result<(Vec<Example>, BTreeMap<String, ImageRecord>)> {
    let bags = load_instances(&split.instances_path, inventory)?;
    let path = split.foil_path.as_path();
    let root = read_json(path)?;
    let records = match &root {
        Value::Array(items) => items.clone(),
        Value::Null => Vec::new(),
        _ => array_field(path, &root, "annotations")?,
    };

    let mut examples = Vec::with_capacity(records.len());
    let mut images = BTreeMap::new();
    for (index, item) in records.into_iter().enumerate() {
        let ann: FoilAnnotation =
            serde_json::from_value(item).map_err(|e| Error::malformed(path, index, e))?;
        let image_id = ann.image_id.into_string();
        let Some(gold) = bags.get(&image_id) else {
            return Err(Error::UnknownImage(image_id));
        };
        let mut example = Example::real(image_id.clone(), &ann.caption, pos_subset);
        if ann.foil {
            let foil_word = meaningful(ann.foil_word);
            let original_word = meaningful(ann.target_word);
            if foil_word.is_none() || original_word.is_none() {
                return Err(Error::malformed(
                    path,
                    index,
                    "FOIL record is missing its foil_word/target_word annotation",
                ));
            }
            example.label = Label::Foil;
            example.foil_word = foil_word;
            example.original_word = original_word;
        }
        example.validate().map_err(|e| Error::malformed(path, index, e))?;
        images
            .entry(image_id.clone())
            .or_insert_with(|| ImageRecord::new(image_id, gold.clone()));
        examples.push(example);
    }
    Ok((examples, images))
}

/// Load a FOIL-style release. `test` may be omitted, leaving the test split
/// empty.
pub fn load_foil_json(
    train: &FoilSplit,
    test: Option<&FoilSplit>,
    pos_subset: PosSubset,
) -> Result<Corpus> {
    let inventory = Inventory::mscoco();
    let (train_examples, mut images) = load_foil_split(train, &inventory, pos_subset)?;
    let mut test_examples = Vec::new();
    if let Some(test) = test {
        let (examples, test_images) = load_foil_split(test, &inventory, pos_subset)?;
        for (id, record) in test_images {
            match images.get(&id) {
                Some(existing) if existing != &record => {
                    return Err(Error::InvalidExample(format!(
                        "image {id} has different annotations in train and test"
                    )))
                }
                Some(_) => {}
                None => {
                    images.insert(id, record);
                }
            }
        }
        test_examples = examples;
    }
    Corpus::new(train_examples, test_examples, images, inventory, pos_subset)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectionReport {
    /// Corpus images with no entry in the detections file.
    pub missing_images: usize,
    /// Detections kept at or above the threshold.
    pub kept: usize,
    pub below_threshold: usize,
    /// Detections for images the corpus does not contain.
    pub unmatched: usize,
}

#[derive(Deserialize)]
struct RawDetection {
    image_id: RawId,
    category_id: i64,
    score: Value,
}

fn parse_confidence(value: &Value) -> Option<f64> {
    let parsed = match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }?;
    parsed.is_finite().then_some(parsed)
}

/// Attach predicted objects from a detections file. A detection counts when
/// its confidence is at least `threshold`.
pub fn load_detections(
    path: &Path,
    corpus: &Corpus,
    threshold: f64,
) -> Result<(Corpus, DetectionReport)> {
    let root = read_json(path)?;
    let records = match root {
        Value::Null => Vec::new(),
        Value::Array(items) => items,
        _ => array_field(path, &root, "annotations")?,
    };
    let mut predicted: BTreeMap<String, ObjectBag> = BTreeMap::new();
    let mut report = DetectionReport::default();
    for (index, item) in records.into_iter().enumerate() {
        let det: RawDetection =
            serde_json::from_value(item).map_err(|e| Error::malformed(path, index, e))?;
        let category = u32::try_from(det.category_id)
            .ok()
            .and_then(|id| corpus.categories.by_coco_id(id))
            .ok_or(Error::UnknownCategory(det.category_id))?;
        let confidence = parse_confidence(&det.score).ok_or_else(|| {
            Error::malformed(path, index, format!("unparseable confidence {}", det.score))
        })?;
        let image_id = det.image_id.into_string();
        if !corpus.images.contains_key(&image_id) {
            report.unmatched += 1;
            continue;
        }
        let bag = predicted.entry(image_id).or_default();
        if confidence >= threshold {
            bag.add(category, 1);
            report.kept += 1;
        } else {
            report.below_threshold += 1;
        }
    }

    let mut out = corpus.clone();
    for (id, image) in out.images.iter_mut() {
        image.predicted_objects = Some(predicted.remove(id).unwrap_or_else(|| {
            report.missing_images += 1;
            ObjectBag::new()
        }));
    }
    if report.missing_images > 0 {
        log::warn!(
            "{} of {} images have no detections in {}",
            report.missing_images,
            out.images.len(),
            path.display()
        );
    }
    Ok((out, report))
}
