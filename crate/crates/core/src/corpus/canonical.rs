//! Canonical on-disk corpus: a directory holding `train.jsonl` and
//! `test.jsonl`, one example per line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CategoryId, Corpus, Example, ImageRecord, Inventory, Label, ObjectBag, PosSubset};
use crate::error::{Error, Result};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    image_id: String,
    tokens: Vec<String>,
    label: Label,
    pos_subset: PosSubset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    foil_word: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original_word: Option<String>,
    gold_objects: Vec<CategoryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicted_objects: Option<Vec<CategoryId>>,
}

pub fn write_examples(path: &Path, examples: &[Example], images: &BTreeMap<String, ImageRecord>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for e in examples {
        let image = images
            .get(&e.image_id)
            .ok_or_else(|| Error::UnknownImage(e.image_id.clone()))?;
        let record = Record {
            image_id: e.image_id.clone(),
            tokens: e.tokens.clone(),
            label: e.label,
            pos_subset: e.pos_subset,
            foil_word: e.foil_word.clone(),
            original_word: e.original_word.clone(),
            gold_objects: image.gold_objects.to_instances(),
            predicted_objects: image.predicted_objects.as_ref().map(ObjectBag::to_instances),
        };
        let line = serde_json::to_string(&record).expect("records always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write `corpus` into `dir` (created if needed).
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_examples(&dir.join(TRAIN_FILE), &corpus.train, &corpus.images)?;
    write_examples(&dir.join(TEST_FILE), &corpus.test, &corpus.images)
}

/// Read one canonical file, merging image records into `images`.
pub fn read_examples(path: &Path, images: &mut BTreeMap<String, ImageRecord>) -> Result<Vec<Example>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(&line).map_err(|e| Error::malformed(path, index + 1, e))?;
        let record = ImageRecord {
            image_id: r.image_id.clone(),
            gold_objects: ObjectBag::from_instances(r.gold_objects),
            predicted_objects: r.predicted_objects.map(ObjectBag::from_instances),
        };
        match images.get(&r.image_id) {
            Some(existing) if existing != &record => {
                return Err(Error::malformed(
                    path,
                    index + 1,
                    format!("conflicting objects for image {}", r.image_id),
                ))
            }
            Some(_) => {}
            None => {
                images.insert(r.image_id.clone(), record);
            }
        }
        let example = Example {
            image_id: r.image_id,
            tokens: r.tokens,
            label: r.label,
            pos_subset: r.pos_subset,
            foil_word: r.foil_word,
            original_word: r.original_word,
        };
        example.validate().map_err(|e| Error::malformed(path, index + 1, e))?;
        examples.push(example);
    }
    Ok(examples)
}

/// Read a canonical corpus directory written by [`write_corpus`].
pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let mut images = BTreeMap::new();
    let train = read_examples(&dir.join(TRAIN_FILE), &mut images)?;
    let test_path = dir.join(TEST_FILE);
    let test = if test_path.exists() {
        read_examples(&test_path, &mut images)?
    } else {
        Vec::new()
    };
    let pos_subset = train
        .first()
        .or(test.first())
        .map(|e| e.pos_subset)
        .ok_or(Error::EmptyCorpus)?;
    if let Some(e) = train.iter().chain(&test).find(|e| e.pos_subset != pos_subset) {
        return Err(Error::InvalidExample(format!(
            "mixed part-of-speech subsets ({pos_subset} and {})",
            e.pos_subset
        )));
    }
    Corpus::new(train, test, images, Inventory::mscoco(), pos_subset)
}
