//! Examples, image records and corpora, plus loaders for FOIL-style
//! annotation files and a synthetic generator with controllable bias.

mod canonical;
mod categories;
mod foil;
mod load;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{contains_span, tokenize};

pub use canonical::{read_corpus, read_examples, write_corpus, write_examples, TEST_FILE, TRAIN_FILE};
pub use categories::{find_mentions, CategoryId, Inventory, Mention, ObjectCategory};
pub use foil::{foil_candidates, foil_caption, foil_caption_with, FoilSite};
pub use load::{load_detections, load_foil_json, load_foil_split, DetectionReport, FoilSplit};
pub use synth::{leaky_concentration, synth_generate, synth_generate_with, SynthConfig, DEFAULT_TEMPLATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Real,
    Foil,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Foil];

    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Foil => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "REAL",
            Label::Foil => "FOIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosSubset {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Preposition,
}

impl std::str::FromStr for PosSubset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "noun" => PosSubset::Noun,
            "verb" => PosSubset::Verb,
            "adjective" | "adj" => PosSubset::Adjective,
            "adverb" | "adv" => PosSubset::Adverb,
            "preposition" | "prep" => PosSubset::Preposition,
            other => return Err(format!("unknown part-of-speech subset {other:?}")),
        })
    }
}

impl fmt::Display for PosSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosSubset::Noun => "noun",
            PosSubset::Verb => "verb",
            PosSubset::Adjective => "adjective",
            PosSubset::Adverb => "adverb",
            PosSubset::Preposition => "preposition",
        })
    }
}

/// Multiset of object categories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectBag(BTreeMap<CategoryId, u32>);

impl ObjectBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, id: CategoryId, count: u32) {
        if count > 0 {
            *self.0.entry(id).or_insert(0) += count;
        }
    }

    pub fn count(&self, id: CategoryId) -> u32 {
        self.0.get(&id).copied().unwrap_or(0)
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.count(id) > 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (CategoryId, u32)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn distinct(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.0.keys().copied()
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|&v| v as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sorted id list with one entry per instance.
    pub fn to_instances(&self) -> Vec<CategoryId> {
        self.iter()
            .flat_map(|(id, n)| std::iter::repeat_n(id, n as usize))
            .collect()
    }

    pub fn from_instances(ids: impl IntoIterator<Item = CategoryId>) -> Self {
        let mut bag = Self::new();
        for id in ids {
            bag.add(id, 1);
        }
        bag
    }
}

impl FromIterator<(CategoryId, u32)> for ObjectBag {
    fn from_iter<I: IntoIterator<Item = (CategoryId, u32)>>(iter: I) -> Self {
        let mut bag = Self::new();
        for (id, n) in iter {
            bag.add(id, n);
        }
        bag
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub gold_objects: ObjectBag,
    /// `None` until a detections file has been attached.
    pub predicted_objects: Option<ObjectBag>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, gold_objects: ObjectBag) -> Self {
        Self {
            image_id: image_id.into(),
            gold_objects,
            predicted_objects: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub image_id: String,
    pub tokens: Vec<String>,
    pub label: Label,
    pub pos_subset: PosSubset,
    pub foil_word: Option<String>,
    pub original_word: Option<String>,
}

impl Example {
    pub fn real(image_id: impl Into<String>, caption: &str, pos_subset: PosSubset) -> Self {
        Self {
            image_id: image_id.into(),
            tokens: tokenize(caption),
            label: Label::Real,
            pos_subset,
            foil_word: None,
            original_word: None,
        }
    }

    pub fn caption(&self) -> String {
        self.tokens.join(" ")
    }

    /// Check the label/metadata invariants.
    pub fn validate(&self) -> Result<()> {
        match (self.label, &self.foil_word, &self.original_word) {
            (Label::Real, None, None) => Ok(()),
            (Label::Real, _, _) => Err(Error::InvalidExample(
                "REAL example carries foil metadata".into(),
            )),
            (Label::Foil, Some(foil), Some(orig)) => {
                if foil == orig {
                    return Err(Error::InvalidExample(format!(
                        "foil word equals original word {foil:?}"
                    )));
                }
                if !contains_span(&self.tokens, &tokenize(foil)) {
                    return Err(Error::InvalidExample(format!(
                        "foil word {foil:?} does not appear in caption"
                    )));
                }
                Ok(())
            }
            (Label::Foil, _, _) => Err(Error::InvalidExample(
                "FOIL example is missing its foil/original word".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub real: usize,
    pub foil: usize,
    pub total: usize,
}

impl SplitCounts {
    pub fn of(examples: &[Example]) -> Self {
        let foil = examples.iter().filter(|e| e.label == Label::Foil).count();
        Self {
            real: examples.len() - foil,
            foil,
            total: examples.len(),
        }
    }
}

/// Train and test examples over a shared set of images. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub images: BTreeMap<String, ImageRecord>,
    pub categories: Inventory,
    pub pos_subset: PosSubset,
}

impl Corpus {
    /// Assemble and validate a corpus.
    pub fn new(
        train: Vec<Example>,
        test: Vec<Example>,
        images: BTreeMap<String, ImageRecord>,
        categories: Inventory,
        pos_subset: PosSubset,
    ) -> Result<Self> {
        if train.is_empty() && test.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = BTreeSet::new();
        for e in &train {
            seen.insert((e.image_id.as_str(), e.tokens.as_slice()));
        }
        for e in train.iter().chain(&test) {
            if !images.contains_key(&e.image_id) {
                return Err(Error::UnknownImage(e.image_id.clone()));
            }
            e.validate()?;
        }
        if let Some(e) = test
            .iter()
            .find(|e| seen.contains(&(e.image_id.as_str(), e.tokens.as_slice())))
        {
            return Err(Error::InvalidExample(format!(
                "({}, {:?}) appears in both train and test",
                e.image_id,
                e.caption()
            )));
        }
        for image in images.values() {
            let bags = std::iter::once(&image.gold_objects).chain(image.predicted_objects.as_ref());
            for bag in bags {
                if let Some(bad) = bag.distinct().find(|id| id.index() >= categories.len()) {
                    return Err(Error::UnknownCategory(bad.0 as i64));
                }
            }
        }
        Ok(Self {
            train,
            test,
            images,
            categories,
            pos_subset,
        })
    }

    pub fn image(&self, example: &Example) -> &ImageRecord {
        // Every example's image was checked in `Corpus::new`.
        &self.images[&example.image_id]
    }

    pub fn train_counts(&self) -> SplitCounts {
        SplitCounts::of(&self.train)
    }

    pub fn test_counts(&self) -> SplitCounts {
        SplitCounts::of(&self.test)
    }

    pub fn has_predictions(&self) -> bool {
        self.images.values().all(|i| i.predicted_objects.is_some())
    }
}
