//! Numeric features: bag-of-objects image vectors, bag-of-words and token
//! sequences for captions, and precomputed embeddings.

mod embedding;
mod vocab;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Example, ImageRecord, ObjectBag};
use crate::error::{Error, Result};

pub use embedding::{load_precomputed_embedding, synthetic_embeddings, EmbeddingTable, RESNET_POOL5_DIM};
pub use vocab::{bow_encode, build_vocab, encode_tokens, BowVector, TokenSequence, Vocabulary, PAD_INDEX, UNKNOWN_INDEX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectSource {
    Gold,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageFeatureKind {
    None,
    Mention,
    Frequency,
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeature {
    pub kind: ImageFeatureKind,
    pub values: Vec<f64>,
}

impl ImageFeature {
    pub fn none() -> Self {
        Self {
            kind: ImageFeatureKind::None,
            values: Vec::new(),
        }
    }
}

fn objects(image: &ImageRecord, source: ObjectSource) -> Result<&ObjectBag> {
    match source {
        ObjectSource::Gold => Ok(&image.gold_objects),
        ObjectSource::Predicted => image
            .predicted_objects
            .as_ref()
            .ok_or_else(|| Error::PredictedUnavailable(image.image_id.clone())),
    }
}

/// Binary presence vector over `n_categories` categories.
pub fn extract_mention(image: &ImageRecord, source: ObjectSource, n_categories: usize) -> Result<ImageFeature> {
    let bag = objects(image, source)?;
    let mut values = vec![0.0; n_categories];
    for id in bag.distinct() {
        values[id.index()] = 1.0;
    }
    Ok(ImageFeature {
        kind: ImageFeatureKind::Mention,
        values,
    })
}

/// Instance-count histogram over `n_categories` categories.
pub fn extract_frequency(image: &ImageRecord, source: ObjectSource, n_categories: usize) -> Result<ImageFeature> {
    let bag = objects(image, source)?;
    let mut values = vec![0.0; n_categories];
    for (id, count) in bag.iter() {
        values[id.index()] = count as f64;
    }
    Ok(ImageFeature {
        kind: ImageFeatureKind::Frequency,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ImageSpec {
    None,
    Mention { source: ObjectSource },
    Frequency { source: ObjectSource },
    Embedding,
}

impl fmt::Display for ImageSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ImageSpec::None => "none",
            ImageSpec::Mention { source: ObjectSource::Gold } => "gold-mention",
            ImageSpec::Mention { source: ObjectSource::Predicted } => "pred-mention",
            ImageSpec::Frequency { source: ObjectSource::Gold } => "gold-freq",
            ImageSpec::Frequency { source: ObjectSource::Predicted } => "pred-freq",
            ImageSpec::Embedding => "cnn",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ImageSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "none" | "-" => ImageSpec::None,
            "gold-mention" => ImageSpec::Mention { source: ObjectSource::Gold },
            "pred-mention" => ImageSpec::Mention { source: ObjectSource::Predicted },
            "gold-freq" => ImageSpec::Frequency { source: ObjectSource::Gold },
            "pred-freq" => ImageSpec::Frequency { source: ObjectSource::Predicted },
            "cnn" => ImageSpec::Embedding,
            other => return Err(format!("unknown image feature {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSpec {
    None,
    Bow,
    Tokens,
}

impl fmt::Display for TextSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextSpec::None => "none",
            TextSpec::Bow => "bow",
            TextSpec::Tokens => "tokens",
        })
    }
}

impl std::str::FromStr for TextSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "none" | "-" => TextSpec::None,
            "bow" => TextSpec::Bow,
            "tokens" | "lstm" => TextSpec::Tokens,
            other => return Err(format!("unknown text feature {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub image: ImageSpec,
    pub text: TextSpec,
    pub min_count: usize,
    pub max_len: usize,
    /// Standardize image features with train-split statistics.
    pub standardize: bool,
}

impl FeatureConfig {
    pub fn new(image: ImageSpec, text: TextSpec) -> Self {
        Self {
            image,
            text,
            min_count: 1,
            max_len: 20,
            standardize: false,
        }
    }
}

/// Per-dimension affine rescaling fit on training images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Option<Self> {
        let first = rows.first()?;
        let n = rows.len() as f64;
        let dim = first.len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Some(Self { mean, scale })
    }

    pub fn apply(&self, values: &mut [f64]) {
        for ((v, m), s) in values.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextFeature {
    None,
    Bow(BowVector),
    Tokens(TokenSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub image: ImageFeature,
    pub text: TextFeature,
}

/// Fitted feature pipeline: vocabulary, optional standardizer, and a handle on
/// the embedding table when CNN features are in use.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub config: FeatureConfig,
    pub vocab: Vocabulary,
    pub n_categories: usize,
    pub image_dim: usize,
    pub standardizer: Option<Standardizer>,
    embeddings: Option<Arc<EmbeddingTable>>,
}

impl Featurizer {
    /// Fit on the training split of `corpus`.
    pub fn fit(config: FeatureConfig, corpus: &Corpus, embeddings: Option<Arc<EmbeddingTable>>) -> Result<Self> {
        Self::fit_on(config, &corpus.train, corpus, embeddings)
    }

    pub fn fit_on(
        config: FeatureConfig,
        train: &[Example],
        corpus: &Corpus,
        embeddings: Option<Arc<EmbeddingTable>>,
    ) -> Result<Self> {
        let vocab = build_vocab(train, config.min_count);
        let n_categories = corpus.categories.len();
        let image_dim = match config.image {
            ImageSpec::None => 0,
            ImageSpec::Mention { .. } | ImageSpec::Frequency { .. } => n_categories,
            ImageSpec::Embedding => embeddings
                .as_ref()
                .map(|t| t.dim())
                .ok_or_else(|| Error::Config("CNN features requested without an embedding file".into()))?,
        };
        let mut featurizer = Self {
            config,
            vocab,
            n_categories,
            image_dim,
            standardizer: None,
            embeddings,
        };
        if config.standardize && config.image != ImageSpec::None {
            let rows = train
                .iter()
                .map(|e| featurizer.raw_image(corpus.image(e)).map(|f| f.values))
                .collect::<Result<Vec<_>>>()?;
            featurizer.standardizer = Standardizer::fit(&rows);
        }
        Ok(featurizer)
    }

    /// Rebuild from stored parts (model files).
    pub fn from_parts(
        config: FeatureConfig,
        vocab: Vocabulary,
        n_categories: usize,
        image_dim: usize,
        standardizer: Option<Standardizer>,
    ) -> Self {
        Self {
            config,
            vocab,
            n_categories,
            image_dim,
            standardizer,
            embeddings: None,
        }
    }

    pub fn with_embeddings(mut self, table: Arc<EmbeddingTable>) -> Result<Self> {
        if self.config.image == ImageSpec::Embedding && table.dim() != self.image_dim {
            return Err(Error::EmbeddingDimension {
                expected: self.image_dim,
                found: table.dim(),
            });
        }
        self.embeddings = Some(table);
        Ok(self)
    }

    pub fn needs_embeddings(&self) -> bool {
        self.config.image == ImageSpec::Embedding
    }

    /// Width of the dense text segment fed to an MLP.
    pub fn text_dim(&self) -> usize {
        match self.config.text {
            TextSpec::Bow => self.vocab.len(),
            TextSpec::None | TextSpec::Tokens => 0,
        }
    }

    fn raw_image(&self, image: &ImageRecord) -> Result<ImageFeature> {
        match self.config.image {
            ImageSpec::None => Ok(ImageFeature::none()),
            ImageSpec::Mention { source } => extract_mention(image, source, self.n_categories),
            ImageSpec::Frequency { source } => extract_frequency(image, source, self.n_categories),
            ImageSpec::Embedding => self
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::Config("CNN features requested without an embedding file".into()))?
                .get(&image.image_id),
        }
    }

    pub fn image_feature(&self, image: &ImageRecord) -> Result<ImageFeature> {
        let mut feature = self.raw_image(image)?;
        if let Some(s) = &self.standardizer {
            s.apply(&mut feature.values);
        }
        Ok(feature)
    }

    pub fn text_feature(&self, tokens: &[String]) -> TextFeature {
        match self.config.text {
            TextSpec::None => TextFeature::None,
            TextSpec::Bow => TextFeature::Bow(bow_encode(tokens, &self.vocab)),
            TextSpec::Tokens => TextFeature::Tokens(encode_tokens(tokens, &self.vocab, self.config.max_len)),
        }
    }

    pub fn featurize(&self, image: &ImageRecord, tokens: &[String]) -> Result<Features> {
        Ok(Features {
            image: self.image_feature(image)?,
            text: self.text_feature(tokens),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Inventory, ObjectBag};
    use proptest::prelude::*;

    fn record(inv: &Inventory, objs: &[(&str, u32)]) -> ImageRecord {
        ImageRecord::new("x", objs.iter().map(|(n, c)| (inv.by_name(n).unwrap(), *c)).collect())
    }

    #[test]
    fn mention_and_frequency_of_dog_person() {
        let inv = Inventory::mscoco();
        let img = record(&inv, &[("dog", 2), ("person", 1)]);
        let dog = inv.by_name("dog").unwrap().index();
        let person = inv.by_name("person").unwrap().index();
        let m = extract_mention(&img, ObjectSource::Gold, 80).unwrap();
        let f = extract_frequency(&img, ObjectSource::Gold, 80).unwrap();
        assert_eq!(m.values.len(), 80);
        assert_eq!(m.values.iter().sum::<f64>(), 2.0);
        assert_eq!((m.values[dog], m.values[person]), (1.0, 1.0));
        assert_eq!((f.values[dog], f.values[person]), (2.0, 1.0));
    }

    #[test]
    fn empty_and_full_images() {
        let inv = Inventory::mscoco();
        let empty = ImageRecord::new("e", ObjectBag::new());
        assert!(extract_mention(&empty, ObjectSource::Gold, 80).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(extract_frequency(&empty, ObjectSource::Gold, 80).unwrap().values.iter().all(|&v| v == 0.0));
        let full = ImageRecord::new("f", ObjectBag::from_instances(inv.categories().iter().map(|c| c.id)));
        assert!(extract_mention(&full, ObjectSource::Gold, 80).unwrap().values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn predicted_source_never_falls_back() {
        let inv = Inventory::mscoco();
        let img = record(&inv, &[("dog", 1)]);
        assert!(matches!(
            extract_frequency(&img, ObjectSource::Predicted, 80),
            Err(Error::PredictedUnavailable(_))
        ));
        assert!(matches!(
            extract_mention(&img, ObjectSource::Predicted, 80),
            Err(Error::PredictedUnavailable(_))
        ));
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["none", "gold-mention", "pred-mention", "gold-freq", "pred-freq", "cnn"] {
            assert_eq!(s.parse::<ImageSpec>().unwrap().to_string(), s);
        }
        for s in ["none", "bow", "tokens"] {
            assert_eq!(s.parse::<TextSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn standardizer_zero_variance_is_noop_scale() {
        let s = Standardizer::fit(&[vec![1.0, 2.0], vec![1.0, 4.0]]).unwrap();
        let mut v = vec![1.0, 3.0];
        s.apply(&mut v);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn mention_is_thresholded_frequency(counts in proptest::collection::vec(0u32..4, 80)) {
            let inv = Inventory::mscoco();
            let bag: ObjectBag = inv.categories().iter().zip(&counts).map(|(c, &n)| (c.id, n)).collect();
            let mut img = ImageRecord::new("p", bag.clone());
            img.predicted_objects = Some(bag);
            for source in [ObjectSource::Gold, ObjectSource::Predicted] {
                let m = extract_mention(&img, source, 80).unwrap();
                let f = extract_frequency(&img, source, 80).unwrap();
                let thresholded: Vec<f64> = f.values.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                prop_assert_eq!(m.values, thresholded);
                prop_assert_eq!(f.values.iter().sum::<f64>() as u64, img.gold_objects.total());
            }
        }
    }
}
