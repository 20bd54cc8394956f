//! A trained network bundled with the feature pipeline it was trained under,
//! and its self-describing model file.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Example, ImageRecord, Label};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, FeatureConfig, Featurizer, ImageSpec, Standardizer, TextFeature, TextSpec, Vocabulary};
use crate::nn::{
    train, Architecture, ImageMode, LstmDims, LstmInput, LstmModel, MlpModel, Network, ParamSet, Prediction, TrainConfig,
    TrainLog, DEFAULT_HIDDEN,
};
use crate::rng;

const FORMAT_TAG: &str = "foilcap-model";
const FORMAT_VERSION: u32 = 1;

/// Architecture, features and layer widths of a classifier to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub features: FeatureConfig,
    pub mlp_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// MM-LSTM: project the image into the initial cell state as well as the
    /// initial hidden state.
    pub init_cell: bool,
}

impl ModelSpec {
    /// Widths used throughout: MLP 100-100, LSTM embeddings 100, hidden 200.
    pub fn standard(architecture: Architecture, image: ImageSpec, text: TextSpec) -> Self {
        Self {
            architecture,
            features: FeatureConfig::new(image, text),
            mlp_hidden: DEFAULT_HIDDEN.to_vec(),
            embed_dim: 100,
            hidden_dim: 200,
            init_cell: true,
        }
    }

    /// Default text features for an architecture: BOW for the MLP, tokens
    /// for the recurrent models.
    pub fn default_text(architecture: Architecture) -> TextSpec {
        match architecture {
            Architecture::Mlp => TextSpec::Bow,
            Architecture::Lstm | Architecture::MmLstm => TextSpec::Tokens,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.features;
        if f.image == ImageSpec::None && f.text == TextSpec::None {
            return Err(Error::Config("a model needs image features, text features, or both".into()));
        }
        match self.architecture {
            Architecture::Mlp if f.text == TextSpec::Tokens => {
                Err(Error::Config("the MLP consumes bag-of-words text; use --text bow".into()))
            }
            Architecture::Lstm | Architecture::MmLstm if f.text != TextSpec::Tokens => {
                Err(Error::Config(format!("{} requires token-sequence text", self.architecture)))
            }
            Architecture::MmLstm if f.image == ImageSpec::None => {
                Err(Error::Config("mm-lstm is initialized from the image; image features are required".into()))
            }
            _ => Ok(()),
        }
    }

    fn image_mode(&self) -> ImageMode {
        match (self.architecture, self.features.image) {
            (Architecture::MmLstm, _) => ImageMode::InitHidden,
            (_, ImageSpec::None) => ImageMode::NoImage,
            _ => ImageMode::AppendToFinal,
        }
    }

    /// Short descriptor in the style of result-table row labels.
    pub fn descriptor(&self) -> String {
        let image = self.features.image.to_string();
        let text = self.features.text.to_string();
        format!("{image}+{text}+{}", self.architecture)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkParams {
    Mlp(MlpModel),
    Lstm(LstmModel),
}

impl NetworkParams {
    fn params(&self) -> &dyn ParamSetView {
        match self {
            NetworkParams::Mlp(m) => m,
            NetworkParams::Lstm(m) => m,
        }
    }
}

/// Object-safe slice of [`ParamSet`] used for serialization.
trait ParamSetView {
    fn views(&self) -> Vec<crate::nn::TensorView<'_>>;
}

impl<T: ParamSet> ParamSetView for T {
    fn views(&self) -> Vec<crate::nn::TensorView<'_>> {
        self.tensors()
    }
}

/// Trained network plus its feature pipeline.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub spec: ModelSpec,
    pub featurizer: Featurizer,
    pub network: NetworkParams,
    pub train_config: TrainConfig,
}

fn mlp_input(model: &MlpModel, featurizer: &Featurizer, image: &ImageRecord, tokens: &[String]) -> Result<crate::nn::SparseInput> {
    let f = featurizer.featurize(image, tokens)?;
    model.assemble_input(&f.image, &f.text)
}

fn lstm_input(featurizer: &Featurizer, image: &ImageRecord, tokens: &[String], mode: ImageMode) -> Result<LstmInput> {
    let f = featurizer.featurize(image, tokens)?;
    let TextFeature::Tokens(seq) = f.text else {
        return Err(Error::Config("recurrent models need token-sequence text".into()));
    };
    let image = if mode == ImageMode::NoImage { Vec::new() } else { f.image.values };
    Ok(LstmInput {
        image,
        tokens: seq.active().to_vec(),
    })
}

fn collect_inputs<I: Send>(
    examples: &[Example],
    corpus: &Corpus,
    build: impl Fn(&ImageRecord, &[String]) -> Result<I> + Sync,
) -> Result<Vec<(I, Label)>> {
    examples
        .par_iter()
        .map(|e| Ok((build(corpus.image(e), &e.tokens)?, e.label)))
        .collect()
}

impl Classifier {
    /// Fit features on `corpus.train` and train a freshly initialized network.
    pub fn fit(
        spec: &ModelSpec,
        corpus: &Corpus,
        embeddings: Option<Arc<EmbeddingTable>>,
        config: &TrainConfig,
    ) -> Result<(Self, TrainLog)> {
        spec.validate()?;
        if corpus.train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let featurizer = Featurizer::fit(spec.features, corpus, embeddings)?;
        let mut init = rng::stream(config.seed, 0);
        let (network, log) = match spec.architecture {
            Architecture::Mlp => {
                let model = MlpModel::new(featurizer.image_dim, featurizer.text_dim(), &spec.mlp_hidden, &mut init);
                let data = collect_inputs(&corpus.train, corpus, |img, toks| mlp_input(&model, &featurizer, img, toks))?;
                let (model, log) = train(model, &data, config)?;
                (NetworkParams::Mlp(model), log)
            }
            Architecture::Lstm | Architecture::MmLstm => {
                let mode = spec.image_mode();
                let dims = LstmDims {
                    vocab_size: featurizer.vocab.len(),
                    embed_dim: spec.embed_dim,
                    hidden_dim: spec.hidden_dim,
                    image_dim: featurizer.image_dim,
                    mode,
                    init_cell: spec.init_cell,
                };
                let model = LstmModel::new(dims, &mut init);
                let data = collect_inputs(&corpus.train, corpus, |img, toks| lstm_input(&featurizer, img, toks, mode))?;
                if let Some(i) = data.iter().position(|(x, _)| x.tokens.is_empty()) {
                    return Err(Error::InvalidExample(format!(
                        "training caption {i} of image {} has no tokens",
                        corpus.train[i].image_id
                    )));
                }
                let (model, log) = train(model, &data, config)?;
                (NetworkParams::Lstm(model), log)
            }
        };
        Ok((
            Self {
                spec: spec.clone(),
                featurizer,
                network,
                train_config: *config,
            },
            log,
        ))
    }

    pub fn consumes_text(&self) -> bool {
        self.spec.features.text != TextSpec::None
    }

    pub fn needs_embeddings(&self) -> bool {
        self.featurizer.needs_embeddings()
    }

    pub fn attach_embeddings(mut self, table: Arc<EmbeddingTable>) -> Result<Self> {
        self.featurizer = self.featurizer.with_embeddings(table)?;
        Ok(self)
    }

    /// Score a caption; an empty caption is scored from the initial state for
    /// recurrent models.
    pub fn score(&self, image: &ImageRecord, tokens: &[String]) -> Result<Prediction> {
        match &self.network {
            NetworkParams::Mlp(m) => m.predict(&mlp_input(m, &self.featurizer, image, tokens)?),
            NetworkParams::Lstm(m) => m.predict(&lstm_input(&self.featurizer, image, tokens, m.dims.mode)?),
        }
    }

    /// As [`Classifier::score`], but recurrent models reject empty captions.
    pub fn predict(&self, image: &ImageRecord, tokens: &[String]) -> Result<Prediction> {
        if matches!(self.network, NetworkParams::Lstm(_)) && tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        self.score(image, tokens)
    }

    pub fn to_file(&self) -> ModelFile {
        let network = match &self.network {
            NetworkParams::Mlp(m) => NetworkShape::Mlp {
                image_dim: m.image_dim,
                text_dim: m.text_dim,
                hidden: m.hidden_widths(),
            },
            NetworkParams::Lstm(m) => NetworkShape::Lstm(m.dims),
        };
        ModelFile {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            architecture: self.spec.architecture,
            spec: self.spec.clone(),
            vocabulary_sha256: self.featurizer.vocab.fingerprint(),
            vocabulary: self.featurizer.vocab.clone(),
            n_categories: self.featurizer.n_categories,
            image_dim: self.featurizer.image_dim,
            standardizer: self.featurizer.standardizer.clone(),
            network,
            tensors: self
                .network
                .params()
                .views()
                .into_iter()
                .map(|t| StoredTensor {
                    name: t.name,
                    shape: t.shape,
                    data: t.data.to_vec(),
                })
                .collect(),
            train_config: self.train_config,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format != FORMAT_TAG || file.version != FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported format {:?} version {}",
                file.format, file.version
            )));
        }
        if file.vocabulary.fingerprint() != file.vocabulary_sha256 {
            return Err(Error::ModelFile("vocabulary hash does not match the stored vocabulary".into()));
        }
        let featurizer = Featurizer::from_parts(
            file.spec.features,
            file.vocabulary,
            file.n_categories,
            file.image_dim,
            file.standardizer,
        );
        let tensors: Vec<(Vec<usize>, Vec<f64>)> = file.tensors.iter().map(|t| (t.shape.clone(), t.data.clone())).collect();
        let names: Vec<&str> = file.tensors.iter().map(|t| t.name.as_str()).collect();
        let check_names = |expected: Vec<String>| -> Result<()> {
            if expected.iter().map(String::as_str).ne(names.iter().copied()) {
                return Err(Error::ModelFile(format!("tensor names {names:?} do not match {expected:?}")));
            }
            Ok(())
        };
        let network = match file.network {
            NetworkShape::Mlp {
                image_dim,
                text_dim,
                hidden,
            } => {
                let mut m = MlpModel::zeros(image_dim, text_dim, &hidden);
                check_names(m.tensors().into_iter().map(|t| t.name).collect())?;
                m.load_tensors(&tensors).map_err(Error::ModelFile)?;
                NetworkParams::Mlp(m)
            }
            NetworkShape::Lstm(dims) => {
                let mut m = LstmModel::zeros(dims);
                check_names(m.tensors().into_iter().map(|t| t.name).collect())?;
                m.load_tensors(&tensors).map_err(Error::ModelFile)?;
                NetworkParams::Lstm(m)
            }
        };
        Ok(Self {
            spec: file.spec,
            featurizer,
            network,
            train_config: file.train_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_file()).expect("model files serialize");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }
}

/// Anything that labels (image, caption) pairs: trained classifiers, and
/// hand-built models in tests.
pub trait CaptionModel: Sync {
    fn predict(&self, image: &ImageRecord, tokens: &[String]) -> Result<Prediction>;

    /// Scoring used on perturbed captions, which may be empty.
    fn score(&self, image: &ImageRecord, tokens: &[String]) -> Result<Prediction> {
        self.predict(image, tokens)
    }

    fn consumes_text(&self) -> bool;

    fn descriptor(&self) -> String;

    fn seed(&self) -> Option<u64> {
        None
    }
}

impl CaptionModel for Classifier {
    fn predict(&self, image: &ImageRecord, tokens: &[String]) -> Result<Prediction> {
        Classifier::predict(self, image, tokens)
    }

    fn score(&self, image: &ImageRecord, tokens: &[String]) -> Result<Prediction> {
        Classifier::score(self, image, tokens)
    }

    fn consumes_text(&self) -> bool {
        Classifier::consumes_text(self)
    }

    fn descriptor(&self) -> String {
        self.spec.descriptor()
    }

    fn seed(&self) -> Option<u64> {
        Some(self.train_config.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NetworkShape {
    Mlp {
        image_dim: usize,
        text_dim: usize,
        hidden: Vec<usize>,
    },
    Lstm(LstmDims),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk model: everything needed to reproduce predictions bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub spec: ModelSpec,
    pub vocabulary_sha256: String,
    pub vocabulary: Vocabulary,
    pub n_categories: usize,
    pub image_dim: usize,
    pub standardizer: Option<Standardizer>,
    pub network: NetworkShape,
    pub tensors: Vec<StoredTensor>,
    pub train_config: TrainConfig,
}
