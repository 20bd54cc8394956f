//! Caption/image mismatch detection on FOIL-style data: corpus handling,
//! feature extraction, MLP and LSTM classifiers, evaluation and LIME audits.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod nn;
pub mod rng;
pub mod text;

pub use classifier::{CaptionModel, Classifier, ModelFile, ModelSpec};
pub use corpus::{Corpus, Example, ImageRecord, Label};
pub use error::{Error, ErrorKind, Result};
pub use eval::{ablate, evaluate, AblationSpec, Confusion, EvalReport};
pub use explain::{foil_word_hit_rate, lime_explain, Explanation, KernelConfig};
