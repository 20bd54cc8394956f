//! From-scratch classifiers in double precision: an MLP over concatenated
//! features and a single-layer LSTM that either appends the image to its final
//! state or starts from it. Exact reverse-mode gradients and Adam.

mod adam;
mod loss;
mod lstm;
mod mlp;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;

pub use adam::{adam_update, AdamState};
pub use loss::{cross_entropy, softmax};
pub use lstm::{lstm_forward, ImageMode, LstmDims, LstmInput, LstmModel};
pub use mlp::{mlp_forward, Activation, DenseLayer, MlpModel, SparseInput, DEFAULT_HIDDEN};
pub use train::{backprop, train, EpochRecord, Network, TrainConfig, TrainLog};

/// Class probabilities and the argmax label (ties go to REAL).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probabilities: [f64; 2],
    pub label: Label,
}

impl Prediction {
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let label = if logits[1] > logits[0] { Label::Foil } else { Label::Real };
        Self {
            probabilities: softmax(logits),
            label,
        }
    }

    pub fn foil_probability(&self) -> f64 {
        self.probabilities[1]
    }
}

/// A read-only view of one parameter tensor.
#[derive(Debug)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Models and their gradients expose parameters as an ordered tensor list.
pub trait ParamSet {
    fn tensors(&self) -> Vec<TensorView<'_>>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn add_assign(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let theirs = other.tensors();
        for (mine, t) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(t.data) {
                *a += b;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Overwrite parameters from `(shape, data)` pairs in `tensors()` order.
    fn load_tensors(&mut self, source: &[(Vec<usize>, Vec<f64>)]) -> Result<(), String> {
        let shapes: Vec<Vec<usize>> = self.tensors().into_iter().map(|t| t.shape).collect();
        if shapes.len() != source.len() {
            return Err(format!("expected {} tensors, found {}", shapes.len(), source.len()));
        }
        for (i, (shape, (src_shape, _))) in shapes.iter().zip(source).enumerate() {
            if shape != src_shape {
                return Err(format!("tensor {i}: expected shape {shape:?}, found {src_shape:?}"));
            }
        }
        for (dst, (_, data)) in self.tensors_mut().into_iter().zip(source) {
            if dst.len() != data.len() {
                return Err("tensor length does not match its shape".into());
            }
            dst.copy_from_slice(data);
        }
        Ok(())
    }
}

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), row-major rows x cols.
pub(crate) fn glorot<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Vec<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Mlp,
    Lstm,
    MmLstm,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Mlp => "mlp",
            Architecture::Lstm => "lstm",
            Architecture::MmLstm => "mm-lstm",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "mlp" => Architecture::Mlp,
            "lstm" => Architecture::Lstm,
            "mm-lstm" | "mmlstm" => Architecture::MmLstm,
            other => return Err(format!("unknown classifier {other:?}")),
        })
    }
}
