use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, glorot, softmax, Network, ParamSet, Prediction, TensorView};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{BowVector, ImageFeature, TextFeature};

/// Two hidden layers of 100 units.
pub const DEFAULT_HIDDEN: [usize; 2] = [100, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Affine map `out = act(W x + b)` with `W` stored row-major (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weight: glorot(rng, out_dim, in_dim),
            ..Self::zeros(in_dim, out_dim, activation)
        }
    }

    fn activate(&self, z: &mut [f64]) {
        if self.activation == Activation::Relu {
            for v in z {
                *v = v.max(0.0);
            }
        }
    }

    fn forward_dense(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weight.chunks_exact(self.in_dim)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        self.activate(&mut out);
        out
    }

    fn forward_sparse(&self, x: &SparseInput) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weight.chunks_exact(self.in_dim)) {
            *o += x.entries.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
        }
        self.activate(&mut out);
        out
    }
}

/// Nonzero entries of the concatenated `[image ; text]` input, by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseInput {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseInput {
    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }
}

/// ReLU hidden layers followed by a two-logit identity head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub image_dim: usize,
    pub text_dim: usize,
    pub layers: Vec<DenseLayer>,
}

impl MlpModel {
    pub fn new<R: Rng + ?Sized>(image_dim: usize, text_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = image_dim + text_dim;
        for &h in hidden {
            layers.push(DenseLayer::glorot(width, h, Activation::Relu, rng));
            width = h;
        }
        layers.push(DenseLayer::glorot(width, 2, Activation::Identity, rng));
        Self {
            image_dim,
            text_dim,
            layers,
        }
    }

    pub fn zeros(image_dim: usize, text_dim: usize, hidden: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = image_dim + text_dim;
        for &h in hidden {
            layers.push(DenseLayer::zeros(width, h, Activation::Relu));
            width = h;
        }
        layers.push(DenseLayer::zeros(width, 2, Activation::Identity));
        Self {
            image_dim,
            text_dim,
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.image_dim + self.text_dim
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.out_dim).collect()
    }

    /// Concatenate the image vector with the densified bag of words.
    pub fn assemble_input(&self, image: &ImageFeature, text: &TextFeature) -> Result<SparseInput> {
        if image.values.len() != self.image_dim {
            return Err(Error::DimensionMismatch(format!(
                "image feature has {} values, model expects {}",
                image.values.len(),
                self.image_dim
            )));
        }
        let mut input = SparseInput::from_dense(&image.values);
        input.dim = self.input_dim();
        match text {
            TextFeature::Bow(bow) => self.push_bow(&mut input, bow)?,
            TextFeature::None if self.text_dim == 0 => {}
            TextFeature::None => {
                return Err(Error::DimensionMismatch("model expects a bag of words".into()));
            }
            TextFeature::Tokens(_) => {
                return Err(Error::DimensionMismatch("MLP consumes bag-of-words text, not token sequences".into()));
            }
        }
        Ok(input)
    }

    fn push_bow(&self, input: &mut SparseInput, bow: &BowVector) -> Result<()> {
        for (index, count) in bow.iter() {
            if index >= self.text_dim {
                return Err(Error::DimensionMismatch(format!(
                    "word index {index} outside text width {}",
                    self.text_dim
                )));
            }
            input.entries.push((self.image_dim + index, count as f64));
        }
        Ok(())
    }

    /// Outputs of every layer, last one being the logits.
    fn activations(&self, x: &SparseInput) -> Vec<Vec<f64>> {
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        outs.push(self.layers[0].forward_sparse(x));
        for layer in &self.layers[1..] {
            let next = layer.forward_dense(outs.last().expect("non-empty"));
            outs.push(next);
        }
        outs
    }

    pub fn logits(&self, x: &SparseInput) -> [f64; 2] {
        let out = self.activations(x).pop().expect("head layer");
        [out[0], out[1]]
    }
}

pub fn mlp_forward(model: &MlpModel, image: &ImageFeature, text: &BowVector) -> Result<Prediction> {
    let x = model.assemble_input(image, &TextFeature::Bow(text.clone()))?;
    Ok(Prediction::from_logits(model.logits(&x)))
}

impl ParamSet for MlpModel {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    TensorView {
                        name: format!("layer{i}.weight"),
                        shape: vec![l.out_dim, l.in_dim],
                        data: &l.weight,
                    },
                    TensorView {
                        name: format!("layer{i}.bias"),
                        shape: vec![l.out_dim],
                        data: &l.bias,
                    },
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.image_dim, self.text_dim, &self.hidden_widths())
    }
}

impl Network for MlpModel {
    type Input = SparseInput;

    fn forward_logits(&self, x: &SparseInput) -> Result<[f64; 2]> {
        if x.dim != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input width {} but model expects {}",
                x.dim,
                self.input_dim()
            )));
        }
        Ok(self.logits(x))
    }

    fn accumulate_gradient(&self, x: &SparseInput, label: Label, grads: &mut Self) -> Result<f64> {
        let acts = self.activations(x);
        let out = acts.last().expect("head layer");
        let logits = [out[0], out[1]];
        let p = softmax(logits);
        let mut delta = vec![p[0], p[1]];
        delta[label.index()] -= 1.0;

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            for (gb, d) in g.bias.iter_mut().zip(&delta) {
                *gb += d;
            }
            if l == 0 {
                for (row, &d) in g.weight.chunks_exact_mut(layer.in_dim).zip(&delta) {
                    if d != 0.0 {
                        for &(j, v) in &x.entries {
                            row[j] += d * v;
                        }
                    }
                }
                break;
            }
            let input = &acts[l - 1];
            for (row, &d) in g.weight.chunks_exact_mut(layer.in_dim).zip(&delta) {
                if d != 0.0 {
                    for (w, v) in row.iter_mut().zip(input) {
                        *w += d * v;
                    }
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (row, &d) in layer.weight.chunks_exact(layer.in_dim).zip(&delta) {
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            // The layer below is ReLU: its output is positive exactly where it passes gradient.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(cross_entropy(logits, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ImageFeatureKind;

    fn dense(values: &[f64]) -> ImageFeature {
        ImageFeature {
            kind: ImageFeatureKind::Frequency,
            values: values.to_vec(),
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(3, 4, &DEFAULT_HIDDEN);
        let mut bow = BowVector::default();
        bow.0.insert(2, 1);
        let p = mlp_forward(&m, &dense(&[1.0, 0.0, 2.0]), &bow).unwrap();
        assert_eq!(p.probabilities, [0.5, 0.5]);
        assert_eq!(p.label, Label::Real);
    }

    #[test]
    fn hand_computed_single_hidden_unit() {
        // x = (1, 2): h = relu(0.5*1 - 0.25*2 + 0.1) = 0.1
        // logits = (2h - 1, -h + 0.5) = (-0.8, 0.4)
        let mut m = MlpModel::zeros(2, 0, &[1]);
        m.layers[0].weight = vec![0.5, -0.25];
        m.layers[0].bias = vec![0.1];
        m.layers[1].weight = vec![2.0, -1.0];
        m.layers[1].bias = vec![-1.0, 0.5];
        let x = m.assemble_input(&dense(&[1.0, 2.0]), &TextFeature::None).unwrap();
        let logits = m.logits(&x);
        assert!((logits[0] - -0.8).abs() < 1e-12);
        assert!((logits[1] - 0.4).abs() < 1e-12);
        let p = Prediction::from_logits(logits);
        let e = (1.2f64).exp();
        assert!((p.probabilities[1] - e / (1.0 + e)).abs() < 1e-12);
        assert_eq!(p.label, Label::Foil);
    }

    #[test]
    fn dimension_mismatches() {
        let m = MlpModel::zeros(3, 2, &[4]);
        assert!(m.assemble_input(&dense(&[1.0]), &TextFeature::None).is_err());
        let mut bow = BowVector::default();
        bow.0.insert(5, 1);
        assert!(matches!(
            mlp_forward(&m, &dense(&[0.0; 3]), &bow),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
