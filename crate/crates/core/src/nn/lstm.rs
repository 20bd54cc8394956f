use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, glorot, softmax, Network, ParamSet, Prediction, TensorView};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{ImageFeature, TokenSequence};

/// How the image vector reaches the recurrent classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageMode {
    NoImage,
    /// Concatenate the image to the final hidden state before the head.
    AppendToFinal,
    /// Start the recurrence from affine projections of the image.
    InitHidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub image_dim: usize,
    pub mode: ImageMode,
    /// InitHidden only: also project the image into the initial cell state.
    pub init_cell: bool,
}

impl LstmDims {
    pub fn new(vocab_size: usize, image_dim: usize, mode: ImageMode) -> Self {
        Self {
            vocab_size,
            embed_dim: 100,
            hidden_dim: 200,
            image_dim,
            mode,
            init_cell: true,
        }
    }

    fn head_in(&self) -> usize {
        match self.mode {
            ImageMode::AppendToFinal => self.hidden_dim + self.image_dim,
            ImageMode::NoImage | ImageMode::InitHidden => self.hidden_dim,
        }
    }

    fn proj_hidden_dims(&self) -> (usize, usize) {
        match self.mode {
            ImageMode::InitHidden => (self.hidden_dim, self.image_dim),
            _ => (0, 0),
        }
    }

    fn proj_cell_dims(&self) -> (usize, usize) {
        match self.mode {
            ImageMode::InitHidden if self.init_cell => (self.hidden_dim, self.image_dim),
            _ => (0, 0),
        }
    }
}

/// Single-layer LSTM classifier. Gate blocks are stacked `[input, forget,
/// candidate, output]`; all matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub dims: LstmDims,
    pub embedding: Vec<f64>,
    pub w_input: Vec<f64>,
    pub w_hidden: Vec<f64>,
    pub bias: Vec<f64>,
    pub proj_hidden_w: Vec<f64>,
    pub proj_hidden_b: Vec<f64>,
    pub proj_cell_w: Vec<f64>,
    pub proj_cell_b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

/// Image vector plus the unpadded token indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmInput {
    pub image: Vec<f64>,
    pub tokens: Vec<usize>,
}

impl LstmInput {
    pub fn new(image: &ImageFeature, tokens: &TokenSequence) -> Self {
        Self {
            image: image.values.clone(),
            tokens: tokens.active().to_vec(),
        }
    }
}

struct Step {
    token: usize,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct Trace {
    steps: Vec<Step>,
    head_in: Vec<f64>,
    logits: [f64; 2],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    if cols == 0 {
        return b.to_vec();
    }
    b.iter()
        .zip(w.chunks_exact(cols))
        .map(|(bi, row)| bi + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

impl LstmModel {
    pub fn zeros(dims: LstmDims) -> Self {
        let h = dims.hidden_dim;
        let (ph_r, ph_c) = dims.proj_hidden_dims();
        let (pc_r, pc_c) = dims.proj_cell_dims();
        Self {
            dims,
            embedding: vec![0.0; dims.vocab_size * dims.embed_dim],
            w_input: vec![0.0; 4 * h * dims.embed_dim],
            w_hidden: vec![0.0; 4 * h * h],
            bias: vec![0.0; 4 * h],
            proj_hidden_w: vec![0.0; ph_r * ph_c],
            proj_hidden_b: vec![0.0; ph_r],
            proj_cell_w: vec![0.0; pc_r * pc_c],
            proj_cell_b: vec![0.0; pc_r],
            head_w: vec![0.0; 2 * dims.head_in()],
            head_b: vec![0.0; 2],
        }
    }

    /// Glorot-uniform matrices (per gate block), zero biases, forget bias 1.
    pub fn new<R: Rng + ?Sized>(dims: LstmDims, rng: &mut R) -> Self {
        let h = dims.hidden_dim;
        let e = dims.embed_dim;
        let mut m = Self::zeros(dims);
        m.embedding = glorot(rng, dims.vocab_size, e);
        m.w_input = (0..4).flat_map(|_| glorot(rng, h, e)).collect();
        m.w_hidden = (0..4).flat_map(|_| glorot(rng, h, h)).collect();
        for b in &mut m.bias[h..2 * h] {
            *b = 1.0;
        }
        let (r, c) = dims.proj_hidden_dims();
        m.proj_hidden_w = glorot(rng, r, c);
        let (r, c) = dims.proj_cell_dims();
        m.proj_cell_w = glorot(rng, r, c);
        m.head_w = glorot(rng, 2, dims.head_in());
        m
    }

    fn check(&self, x: &LstmInput) -> Result<()> {
        let expected = match self.dims.mode {
            ImageMode::NoImage => 0,
            _ => self.dims.image_dim,
        };
        if x.image.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "image feature has {} values, LSTM expects {expected}",
                x.image.len()
            )));
        }
        if let Some(&bad) = x.tokens.iter().find(|&&t| t >= self.dims.vocab_size) {
            return Err(Error::DimensionMismatch(format!(
                "token index {bad} outside vocabulary of {}",
                self.dims.vocab_size
            )));
        }
        Ok(())
    }

    fn initial_state(&self, image: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.dims.hidden_dim;
        if self.dims.mode != ImageMode::InitHidden {
            return (vec![0.0; h], vec![0.0; h]);
        }
        let h0 = affine(&self.proj_hidden_w, &self.proj_hidden_b, image);
        let c0 = if self.dims.init_cell {
            affine(&self.proj_cell_w, &self.proj_cell_b, image)
        } else {
            vec![0.0; h]
        };
        (h0, c0)
    }

    /// Run the recurrence. An empty token list leaves the initial state as the
    /// final state.
    fn trace(&self, x: &LstmInput) -> Trace {
        let hd = self.dims.hidden_dim;
        let e = self.dims.embed_dim;
        let (mut h, mut c) = self.initial_state(&x.image);
        let mut steps = Vec::with_capacity(x.tokens.len());
        for &token in &x.tokens {
            let emb = &self.embedding[token * e..(token + 1) * e];
            let mut z = self.bias.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                let wi = &self.w_input[r * e..(r + 1) * e];
                let wh = &self.w_hidden[r * hd..(r + 1) * hd];
                *zr += wi.iter().zip(emb).map(|(a, b)| a * b).sum::<f64>()
                    + wh.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
            let mut gates = z;
            for (k, g) in gates.iter_mut().enumerate() {
                *g = if (2 * hd..3 * hd).contains(&k) { g.tanh() } else { sigmoid(*g) };
            }
            let mut c_new = vec![0.0; hd];
            let mut tanh_c = vec![0.0; hd];
            let mut h_new = vec![0.0; hd];
            for j in 0..hd {
                let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
                c_new[j] = f * c[j] + i * g;
                tanh_c[j] = c_new[j].tanh();
                h_new[j] = o * tanh_c[j];
            }
            steps.push(Step {
                token,
                h_prev: std::mem::replace(&mut h, h_new),
                c_prev: std::mem::replace(&mut c, c_new),
                gates,
                tanh_c,
            });
        }
        let mut head_in = h;
        if self.dims.mode == ImageMode::AppendToFinal {
            head_in.extend_from_slice(&x.image);
        }
        let out = affine(&self.head_w, &self.head_b, &head_in);
        Trace {
            steps,
            head_in,
            logits: [out[0], out[1]],
        }
    }

    pub fn logits(&self, x: &LstmInput) -> Result<[f64; 2]> {
        self.check(x)?;
        Ok(self.trace(x).logits)
    }
}

pub fn lstm_forward(model: &LstmModel, image: &ImageFeature, tokens: &TokenSequence) -> Result<Prediction> {
    if tokens.active().is_empty() {
        return Err(Error::EmptySequence);
    }
    let x = LstmInput::new(image, tokens);
    Ok(Prediction::from_logits(model.logits(&x)?))
}

impl ParamSet for LstmModel {
    fn tensors(&self) -> Vec<TensorView<'_>> {
        let d = &self.dims;
        let h = d.hidden_dim;
        let (phr, phc) = d.proj_hidden_dims();
        let (pcr, pcc) = d.proj_cell_dims();
        vec![
            view("embedding", vec![d.vocab_size, d.embed_dim], &self.embedding),
            view("w_input", vec![4 * h, d.embed_dim], &self.w_input),
            view("w_hidden", vec![4 * h, h], &self.w_hidden),
            view("bias", vec![4 * h], &self.bias),
            view("proj_hidden.weight", vec![phr, phc], &self.proj_hidden_w),
            view("proj_hidden.bias", vec![phr], &self.proj_hidden_b),
            view("proj_cell.weight", vec![pcr, pcc], &self.proj_cell_w),
            view("proj_cell.bias", vec![pcr], &self.proj_cell_b),
            view("head.weight", vec![2, d.head_in()], &self.head_w),
            view("head.bias", vec![2], &self.head_b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.embedding,
            &mut self.w_input,
            &mut self.w_hidden,
            &mut self.bias,
            &mut self.proj_hidden_w,
            &mut self.proj_hidden_b,
            &mut self.proj_cell_w,
            &mut self.proj_cell_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }
}

fn view<'a>(name: &str, shape: Vec<usize>, data: &'a [f64]) -> TensorView<'a> {
    TensorView {
        name: name.to_string(),
        shape,
        data,
    }
}

impl Network for LstmModel {
    type Input = LstmInput;

    fn forward_logits(&self, x: &LstmInput) -> Result<[f64; 2]> {
        self.logits(x)
    }

    fn accumulate_gradient(&self, x: &LstmInput, label: Label, grads: &mut Self) -> Result<f64> {
        self.check(x)?;
        let hd = self.dims.hidden_dim;
        let e = self.dims.embed_dim;
        let trace = self.trace(x);
        let p = softmax(trace.logits);
        let mut d_logits = [p[0], p[1]];
        d_logits[label.index()] -= 1.0;

        let head_in = trace.head_in.len();
        let mut dh = vec![0.0; hd];
        for (k, &d) in d_logits.iter().enumerate() {
            grads.head_b[k] += d;
            let grow = &mut grads.head_w[k * head_in..(k + 1) * head_in];
            for (g, v) in grow.iter_mut().zip(&trace.head_in) {
                *g += d * v;
            }
            let wrow = &self.head_w[k * head_in..k * head_in + hd];
            for (a, w) in dh.iter_mut().zip(wrow) {
                *a += d * w;
            }
        }

        let mut dc = vec![0.0; hd];
        let mut dz = vec![0.0; 4 * hd];
        for step in trace.steps.iter().rev() {
            let g = &step.gates;
            for j in 0..hd {
                let (i, f, cand, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let t = step.tanh_c[j];
                let d_o = dh[j] * t;
                dc[j] += dh[j] * o * (1.0 - t * t);
                let d_i = dc[j] * cand;
                let d_cand = dc[j] * i;
                let d_f = dc[j] * step.c_prev[j];
                dz[j] = d_i * i * (1.0 - i);
                dz[hd + j] = d_f * f * (1.0 - f);
                dz[2 * hd + j] = d_cand * (1.0 - cand * cand);
                dz[3 * hd + j] = d_o * o * (1.0 - o);
                dc[j] *= f;
            }
            let emb = &self.embedding[step.token * e..(step.token + 1) * e];
            let mut d_emb = vec![0.0; e];
            let mut dh_prev = vec![0.0; hd];
            for (r, &d) in dz.iter().enumerate() {
                grads.bias[r] += d;
                if d == 0.0 {
                    continue;
                }
                let gi = &mut grads.w_input[r * e..(r + 1) * e];
                for (gv, v) in gi.iter_mut().zip(emb) {
                    *gv += d * v;
                }
                let gh = &mut grads.w_hidden[r * hd..(r + 1) * hd];
                for (gv, v) in gh.iter_mut().zip(&step.h_prev) {
                    *gv += d * v;
                }
                for (a, w) in d_emb.iter_mut().zip(&self.w_input[r * e..(r + 1) * e]) {
                    *a += d * w;
                }
                for (a, w) in dh_prev.iter_mut().zip(&self.w_hidden[r * hd..(r + 1) * hd]) {
                    *a += d * w;
                }
            }
            let row = &mut grads.embedding[step.token * e..(step.token + 1) * e];
            for (gv, d) in row.iter_mut().zip(&d_emb) {
                *gv += d;
            }
            dh = dh_prev;
        }

        if self.dims.mode == ImageMode::InitHidden {
            let cols = self.dims.image_dim;
            for j in 0..hd {
                grads.proj_hidden_b[j] += dh[j];
                for (gv, v) in grads.proj_hidden_w[j * cols..(j + 1) * cols].iter_mut().zip(&x.image) {
                    *gv += dh[j] * v;
                }
                if self.dims.init_cell {
                    grads.proj_cell_b[j] += dc[j];
                    for (gv, v) in grads.proj_cell_w[j * cols..(j + 1) * cols].iter_mut().zip(&x.image) {
                        *gv += dc[j] * v;
                    }
                }
            }
        }
        Ok(cross_entropy(trace.logits, label))
    }
}
