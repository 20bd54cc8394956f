//! Analytic gradients against central finite differences.

use foilcap_core::corpus::Label;
use foilcap_core::nn::{
    backprop, cross_entropy, Architecture, ImageMode, LstmDims, LstmInput, LstmModel, MlpModel, Network, ParamSet,
    SparseInput,
};
use foilcap_core::rng;
use rand::Rng;

const H: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn loss<M: Network>(model: &M, x: &M::Input, label: Label) -> f64 {
    cross_entropy(model.forward_logits(x).unwrap(), label)
}

fn flat<M: ParamSet>(model: &M) -> Vec<f64> {
    model.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
}

fn set_flat<M: ParamSet>(model: &mut M, index: usize, value: f64) {
    let mut offset = index;
    for t in model.tensors_mut() {
        if offset < t.len() {
            t[offset] = value;
            return;
        }
        offset -= t.len();
    }
    panic!("parameter index out of range");
}

/// Largest relative error between analytic and central-difference gradients
/// of the mean loss over `batch`. Denominators are floored at 1e-6 so that
/// gradients that are zero analytically compare on absolute error.
fn max_relative_error<M: Network>(model: &M, batch: &[(M::Input, Label)]) -> f64 {
    let refs: Vec<(&M::Input, Label)> = batch.iter().map(|(x, l)| (x, *l)).collect();
    let (_, grads) = backprop(model, &refs).unwrap();
    let analytic = flat(&grads);
    let params = flat(model);
    let mean_loss = |m: &M| batch.iter().map(|(x, l)| loss(m, x, *l)).sum::<f64>() / batch.len() as f64;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (i, &p) in params.iter().enumerate() {
        set_flat(&mut probe, i, p + H);
        let up = mean_loss(&probe);
        set_flat(&mut probe, i, p - H);
        let down = mean_loss(&probe);
        set_flat(&mut probe, i, p);
        let numeric = (up - down) / (2.0 * H);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

fn jitter<M: ParamSet>(model: &mut M, seed: u64) {
    let mut r = rng::stream(seed, 77);
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
}

fn label(r: &mut impl Rng) -> Label {
    if r.random_bool(0.5) {
        Label::Foil
    } else {
        Label::Real
    }
}

fn mlp_case(seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let (image_dim, text_dim) = (4, 6);
    let mut model = MlpModel::new(image_dim, text_dim, &[8, 6], &mut r);
    jitter(&mut model, seed);
    let batch: Vec<(SparseInput, Label)> = (0..5)
        .map(|_| {
            let dense: Vec<f64> = (0..image_dim + text_dim)
                .map(|j| if j >= image_dim && r.random_bool(0.5) { 0.0 } else { r.random_range(-1.0..2.0) })
                .collect();
            (SparseInput::from_dense(&dense), label(&mut r))
        })
        .collect();
    max_relative_error(&model, &batch)
}

fn lstm_case(seed: u64, mode: ImageMode, init_cell: bool) -> f64 {
    let mut r = rng::seeded(seed);
    let dims = LstmDims {
        vocab_size: 9,
        embed_dim: 4,
        hidden_dim: 5,
        image_dim: 3,
        mode,
        init_cell,
    };
    let mut model = LstmModel::new(dims, &mut r);
    jitter(&mut model, seed);
    let batch: Vec<(LstmInput, Label)> = (0..4)
        .map(|_| {
            let len = r.random_range(1..=6);
            let image = if mode == ImageMode::NoImage {
                Vec::new()
            } else {
                (0..3).map(|_| r.random_range(-1.0..1.0)).collect()
            };
            let tokens = (0..len).map(|_| r.random_range(0..9)).collect();
            (LstmInput { image, tokens }, label(&mut r))
        })
        .collect();
    max_relative_error(&model, &batch)
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in [1, 2, 3, 4] {
        let err = mlp_case(seed);
        assert!(err < TOLERANCE, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn lstm_append_gradients_match_finite_differences() {
    for seed in [1, 2, 3] {
        let err = lstm_case(seed, ImageMode::AppendToFinal, false);
        assert!(err < TOLERANCE, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn lstm_text_only_gradients_match_finite_differences() {
    for seed in [5, 6, 7] {
        let err = lstm_case(seed, ImageMode::NoImage, false);
        assert!(err < TOLERANCE, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn mm_lstm_gradients_match_finite_differences() {
    for seed in [1, 2, 3] {
        for init_cell in [true, false] {
            let err = lstm_case(seed, ImageMode::InitHidden, init_cell);
            assert!(err < TOLERANCE, "seed {seed} init_cell {init_cell}: relative error {err:e}");
        }
    }
}

#[test]
fn architecture_names_round_trip() {
    for a in [Architecture::Mlp, Architecture::Lstm, Architecture::MmLstm] {
        assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
    }
}
