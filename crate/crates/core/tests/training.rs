use foilcap_core::corpus::{synth_generate, Label, SynthConfig};
use foilcap_core::features::{ImageSpec, TextSpec};
use foilcap_core::nn::{train, Architecture, MlpModel, Network, ParamSet, SparseInput, TrainConfig};
use foilcap_core::{rng, Classifier, ModelSpec};
use rand::Rng;

/// 200 points labelled by the side of the line x0 + x1 = 0, with a margin.
fn separable(seed: u64) -> Vec<(SparseInput, Label)> {
    let mut r = rng::seeded(seed);
    let mut data = Vec::new();
    while data.len() < 200 {
        let x: [f64; 2] = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let s = x[0] + x[1];
        if s.abs() < 0.2 {
            continue;
        }
        let label = if s > 0.0 { Label::Foil } else { Label::Real };
        data.push((SparseInput::from_dense(&x), label));
    }
    data
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 50,
        batch_size: 16,
        seed,
        patience: 50,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_fixture_is_learned() {
    let data = separable(3);
    let model = MlpModel::new(2, 0, &[100, 100], &mut rng::stream(3, 0));
    let (model, log) = train(model, &data, &small_config(3)).unwrap();
    assert_eq!(log.best_validation_accuracy(), 1.0, "{:?}", log.epochs.last());
    assert!(log.best_epoch <= 50);
    assert_eq!(log.validation_size, 20);
    let wrong = data.iter().filter(|(x, l)| model.predict(x).unwrap().label != *l).count();
    assert!(wrong <= 5, "{wrong} training points misclassified");
}

#[test]
fn saturated_model_labels_every_point() {
    let data = separable(8);
    let model = MlpModel::new(2, 0, &[100, 100], &mut rng::stream(8, 0));
    // With no held-out split, selection runs on the training points themselves.
    let cfg = TrainConfig {
        validation_fraction: 0.0,
        epochs: 200,
        ..small_config(8)
    };
    let (model, log) = train(model, &data, &cfg).unwrap();
    assert_eq!(log.validation_size, 0);
    assert_eq!(log.best_validation_accuracy(), 1.0);
    assert!(data.iter().all(|(x, l)| model.predict(x).unwrap().label == *l));
}

#[test]
fn first_epoch_loss_is_near_ln2() {
    let data = separable(4);
    let model = MlpModel::new(2, 0, &[100, 100], &mut rng::stream(4, 0));
    let cfg = TrainConfig {
        epochs: 1,
        ..small_config(4)
    };
    let (_, log) = train(model, &data, &cfg).unwrap();
    let first = log.epochs[0].train_loss;
    assert!((first - std::f64::consts::LN_2).abs() < 0.1, "first epoch loss {first}");
}

#[test]
fn training_is_bitwise_deterministic_across_thread_counts() {
    let data = separable(5);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let model = MlpModel::new(2, 0, &[16, 16], &mut rng::stream(5, 0));
            train(model, &data, &small_config(5)).unwrap()
        })
    };
    let (a, log_a) = run(1);
    let (b, log_b) = run(4);
    assert_eq!(log_a, log_b);
    for (ta, tb) in a.tensors().iter().zip(b.tensors()) {
        let bits_a: Vec<u64> = ta.data.iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = tb.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b, "{}", ta.name);
    }
}

#[test]
fn training_errors() {
    let data = separable(6);
    let model = MlpModel::new(2, 0, &[4], &mut rng::stream(6, 0));
    let reals: Vec<_> = data.iter().filter(|d| d.1 == Label::Real).cloned().collect();
    assert!(matches!(train(model.clone(), &reals, &small_config(6)), Err(foilcap_core::Error::SingleClass)));
    assert!(matches!(train(model.clone(), &[], &small_config(6)), Err(foilcap_core::Error::EmptyTrainingSet)));
    let mut exploding = model;
    for t in exploding.tensors_mut() {
        t.fill(f64::NAN);
    }
    assert!(matches!(
        train(exploding, &data, &small_config(6)),
        Err(foilcap_core::Error::NonFiniteLoss { epoch: 1, batch: 0 })
    ));
}

#[test]
fn lstm_classifier_trains_on_synthetic_captions() {
    let corpus = synth_generate(&SynthConfig {
        n_images: 60,
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut spec = ModelSpec::standard(Architecture::MmLstm, "gold-freq".parse().unwrap(), TextSpec::Tokens);
    spec.embed_dim = 8;
    spec.hidden_dim = 8;
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 32,
        seed: 2,
        ..TrainConfig::default()
    };
    let (a, log) = Classifier::fit(&spec, &corpus, None, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 3);
    assert!(log.epochs.iter().all(|e| e.train_loss.is_finite()));
    let (b, _) = Classifier::fit(&spec, &corpus, None, &cfg).unwrap();
    assert_eq!(a.to_file(), b.to_file());
    let e = &corpus.test[0];
    assert!(a.predict(corpus.image(e), &[]).is_err());
    assert!(a.score(corpus.image(e), &[]).is_ok());
}

#[test]
fn fit_rejects_missing_inputs() {
    let corpus = synth_generate(&SynthConfig {
        n_images: 30,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let pred = ModelSpec::standard(Architecture::Mlp, "pred-freq".parse().unwrap(), TextSpec::Bow);
    assert!(matches!(
        Classifier::fit(&pred, &corpus, None, &cfg),
        Err(foilcap_core::Error::PredictedUnavailable(_))
    ));
    let cnn = ModelSpec::standard(Architecture::Mlp, ImageSpec::Embedding, TextSpec::Bow);
    assert!(Classifier::fit(&cnn, &corpus, None, &cfg).is_err());
}
