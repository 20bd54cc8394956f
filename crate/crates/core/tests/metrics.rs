//! Reported accuracies against a brute-force recount of individual predictions.

use std::collections::BTreeMap;

use foilcap_core::corpus::{Example, ImageRecord, Inventory, Label, ObjectBag, PosSubset};
use foilcap_core::eval::{evaluate, round_percent, Confusion, EvalReport};
use foilcap_core::nn::Prediction;
use foilcap_core::{CaptionModel, Corpus, Error, Result};
use proptest::prelude::*;
use rand::Rng;

/// Per-class accuracy by walking every (truth, prediction) pair.
fn brute_force(pairs: &[(Label, Label)]) -> (f64, f64, f64) {
    let mut acc = [0.0; 2];
    for (k, class) in [Label::Real, Label::Foil].into_iter().enumerate() {
        let mut n = 0u64;
        let mut hit = 0u64;
        for (truth, pred) in pairs {
            if *truth == class {
                n += 1;
                if pred == truth {
                    hit += 1;
                }
            }
        }
        acc[k] = 100.0 * hit as f64 / n as f64;
    }
    (acc[0], acc[1], (acc[0] + acc[1]) / 2.0)
}

fn expand(counts: [[u64; 2]; 2]) -> Vec<(Label, Label)> {
    let mut pairs = Vec::new();
    for truth in Label::ALL {
        for pred in Label::ALL {
            for _ in 0..counts[truth.index()][pred.index()] {
                pairs.push((truth, pred));
            }
        }
    }
    pairs
}

#[test]
fn random_confusions_match_brute_force_exactly() {
    let mut r = foilcap_core::rng::seeded(2024);
    for _ in 0..1000 {
        let counts = [
            [r.random_range(0..400), r.random_range(0..400)],
            [r.random_range(0..400), r.random_range(0..400)],
        ];
        if counts[0].iter().sum::<u64>() == 0 || counts[1].iter().sum::<u64>() == 0 {
            continue;
        }
        let report = EvalReport::from_confusion(Confusion::from_counts(counts), "m".into(), "c".into()).unwrap();
        let (real, foil, overall) = brute_force(&expand(counts));
        assert_eq!(report.accuracy_real, real);
        assert_eq!(report.accuracy_foil, foil);
        assert_eq!(report.overall, overall);
        assert_eq!(report.overall, (report.accuracy_real + report.accuracy_foil) / 2.0);
        assert_eq!(report.confusion.total(), report.n_examples);
    }
}

#[test]
fn published_arithmetic() {
    assert_eq!(round_percent((96.04 + 96.85) / 2.0), "96.45");
    let report =
        EvalReport::from_confusion(Confusion::from_counts([[2401, 99], [79, 2421]]), "m".into(), "c".into()).unwrap();
    assert_eq!((report.real_display(), report.foil_display()), ("96.04".into(), "96.84".into()));
}

/// Replays a fixed prediction per image id.
struct Replay(BTreeMap<String, Label>);

impl CaptionModel for Replay {
    fn predict(&self, image: &ImageRecord, _: &[String]) -> Result<Prediction> {
        let label = self.0[&image.image_id];
        let p = if label == Label::Foil { 1.0 } else { 0.0 };
        Ok(Prediction {
            probabilities: [1.0 - p, p],
            label,
        })
    }
    fn consumes_text(&self) -> bool {
        true
    }
    fn descriptor(&self) -> String {
        "replay".into()
    }
}

fn corpus_of(pairs: &[(Label, Label)]) -> (Corpus, Replay) {
    let mut images = BTreeMap::new();
    let mut test = Vec::new();
    let mut replay = BTreeMap::new();
    for (i, (truth, pred)) in pairs.iter().enumerate() {
        let id = format!("img{i}");
        images.insert(id.clone(), ImageRecord::new(id.clone(), ObjectBag::new()));
        let mut e = Example::real(id.clone(), "a cat on a mat", PosSubset::Noun);
        if *truth == Label::Foil {
            e.label = Label::Foil;
            e.foil_word = Some("cat".into());
            e.original_word = Some("dog".into());
        }
        test.push(e);
        replay.insert(id, *pred);
    }
    let corpus = Corpus::new(Vec::new(), test, images, Inventory::mscoco(), PosSubset::Noun).unwrap();
    (corpus, Replay(replay))
}

#[test]
fn always_real_on_balanced_set() {
    let pairs: Vec<_> = (0..20).map(|i| (if i % 2 == 0 { Label::Real } else { Label::Foil }, Label::Real)).collect();
    let (corpus, model) = corpus_of(&pairs);
    let report = evaluate(&model, &corpus).unwrap();
    assert_eq!((report.accuracy_real, report.accuracy_foil, report.overall), (100.0, 0.0, 50.0));
}

#[test]
fn missing_class_is_an_error() {
    let pairs = vec![(Label::Real, Label::Real); 4];
    let (corpus, model) = corpus_of(&pairs);
    assert!(matches!(evaluate(&model, &corpus), Err(Error::MissingClass(Label::Foil))));
}

proptest! {
    #[test]
    fn evaluate_matches_brute_force(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 2..200)) {
        let label = |b: bool| if b { Label::Foil } else { Label::Real };
        let pairs: Vec<(Label, Label)> = pairs.into_iter().map(|(t, p)| (label(t), label(p))).collect();
        prop_assume!(pairs.iter().any(|p| p.0 == Label::Real) && pairs.iter().any(|p| p.0 == Label::Foil));
        let (corpus, model) = corpus_of(&pairs);
        let report = evaluate(&model, &corpus).unwrap();
        let again = evaluate(&model, &corpus).unwrap();
        prop_assert_eq!(&report, &again);
        let (real, foil, overall) = brute_force(&pairs);
        prop_assert_eq!(report.accuracy_real, real);
        prop_assert_eq!(report.accuracy_foil, foil);
        prop_assert_eq!(report.overall, overall);
        prop_assert_eq!(report.n_examples as usize, pairs.len());
    }
}
