use std::collections::{BTreeMap, BTreeSet};

use foilcap_core::corpus::{Example, ImageRecord, Inventory, Label, ObjectBag, PosSubset};
use foilcap_core::explain::{foil_word_hit_rate, lime_explain, KernelConfig};
use foilcap_core::nn::Prediction;
use foilcap_core::{CaptionModel, Corpus, Error, Result};
use proptest::prelude::*;

/// FOIL probability affine in word presence.
struct Linear {
    bias: f64,
    weights: BTreeMap<String, f64>,
}

impl CaptionModel for Linear {
    fn predict(&self, _: &ImageRecord, tokens: &[String]) -> Result<Prediction> {
        let present: BTreeSet<&String> = tokens.iter().collect();
        let p = self.bias + present.iter().filter_map(|w| self.weights.get(*w)).sum::<f64>();
        Ok(Prediction {
            probabilities: [1.0 - p, p],
            label: if p > 0.5 { Label::Foil } else { Label::Real },
        })
    }
    fn consumes_text(&self) -> bool {
        true
    }
    fn descriptor(&self) -> String {
        "linear".into()
    }
}

struct Blind;

impl CaptionModel for Blind {
    fn predict(&self, _: &ImageRecord, _: &[String]) -> Result<Prediction> {
        Ok(Prediction::from_logits([0.0, 1.0]))
    }
    fn consumes_text(&self) -> bool {
        false
    }
    fn descriptor(&self) -> String {
        "blind".into()
    }
}

fn image() -> ImageRecord {
    ImageRecord::new("img", ObjectBag::new())
}

const LEXICON: [&str; 12] = [
    "a", "ball", "boy", "cat", "dog", "grass", "kicks", "man", "on", "red", "the", "with",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ranking_matches_true_weights(
        caption in prop::collection::vec(0usize..LEXICON.len(), 1..9),
        weights in prop::collection::vec(-1.0f64..1.0, LEXICON.len()),
        bias in -0.5f64..0.5,
        seed in any::<u64>(),
    ) {
        let tokens: Vec<String> = caption.iter().map(|&i| LEXICON[i].to_string()).collect();
        let truth: BTreeMap<String, f64> = LEXICON.iter().map(|w| w.to_string()).zip(weights).collect();
        let model = Linear { bias, weights: truth.clone() };
        let config = KernelConfig { seed, ..KernelConfig::default() };
        let e = lime_explain(&model, &image(), &tokens, &config).unwrap();
        let distinct: BTreeSet<&String> = tokens.iter().collect();
        prop_assert_eq!(e.weights.len(), distinct.len());
        for w in &e.weights {
            prop_assert!((w.weight - truth[&w.word]).abs() < 1e-6, "{}: {} vs {}", w.word, w.weight, truth[&w.word]);
        }
        let mut expected: Vec<&String> = distinct.into_iter().collect();
        expected.sort_by(|a, b| truth[*b].abs().total_cmp(&truth[*a].abs()));
        let got: Vec<&String> = e.weights.iter().map(|w| &w.word).collect();
        prop_assert_eq!(got, expected);
    }
}

#[test]
fn duplicate_words_are_one_feature() {
    let model = Linear {
        bias: 0.0,
        weights: [("dog".to_string(), 0.4)].into_iter().collect(),
    };
    let tokens: Vec<String> = "a dog and a dog".split(' ').map(String::from).collect();
    let e = lime_explain(&model, &image(), &tokens, &KernelConfig::default()).unwrap();
    assert_eq!(e.weights.len(), 3);
    assert_eq!(e.top_feature, "dog");
    assert!((e.weight("dog").unwrap() - 0.4).abs() < 1e-9);
}

fn audit_corpus() -> Corpus {
    let mut images = BTreeMap::new();
    let mut test = Vec::new();
    let captions = [
        ("a ball on the grass", Some(("ball", "frisbee"))),
        ("a man with a ball", Some(("ball", "kite"))),
        ("a dog on the grass", None),
        ("a cat with a boy", Some(("cat", "dog"))),
    ];
    for (i, (caption, foil)) in captions.into_iter().enumerate() {
        let id = format!("img{i}");
        images.insert(id.clone(), ImageRecord::new(id.clone(), ObjectBag::new()));
        let mut e = Example::real(id, caption, PosSubset::Noun);
        if let Some((foil, original)) = foil {
            e.label = Label::Foil;
            e.foil_word = Some(foil.into());
            e.original_word = Some(original.into());
        }
        test.push(e);
    }
    Corpus::new(Vec::new(), test, images, Inventory::mscoco(), PosSubset::Noun).unwrap()
}

#[test]
fn hit_rate_over_correct_foils() {
    let corpus = audit_corpus();
    // "ball" drives FOIL; the "cat" caption stays below 0.5 and is not audited.
    let model = Linear {
        bias: 0.1,
        weights: [("ball".to_string(), 0.6), ("cat".to_string(), 0.2), ("man".to_string(), 0.05)]
            .into_iter()
            .collect(),
    };
    let (summary, records) = foil_word_hit_rate(&model, &corpus, &KernelConfig::default()).unwrap();
    assert_eq!(summary.foil_examples, 3);
    assert_eq!(summary.audited, 2);
    assert_eq!(summary.hits, 2);
    assert_eq!(summary.hit_rate, 100.0);
    assert_eq!(summary.sensitivity_agreement, 100.0);
    assert!(records.iter().all(|r| r.hit && r.top_feature == "ball"));
    let (again, records_again) = foil_word_hit_rate(&model, &corpus, &KernelConfig::default()).unwrap();
    assert_eq!((summary, records), (again, records_again));
}

#[test]
fn audit_preconditions() {
    let corpus = audit_corpus();
    let err = foil_word_hit_rate(&Blind, &corpus, &KernelConfig::default()).unwrap_err();
    assert_eq!(err.to_string(), "model consumes no text features");
    let never = Linear {
        bias: 0.0,
        weights: BTreeMap::new(),
    };
    assert!(matches!(
        foil_word_hit_rate(&never, &corpus, &KernelConfig::default()),
        Err(Error::EmptyAudit)
    ));
}
