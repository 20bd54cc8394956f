use std::collections::BTreeMap;

use foilcap_core::corpus::{
    foil_candidates, foil_caption, synth_generate, CategoryId, Example, ImageRecord, Inventory, Label, ObjectBag,
    PosSubset, SynthConfig,
};
use foilcap_core::rng;
use foilcap_core::text::contains_span;

fn bag(inv: &Inventory, names: &[&str]) -> ObjectBag {
    ObjectBag::from_instances(names.iter().map(|n| inv.by_name(n).unwrap()))
}

/// Pearson statistic over cells with their expected counts.
fn chi_square(observed: &BTreeMap<CategoryId, f64>, expected: &BTreeMap<CategoryId, f64>) -> f64 {
    expected
        .iter()
        .map(|(c, e)| {
            let o = observed.get(c).copied().unwrap_or(0.0);
            (o - e) * (o - e) / e
        })
        .sum()
}

#[test]
fn single_site_choice_is_uniform() {
    let inv = Inventory::mscoco();
    let image = ImageRecord::new("img", bag(&inv, &["dog"]));
    let example = Example::real("img", "a dog on the grass", PosSubset::Noun);
    let mut r = rng::seeded(11);
    let draws = 9000;
    let mut observed: BTreeMap<CategoryId, f64> = BTreeMap::new();
    for _ in 0..draws {
        let foil = foil_caption(&example, &image, &inv, &mut r).unwrap();
        *observed.entry(inv.by_name(foil.foil_word.as_deref().unwrap()).unwrap()).or_default() += 1.0;
    }
    let dog = inv.by_name("dog").unwrap();
    let siblings: Vec<CategoryId> = inv.siblings(dog).collect();
    assert_eq!(siblings.len(), 9);
    assert_eq!(observed.len(), 9);
    let p = 1.0 / 9.0;
    let expected: BTreeMap<CategoryId, f64> = siblings.iter().map(|c| (*c, draws as f64 * p)).collect();
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (c, e) in &expected {
        assert!((observed[c] - e).abs() <= 3.0 * sigma, "{}: {} vs {e}", inv.name(*c), observed[c]);
    }
    // 8 degrees of freedom, 0.1% critical value
    assert!(chi_square(&observed, &expected) < 26.12);
}

/// Undo the swap: the REAL caption a FOIL caption was derived from.
fn original_tokens(example: &Example, inv: &Inventory) -> Vec<String> {
    let foil = inv.name_tokens(inv.by_name(example.foil_word.as_deref().unwrap()).unwrap());
    let original = inv.name_tokens(inv.by_name(example.original_word.as_deref().unwrap()).unwrap());
    let start = (0..example.tokens.len())
        .find(|&i| example.tokens[i..].starts_with(foil))
        .expect("foil word in caption");
    let mut tokens = example.tokens[..start].to_vec();
    tokens.extend_from_slice(original);
    tokens.extend_from_slice(&example.tokens[start + foil.len()..]);
    tokens
}

#[test]
fn unbiased_synthetic_foils_match_uniform_expectation() {
    let corpus = synth_generate(&SynthConfig {
        n_images: 6000,
        captions_per_image: 2,
        bias_strength: 0.0,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let inv = &corpus.categories;
    let mut observed: BTreeMap<CategoryId, f64> = BTreeMap::new();
    let mut expected: BTreeMap<CategoryId, f64> = BTreeMap::new();
    let mut variance: BTreeMap<CategoryId, f64> = BTreeMap::new();
    let foils = corpus.train.iter().chain(&corpus.test).filter(|e| e.label == Label::Foil);
    let mut n = 0;
    for e in foils {
        n += 1;
        let image = corpus.image(e);
        let sites = foil_candidates(&original_tokens(e, inv), image, inv);
        assert!(!sites.is_empty());
        let mut probs: BTreeMap<CategoryId, f64> = BTreeMap::new();
        for site in &sites {
            for c in &site.candidates {
                *probs.entry(*c).or_default() += 1.0 / (sites.len() * site.candidates.len()) as f64;
            }
        }
        for (c, p) in probs {
            *expected.entry(c).or_default() += p;
            *variance.entry(c).or_default() += p * (1.0 - p);
        }
        *observed.entry(inv.by_name(e.foil_word.as_deref().unwrap()).unwrap()).or_default() += 1.0;
    }
    assert!(n > 2000, "{n} FOIL captions");
    for (c, e) in &expected {
        let o = observed.get(c).copied().unwrap_or(0.0);
        let sigma = variance[c].sqrt();
        assert!((o - e).abs() <= 3.0 * sigma, "{}: observed {o}, expected {e:.1} ± {sigma:.1}", inv.name(*c));
    }
    // every observed foil word was a legal candidate
    assert!(observed.keys().all(|c| expected.contains_key(c)));
}

#[test]
fn every_foil_respects_gold_objects() {
    for bias in [0.0, 0.5, 1.0] {
        let corpus = synth_generate(&SynthConfig {
            n_images: 300,
            bias_strength: bias,
            seed: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let inv = &corpus.categories;
        for e in corpus.train.iter().chain(&corpus.test) {
            let image = corpus.image(e);
            let mentions = foilcap_core::corpus::find_mentions(&e.tokens, inv);
            match e.label {
                Label::Foil => {
                    let foil = inv.by_name(e.foil_word.as_deref().unwrap()).unwrap();
                    let original = inv.by_name(e.original_word.as_deref().unwrap()).unwrap();
                    assert!(!image.gold_objects.contains(foil));
                    assert!(image.gold_objects.contains(original));
                    assert_eq!(inv.get(foil).unwrap().super_category, inv.get(original).unwrap().super_category);
                    assert!(contains_span(&e.tokens, inv.name_tokens(foil)));
                }
                Label::Real => assert!(mentions.iter().all(|m| image.gold_objects.contains(m.category))),
            }
        }
    }
}
