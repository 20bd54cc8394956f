//! Desk-scale foiled-caption corpora with a tunable text-only shortcut.
//!
//! Every image gets 1–4 distinct object categories (1–3 instances each) and
//! `captions_per_image` template captions. Each caption is independently REAL
//! or FOIL with probability one half. With probability `bias_strength`, an
//! image that carries at least one FOIL caption is drawn in "leaky" mode: its
//! FOIL captions may only use foil words from the leaky subset, so those words
//! become a label cue readable from text alone.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{foil_caption_with, CategoryId, Corpus, Example, ImageRecord, Inventory, Label, ObjectBag, PosSubset};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_TEMPLATES: [&str; 8] = [
    "a photo of a {}",
    "a close view of a {}",
    "a {} next to a {}",
    "a {} sitting near a {}",
    "there is a {} and a {} in this scene",
    "a picture showing a {} beside a {}",
    "a {} with a {} and a {}",
    "an image of a {} near a {} and a {}",
];

const SLOT: &str = "{}";
const MAX_IMAGE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_images: usize,
    pub captions_per_image: usize,
    pub bias_strength: f64,
    pub seed: u64,
    pub template_set: Vec<String>,
    /// Names of the leaky foil words. Empty selects the ten
    /// lexicographically first category names.
    pub leaky_words: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 1000,
            captions_per_image: 5,
            bias_strength: 0.0,
            seed: 0,
            template_set: DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            leaky_words: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn leaky_set(&self, inventory: &Inventory) -> Result<BTreeSet<CategoryId>> {
        if self.leaky_words.is_empty() {
            return Ok(inventory.lexicographic_prefix(10).into_iter().collect());
        }
        self.leaky_words
            .iter()
            .map(|w| {
                inventory
                    .by_name(w)
                    .ok_or_else(|| Error::Config(format!("leaky word {w:?} is not a category")))
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::Config("n_images must be positive".into()));
        }
        if self.captions_per_image == 0 {
            return Err(Error::Config("captions_per_image must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bias_strength) {
            return Err(Error::Config(format!(
                "bias_strength {} outside [0, 1]",
                self.bias_strength
            )));
        }
        if self.template_set.is_empty() {
            return Err(Error::Config("template set is empty".into()));
        }
        if let Some(t) = self.template_set.iter().find(|t| !t.contains(SLOT)) {
            return Err(Error::Config(format!("template {t:?} has no {SLOT} slot")));
        }
        Ok(())
    }
}

struct Template {
    pieces: Vec<String>,
}

impl Template {
    fn parse(text: &str) -> Self {
        Self {
            pieces: text.split(SLOT).map(str::to_string).collect(),
        }
    }

    fn slots(&self) -> usize {
        self.pieces.len() - 1
    }

    fn render(&self, names: &[&str]) -> String {
        let mut out = self.pieces[0].clone();
        for (name, piece) in names.iter().zip(&self.pieces[1..]) {
            out.push_str(name);
            out.push_str(piece);
        }
        out
    }
}

/// Objects in `bag` that have at least one absent sibling, optionally
/// restricted to absent siblings inside `allowed`.
fn eligible_objects(bag: &ObjectBag, inventory: &Inventory, allowed: Option<&BTreeSet<CategoryId>>) -> Vec<CategoryId> {
    bag.distinct()
        .filter(|&c| {
            inventory
                .siblings(c)
                .any(|s| !bag.contains(s) && allowed.is_none_or(|a| a.contains(&s)))
        })
        .collect()
}

struct Generator<'a> {
    inventory: &'a Inventory,
    templates: Vec<Template>,
    min_objects: usize,
    max_objects: usize,
    leaky: BTreeSet<CategoryId>,
}

impl Generator<'_> {
    fn sample_bag<R: Rng>(&self, rng: &mut R, leaky_mode: bool) -> Result<ObjectBag> {
        let ids: Vec<CategoryId> = self.inventory.categories().iter().map(|c| c.id).collect();
        for _ in 0..MAX_IMAGE_ATTEMPTS {
            let k = rng.random_range(self.min_objects..=self.max_objects);
            let mut bag = ObjectBag::new();
            for &id in ids.choose_multiple(rng, k) {
                bag.add(id, rng.random_range(1..=3));
            }
            let allowed = leaky_mode.then_some(&self.leaky);
            if !eligible_objects(&bag, self.inventory, allowed).is_empty() {
                return Ok(bag);
            }
        }
        Err(Error::NoFoilCandidate(
            "no sampled image has a foilable object; the inventory or template set is too small".into(),
        ))
    }

    fn render<R: Rng>(&self, bag: &ObjectBag, required: Option<CategoryId>, rng: &mut R) -> String {
        let distinct: Vec<CategoryId> = bag.distinct().collect();
        let fitting: Vec<&Template> = self
            .templates
            .iter()
            .filter(|t| t.slots() <= distinct.len())
            .collect();
        let template = fitting[rng.random_range(0..fitting.len())];

        let mut pool: Vec<CategoryId> = distinct.into_iter().filter(|&c| Some(c) != required).collect();
        pool.shuffle(rng);
        let mut chosen: Vec<CategoryId> = required.into_iter().collect();
        chosen.extend(pool.into_iter().take(template.slots() - chosen.len()));
        chosen.shuffle(rng);
        let names: Vec<&str> = chosen.iter().map(|&c| self.inventory.name(c)).collect();
        template.render(&names)
    }
}

/// Generate a synthetic noun corpus over the MSCOCO inventory.
pub fn synth_generate(config: &SynthConfig) -> Result<Corpus> {
    synth_generate_with(config, Inventory::mscoco())
}

/// Generate over a caller-supplied inventory.
pub fn synth_generate_with(config: &SynthConfig, inventory: Inventory) -> Result<Corpus> {
    config.validate()?;
    let has_siblings = inventory
        .categories()
        .iter()
        .any(|c| inventory.siblings(c.id).next().is_some());
    if !has_siblings {
        return Err(Error::NoFoilCandidate(
            "no super-category holds two or more categories".into(),
        ));
    }
    let leaky = config.leaky_set(&inventory)?;
    let templates: Vec<Template> = config.template_set.iter().map(|t| Template::parse(t)).collect();
    let min_objects = templates.iter().map(Template::slots).min().unwrap_or(1).max(1);
    if min_objects > inventory.len() {
        return Err(Error::NoFoilCandidate("templates need more objects than the inventory has".into()));
    }
    let generator = Generator {
        inventory: &inventory,
        templates,
        min_objects,
        max_objects: 4.max(min_objects).min(inventory.len()),
        leaky,
    };

    let mut rng = rng::seeded(config.seed);
    let mut per_image: Vec<(ImageRecord, Vec<Example>)> = Vec::with_capacity(config.n_images);
    for i in 0..config.n_images {
        let image_id = format!("synth-{i:06}");
        let labels: Vec<Label> = (0..config.captions_per_image)
            .map(|_| if rng.random_bool(0.5) { Label::Foil } else { Label::Real })
            .collect();
        let leaky_mode = config.bias_strength > 0.0
            && labels.contains(&Label::Foil)
            && rng.random::<f64>() < config.bias_strength;
        let bag = generator.sample_bag(&mut rng, leaky_mode)?;
        let image = ImageRecord::new(image_id.clone(), bag);
        let allowed = leaky_mode.then_some(&generator.leaky);

        let mut examples = Vec::with_capacity(labels.len());
        for label in labels {
            let example = match label {
                Label::Real => {
                    let caption = generator.render(&image.gold_objects, None, &mut rng);
                    Example::real(image_id.clone(), &caption, PosSubset::Noun)
                }
                Label::Foil => {
                    let eligible = eligible_objects(&image.gold_objects, &inventory, allowed);
                    let required = eligible[rng.random_range(0..eligible.len())];
                    let caption = generator.render(&image.gold_objects, Some(required), &mut rng);
                    let real = Example::real(image_id.clone(), &caption, PosSubset::Noun);
                    foil_caption_with(&real, &image, &inventory, allowed, &mut rng)?
                }
            };
            examples.push(example);
        }
        per_image.push((image, examples));
    }

    let mut order: Vec<usize> = (0..config.n_images).collect();
    order.shuffle(&mut rng);
    let n_train = (2 * config.n_images + 1) / 3;
    let train_set: BTreeSet<usize> = order[..n_train].iter().copied().collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut images = BTreeMap::new();
    for (i, (image, examples)) in per_image.into_iter().enumerate() {
        if train_set.contains(&i) {
            train.extend(examples);
        } else {
            test.extend(examples);
        }
        images.insert(image.image_id.clone(), image);
    }
    Corpus::new(train, test, images, inventory, PosSubset::Noun)
}

/// Fraction of FOIL examples whose foil word is in `leaky`.
pub fn leaky_concentration<'a>(
    examples: impl IntoIterator<Item = &'a Example>,
    inventory: &Inventory,
    leaky: &BTreeSet<CategoryId>,
) -> Option<f64> {
    let (mut foils, mut hits) = (0usize, 0usize);
    for e in examples {
        if let Some(word) = &e.foil_word {
            foils += 1;
            if inventory.by_name(word).is_some_and(|c| leaky.contains(&c)) {
                hits += 1;
            }
        }
    }
    (foils > 0).then(|| hits as f64 / foils as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, bias: f64) -> SynthConfig {
        SynthConfig {
            n_images: 300,
            captions_per_image: 3,
            bias_strength: bias,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = synth_generate(&small(7, 0.3)).unwrap();
        let b = synth_generate(&small(7, 0.3)).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&small(8, 0.3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_is_two_to_one_and_image_disjoint() {
        let corpus = synth_generate(&small(1, 0.0)).unwrap();
        let train_ids: BTreeSet<&str> = corpus.train.iter().map(|e| e.image_id.as_str()).collect();
        let test_ids: BTreeSet<&str> = corpus.test.iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(train_ids.len(), 200);
        assert_eq!(test_ids.len(), 100);
        assert!(train_ids.is_disjoint(&test_ids));
    }

    #[test]
    fn foils_respect_image_and_super_category() {
        let corpus = synth_generate(&small(2, 0.0)).unwrap();
        let inv = &corpus.categories;
        for e in corpus.train.iter().chain(&corpus.test) {
            let image = corpus.image(e);
            let objects = image.gold_objects.distinct().count();
            assert!((1..=4).contains(&objects));
            if e.label == Label::Foil {
                let foil = inv.by_name(e.foil_word.as_ref().unwrap()).unwrap();
                let orig = inv.by_name(e.original_word.as_ref().unwrap()).unwrap();
                assert!(!image.gold_objects.contains(foil));
                assert!(image.gold_objects.contains(orig));
                assert_eq!(inv.get(foil).unwrap().super_category, inv.get(orig).unwrap().super_category);
            }
        }
    }

    #[test]
    fn full_bias_concentrates_on_leaky_words() {
        let cfg = small(3, 1.0);
        let corpus = synth_generate(&cfg).unwrap();
        let leaky = cfg.leaky_set(&corpus.categories).unwrap();
        let share = leaky_concentration(corpus.train.iter().chain(&corpus.test), &corpus.categories, &leaky).unwrap();
        assert!(share >= 0.9, "{share}");
        let unbiased = synth_generate(&small(3, 0.0)).unwrap();
        let share0 =
            leaky_concentration(unbiased.train.iter().chain(&unbiased.test), &unbiased.categories, &leaky).unwrap();
        assert!(share0 < 0.5, "{share0}");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small(0, 0.0);
        cfg.n_images = 0;
        assert!(matches!(synth_generate(&cfg), Err(Error::Config(_))));
        let mut cfg = small(0, 0.0);
        cfg.template_set.clear();
        assert!(matches!(synth_generate(&cfg), Err(Error::Config(_))));
        let lonely = Inventory::from_entries([(1, "person", "person"), (2, "car", "vehicle")]).unwrap();
        assert!(matches!(
            synth_generate_with(&small(0, 0.0), lonely),
            Err(Error::NoFoilCandidate(_))
        ));
    }
}
