use std::collections::BTreeSet;

use rand::Rng;

use super::{find_mentions, CategoryId, Example, ImageRecord, Inventory, Label, Mention};
use crate::error::{Error, Result};

/// A replaceable mention and the sibling categories it may become.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoilSite {
    pub mention: Mention,
    pub candidates: Vec<CategoryId>,
}

/// Every mention in `tokens` that has at least one legal replacement: a
/// same-super-category sibling that is neither in the image's gold objects nor
/// mentioned anywhere in the caption.
pub fn foil_candidates(tokens: &[String], image: &ImageRecord, inventory: &Inventory) -> Vec<FoilSite> {
    let mentions = find_mentions(tokens, inventory);
    let mentioned: BTreeSet<CategoryId> = mentions.iter().map(|m| m.category).collect();
    mentions
        .into_iter()
        .filter_map(|mention| {
            let candidates: Vec<CategoryId> = inventory
                .siblings(mention.category)
                .filter(|s| !image.gold_objects.contains(*s) && !mentioned.contains(s))
                .collect();
            (!candidates.is_empty()).then_some(FoilSite { mention, candidates })
        })
        .collect()
}

/// Swap one object mention of a REAL caption for an absent sibling category.
/// The site and the replacement are both drawn uniformly.
pub fn foil_caption<R: Rng + ?Sized>(
    example: &Example,
    image: &ImageRecord,
    inventory: &Inventory,
    rng: &mut R,
) -> Result<Example> {
    foil_caption_with(example, image, inventory, None, rng)
}

/// As [`foil_caption`], but when `allowed` is given only replacements inside
/// that set are legal (sites without one are skipped).
pub fn foil_caption_with<R: Rng + ?Sized>(
    example: &Example,
    image: &ImageRecord,
    inventory: &Inventory,
    allowed: Option<&BTreeSet<CategoryId>>,
    rng: &mut R,
) -> Result<Example> {
    if example.label != Label::Real {
        return Err(Error::InvalidExample("only REAL captions can be foiled".into()));
    }
    let mut sites = foil_candidates(&example.tokens, image, inventory);
    if let Some(allowed) = allowed {
        for site in &mut sites {
            site.candidates.retain(|c| allowed.contains(c));
        }
        sites.retain(|s| !s.candidates.is_empty());
    }
    if sites.is_empty() {
        return Err(Error::Unfoilable);
    }
    let site = &sites[rng.random_range(0..sites.len())];
    let replacement = site.candidates[rng.random_range(0..site.candidates.len())];

    let m = site.mention;
    let mut tokens = Vec::with_capacity(example.tokens.len() + 1);
    tokens.extend_from_slice(&example.tokens[..m.start]);
    tokens.extend_from_slice(inventory.name_tokens(replacement));
    tokens.extend_from_slice(&example.tokens[m.start + m.len..]);

    Ok(Example {
        image_id: example.image_id.clone(),
        tokens,
        label: Label::Foil,
        pos_subset: example.pos_subset,
        foil_word: Some(inventory.name(replacement).to_string()),
        original_word: Some(inventory.name(m.category).to_string()),
    })
}
