//! The MSCOCO object inventory: 80 categories in 12 super-categories.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

/// Dense category index, `0..inventory.len()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u16);

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectCategory {
    pub id: CategoryId,
    /// Identifier used by MSCOCO annotation files (sparse, 1..=90).
    pub coco_id: u32,
    pub name: String,
    pub super_category: String,
}

/// (coco id, name, super-category) in MSCOCO order.
const MSCOCO: [(u32, &str, &str); 80] = [
    (1, "person", "person"),
    (2, "bicycle", "vehicle"),
    (3, "car", "vehicle"),
    (4, "motorcycle", "vehicle"),
    (5, "airplane", "vehicle"),
    (6, "bus", "vehicle"),
    (7, "train", "vehicle"),
    (8, "truck", "vehicle"),
    (9, "boat", "vehicle"),
    (10, "traffic light", "outdoor"),
    (11, "fire hydrant", "outdoor"),
    (13, "stop sign", "outdoor"),
    (14, "parking meter", "outdoor"),
    (15, "bench", "outdoor"),
    (16, "bird", "animal"),
    (17, "cat", "animal"),
    (18, "dog", "animal"),
    (19, "horse", "animal"),
    (20, "sheep", "animal"),
    (21, "cow", "animal"),
    (22, "elephant", "animal"),
    (23, "bear", "animal"),
    (24, "zebra", "animal"),
    (25, "giraffe", "animal"),
    (27, "backpack", "accessory"),
    (28, "umbrella", "accessory"),
    (31, "handbag", "accessory"),
    (32, "tie", "accessory"),
    (33, "suitcase", "accessory"),
    (34, "frisbee", "sports"),
    (35, "skis", "sports"),
    (36, "snowboard", "sports"),
    (37, "sports ball", "sports"),
    (38, "kite", "sports"),
    (39, "baseball bat", "sports"),
    (40, "baseball glove", "sports"),
    (41, "skateboard", "sports"),
    (42, "surfboard", "sports"),
    (43, "tennis racket", "sports"),
    (44, "bottle", "kitchen"),
    (46, "wine glass", "kitchen"),
    (47, "cup", "kitchen"),
    (48, "fork", "kitchen"),
    (49, "knife", "kitchen"),
    (50, "spoon", "kitchen"),
    (51, "bowl", "kitchen"),
    (52, "banana", "food"),
    (53, "apple", "food"),
    (54, "sandwich", "food"),
    (55, "orange", "food"),
    (56, "broccoli", "food"),
    (57, "carrot", "food"),
    (58, "hot dog", "food"),
    (59, "pizza", "food"),
    (60, "donut", "food"),
    (61, "cake", "food"),
    (62, "chair", "furniture"),
    (63, "couch", "furniture"),
    (64, "potted plant", "furniture"),
    (65, "bed", "furniture"),
    (67, "dining table", "furniture"),
    (70, "toilet", "furniture"),
    (72, "tv", "electronic"),
    (73, "laptop", "electronic"),
    (74, "mouse", "electronic"),
    (75, "remote", "electronic"),
    (76, "keyboard", "electronic"),
    (77, "cell phone", "electronic"),
    (78, "microwave", "appliance"),
    (79, "oven", "appliance"),
    (80, "toaster", "appliance"),
    (81, "sink", "appliance"),
    (82, "refrigerator", "appliance"),
    (84, "book", "indoor"),
    (85, "clock", "indoor"),
    (86, "vase", "indoor"),
    (87, "scissors", "indoor"),
    (88, "teddy bear", "indoor"),
    (89, "hair drier", "indoor"),
    (90, "toothbrush", "indoor"),
];

/// An ordered set of object categories with name and coco-id lookups.
#[derive(Debug, Clone)]
pub struct Inventory {
    categories: Vec<ObjectCategory>,
    name_tokens: Vec<Vec<String>>,
    by_name: HashMap<String, CategoryId>,
    by_coco: HashMap<u32, CategoryId>,
}

impl PartialEq for Inventory {
    fn eq(&self, other: &Self) -> bool {
        self.categories == other.categories
    }
}

impl Inventory {
    pub fn mscoco() -> Self {
        Self::from_entries(MSCOCO.iter().map(|&(coco, name, sup)| (coco, name, sup)))
            .expect("bundled inventory is valid")
    }

    /// Build an inventory from `(coco id, name, super-category)` triples. Ids
    /// are assigned densely in the given order.
    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (u32, &'a str, &'a str)>,
    ) -> Result<Self, String> {
        let mut inv = Inventory {
            categories: Vec::new(),
            name_tokens: Vec::new(),
            by_name: HashMap::new(),
            by_coco: HashMap::new(),
        };
        for (coco_id, name, sup) in entries {
            let id = CategoryId(inv.categories.len() as u16);
            let tokens = tokenize(name);
            let canonical = tokens.join(" ");
            if tokens.is_empty() {
                return Err(format!("category {coco_id} has an empty name"));
            }
            if inv.by_name.insert(canonical.clone(), id).is_some() {
                return Err(format!("duplicate category name {canonical:?}"));
            }
            if inv.by_coco.insert(coco_id, id).is_some() {
                return Err(format!("duplicate coco id {coco_id}"));
            }
            inv.categories.push(ObjectCategory {
                id,
                coco_id,
                name: canonical,
                super_category: sup.to_string(),
            });
            inv.name_tokens.push(tokens);
        }
        Ok(inv)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[ObjectCategory] {
        &self.categories
    }

    pub fn get(&self, id: CategoryId) -> Option<&ObjectCategory> {
        self.categories.get(id.index())
    }

    pub fn name(&self, id: CategoryId) -> &str {
        &self.categories[id.index()].name
    }

    pub fn name_tokens(&self, id: CategoryId) -> &[String] {
        &self.name_tokens[id.index()]
    }

    pub fn by_name(&self, name: &str) -> Option<CategoryId> {
        self.by_name.get(name).copied()
    }

    pub fn by_coco_id(&self, coco_id: u32) -> Option<CategoryId> {
        self.by_coco.get(&coco_id).copied()
    }

    /// Other categories sharing `id`'s super-category, in inventory order.
    pub fn siblings(&self, id: CategoryId) -> impl Iterator<Item = CategoryId> + '_ {
        let sup = &self.categories[id.index()].super_category;
        self.categories
            .iter()
            .filter(move |c| c.id != id && &c.super_category == sup)
            .map(|c| c.id)
    }

    pub fn super_categories(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.categories {
            if !out.contains(&c.super_category.as_str()) {
                out.push(&c.super_category);
            }
        }
        out
    }

    pub fn max_name_len(&self) -> usize {
        self.name_tokens.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// The `count` lexicographically smallest category names.
    pub fn lexicographic_prefix(&self, count: usize) -> Vec<CategoryId> {
        let mut ids: Vec<CategoryId> = self.categories.iter().map(|c| c.id).collect();
        ids.sort_by(|a, b| self.name(*a).cmp(self.name(*b)));
        ids.truncate(count);
        ids
    }
}

/// A located category name inside a token list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention {
    pub start: usize,
    pub len: usize,
    pub category: CategoryId,
}

/// Greedy left-to-right, longest-first matching of category names against
/// `tokens`. "hot dog" is one food mention, never an animal.
pub fn find_mentions(tokens: &[String], inventory: &Inventory) -> Vec<Mention> {
    let max_len = inventory.max_name_len();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        let longest = max_len.min(tokens.len() - pos);
        let hit = (1..=longest)
            .rev()
            .find_map(|len| inventory.by_name(&tokens[pos..pos + len].join(" ")).map(|c| (len, c)));
        match hit {
            Some((len, category)) => {
                out.push(Mention {
                    start: pos,
                    len,
                    category,
                });
                pos += len;
            }
            None => pos += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mscoco_has_80_categories_in_12_groups() {
        let inv = Inventory::mscoco();
        assert_eq!(inv.len(), 80);
        assert_eq!(inv.super_categories().len(), 12);
        for (i, c) in inv.categories().iter().enumerate() {
            assert_eq!(c.id.index(), i);
        }
        assert_eq!(inv.name(inv.by_coco_id(18).unwrap()), "dog");
        assert!(inv.by_coco_id(12).is_none());
    }

    #[test]
    fn leaky_default_prefix() {
        let inv = Inventory::mscoco();
        let names: Vec<&str> = inv
            .lexicographic_prefix(10)
            .into_iter()
            .map(|id| inv.name(id))
            .collect();
        assert_eq!(
            names,
            [
                "airplane",
                "apple",
                "backpack",
                "banana",
                "baseball bat",
                "baseball glove",
                "bear",
                "bed",
                "bench",
                "bicycle"
            ]
        );
    }

    #[test]
    fn multi_word_names_match_as_spans() {
        let inv = Inventory::mscoco();
        let tokens = tokenize("a dog eating a hot dog by the traffic light with a teddy bear");
        let found: Vec<&str> = find_mentions(&tokens, &inv)
            .iter()
            .map(|m| inv.name(m.category))
            .collect();
        assert_eq!(found, ["dog", "hot dog", "traffic light", "teddy bear"]);
    }

    #[test]
    fn siblings_share_super_category() {
        let inv = Inventory::mscoco();
        let dog = inv.by_name("dog").unwrap();
        let sibs: Vec<&str> = inv.siblings(dog).map(|c| inv.name(c)).collect();
        assert_eq!(sibs.len(), 9);
        assert!(sibs.contains(&"cat"));
        assert_eq!(inv.siblings(inv.by_name("person").unwrap()).count(), 0);
    }
}
