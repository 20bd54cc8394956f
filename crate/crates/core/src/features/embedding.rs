use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};

use super::{ImageFeature, ImageFeatureKind};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;

/// Width of a ResNet-152 POOL5 vector.
pub const RESNET_POOL5_DIM: usize = 2048;

/// Precomputed image embeddings keyed by image id; all share one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::EmbeddingDimension {
                expected: self.dim,
                found: values.len(),
            });
        }
        self.vectors.insert(image_id.into(), values);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Result<ImageFeature> {
        let values = self
            .vectors
            .get(image_id)
            .ok_or_else(|| Error::MissingEmbedding(image_id.to_string()))?;
        Ok(ImageFeature {
            kind: ImageFeatureKind::Embedding,
            values: values.clone(),
        })
    }

    /// Read `<image id> <v1> <v2> ...` lines. The first record fixes the dimension
    /// unless `expected_dim` is given.
    pub fn load(path: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dim = expected_dim;
        let mut vectors = BTreeMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(id) = fields.next() else { continue };
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::malformed(path, n + 1, e))?;
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected {
                return Err(Error::EmbeddingDimension {
                    expected,
                    found: values.len(),
                });
            }
            vectors.insert(id.to_string(), values);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (id, values) in &self.vectors {
            let mut line = id.clone();
            for v in values {
                line.push(' ');
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Load the embedding of a single image from `path`.
pub fn load_precomputed_embedding(path: &Path, image_id: &str) -> Result<ImageFeature> {
    EmbeddingTable::load(path, None)?.get(image_id)
}

/// Stand-in "CNN" vectors for synthetic corpora: a fixed Gaussian projection
/// of the gold frequency vector plus per-image Gaussian noise. They carry the
/// same object information as the bag of objects, entangled and noisy.
pub fn synthetic_embeddings(corpus: &Corpus, dim: usize, seed: u64) -> EmbeddingTable {
    let n_cat = corpus.categories.len();
    let mut r = rng::stream(seed, 0xE3B);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let scale = 1.0 / (n_cat as f64).sqrt();
    let projection: Vec<f64> = (0..dim * n_cat).map(|_| unit.sample(&mut r) * scale).collect();
    let noise = Normal::new(0.0, 0.5).expect("valid normal");
    let mut table = EmbeddingTable::new(dim);
    for (id, image) in &corpus.images {
        let mut values = vec![0.0; dim];
        for (cat, count) in image.gold_objects.iter() {
            let col = cat.index();
            for (row, v) in values.iter_mut().enumerate() {
                *v += projection[row * n_cat + col] * count as f64;
            }
        }
        for v in &mut values {
            *v += noise.sample(&mut r);
        }
        table.insert(id.clone(), values).expect("dimension matches");
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        fs::write(&path, "a 0.5 -1 2\nb 0 0 0\n\n").unwrap();
        let table = EmbeddingTable::load(&path, None).unwrap();
        assert_eq!(table.dim(), 3);
        assert_eq!(table.get("a").unwrap().values, vec![0.5, -1.0, 2.0]);
        assert_eq!(table.get("b").unwrap().values, vec![0.0; 3]);
        assert!(matches!(table.get("c"), Err(Error::MissingEmbedding(_))));
        let again = dir.path().join("again.txt");
        table.write(&again).unwrap();
        assert_eq!(EmbeddingTable::load(&again, None).unwrap(), table);

        fs::write(&path, "a 1 2 3\nb 1 2\n").unwrap();
        assert!(matches!(
            EmbeddingTable::load(&path, None),
            Err(Error::EmbeddingDimension { expected: 3, found: 2 })
        ));
        fs::write(&path, "a 1 x 3\n").unwrap();
        assert!(matches!(EmbeddingTable::load(&path, None), Err(Error::Malformed { .. })));
    }

    #[test]
    fn pool5_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool5.txt");
        let row: Vec<String> = (0..RESNET_POOL5_DIM).map(|i| format!("{}", i as f64 * 0.001)).collect();
        fs::write(&path, format!("42 {}\n", row.join(" "))).unwrap();
        let f = load_precomputed_embedding(&path, "42").unwrap();
        assert_eq!(f.values.len(), RESNET_POOL5_DIM);
        assert_eq!(f.kind, ImageFeatureKind::Embedding);
    }
}
