//! Local linear surrogate explanations over caption words, and the
//! foiled-word hit-rate audit built on them.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::CaptionModel;
use crate::corpus::{Corpus, Example, ImageRecord, Label};
use crate::error::{Error, Result};
use crate::rng;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub n_samples: usize,
    /// Kernel width; `None` means `0.75 * sqrt(d)` for `d` distinct words.
    pub kernel_width: Option<f64>,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: None,
            seed: 0,
        }
    }
}

impl KernelConfig {
    pub fn width(&self, distinct_words: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (distinct_words as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordWeight {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub image_id: String,
    pub caption: String,
    /// One entry per distinct caption word, by decreasing `|weight|`, ties alphabetical.
    pub weights: Vec<WordWeight>,
    pub top_feature: String,
    pub intercept: f64,
    pub predicted: Label,
    pub foil_probability: f64,
    /// Weighted R^2 of the surrogate on its samples, clamped to [0, 1].
    pub fit_quality: f64,
}

impl Explanation {
    pub fn weight(&self, word: &str) -> Option<f64> {
        self.weights.iter().find(|w| w.word == word).map(|w| w.weight)
    }
}

fn masked(tokens: &[String], words: &[String], keep: &[bool]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| {
            let i = words.binary_search(t).expect("token is a caption word");
            keep[i]
        })
        .cloned()
        .collect()
}

/// Solve the symmetric positive definite system `a x = b` in place by
/// Cholesky; `None` when a pivot is not safely positive.
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 1e-12 * scale || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i * n + k] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k * n + i] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    Some(b)
}

/// Weighted least squares with intercept; returns `(coefficients, intercept, R^2)`.
fn weighted_fit(masks: &[Vec<bool>], targets: &[f64], weights: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let d = masks[0].len();
    let n = d + 1;
    let mut xtx = vec![0.0; n * n];
    let mut xty = vec![0.0; n];
    let mut row = vec![0.0; n];
    for ((mask, &y), &w) in masks.iter().zip(targets).zip(weights) {
        row[0] = 1.0;
        for (r, &m) in row[1..].iter_mut().zip(mask) {
            *r = if m { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            xty[i] += w * row[i] * y;
            for j in 0..n {
                xtx[i * n + j] += w * row[i] * row[j];
            }
        }
    }
    let beta = cholesky_solve(xtx, xty, n).ok_or_else(|| {
        Error::DegenerateDesign(format!("{} samples do not vary every word independently; raise n_samples", masks.len()))
    })?;
    let total_w: f64 = weights.iter().sum();
    let mean = targets.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total_w;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((mask, &y), &w) in masks.iter().zip(targets).zip(weights) {
        let fit = beta[0] + mask.iter().zip(&beta[1..]).filter(|(m, _)| **m).map(|(_, b)| b).sum::<f64>();
        ss_res += w * (y - fit) * (y - fit);
        ss_tot += w * (y - mean) * (y - mean);
    }
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok((beta[1..].to_vec(), beta[0], r2))
}

/// Explain the FOIL probability of `model` on one caption.
///
/// Masks switch distinct words off (all occurrences at once); the first
/// sample is the unmasked caption and every other sample removes a uniformly
/// chosen number of words. Masked words are deleted, not replaced.
pub fn lime_explain<M: CaptionModel + ?Sized>(
    model: &M,
    image: &ImageRecord,
    tokens: &[String],
    config: &KernelConfig,
) -> Result<Explanation> {
    if !model.consumes_text() {
        return Err(Error::NoTextFeatures);
    }
    let words: Vec<String> = tokens.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let d = words.len();
    if d == 0 {
        return Err(Error::InvalidExample("cannot explain an empty caption".into()));
    }
    if config.n_samples < 10 * d {
        return Err(Error::Config(format!(
            "{} samples are too few for {d} distinct words (need at least {})",
            config.n_samples,
            10 * d
        )));
    }
    let sigma = config.width(d);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("kernel width must be positive, got {sigma}")));
    }

    let mut rng = rng::seeded(config.seed);
    let mut masks = Vec::with_capacity(config.n_samples);
    masks.push(vec![true; d]);
    while masks.len() < config.n_samples {
        let removed = rng.random_range(1..=d);
        let mut mask = vec![true; d];
        for i in index::sample(&mut rng, d, removed) {
            mask[i] = false;
        }
        masks.push(mask);
    }

    let targets: Vec<f64> = masks
        .par_iter()
        .map(|mask| Ok(model.score(image, &masked(tokens, &words, mask))?.foil_probability()))
        .collect::<Result<_>>()?;
    let kernel: Vec<f64> = masks
        .iter()
        .map(|m| {
            let off = m.iter().filter(|k| !**k).count() as f64;
            (-(off * off) / (sigma * sigma)).exp()
        })
        .collect();
    let (coefficients, intercept, fit_quality) = weighted_fit(&masks, &targets, &kernel)?;

    let mut weights: Vec<WordWeight> = words
        .into_iter()
        .zip(coefficients)
        .map(|(word, weight)| WordWeight { word, weight })
        .collect();
    // `words` is alphabetical and the sort is stable, so ties stay alphabetical.
    weights.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
    let full = model.score(image, tokens)?;
    Ok(Explanation {
        image_id: image.image_id.clone(),
        caption: tokens.join(" "),
        top_feature: weights[0].word.clone(),
        weights,
        intercept,
        predicted: full.label,
        foil_probability: full.foil_probability(),
        fit_quality,
    })
}

pub fn explain_example<M: CaptionModel + ?Sized>(
    model: &M,
    example: &Example,
    corpus: &Corpus,
    config: &KernelConfig,
) -> Result<Explanation> {
    lime_explain(model, corpus.image(example), &example.tokens, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub image_id: String,
    pub caption: String,
    pub foil_word: String,
    pub top_feature: String,
    pub hit: bool,
    pub weights: Vec<WordWeight>,
    /// Deleting `top_feature` moves the FOIL probability at least as far as
    /// deleting any other single word.
    pub sensitivity_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub model: String,
    pub foil_examples: usize,
    pub audited: usize,
    pub hits: usize,
    pub hit_rate: f64,
    pub sensitivity_agreement: f64,
    pub n_samples: usize,
    pub kernel_width: Option<f64>,
    pub seed: u64,
}

impl AuditSummary {
    pub fn line(&self) -> String {
        format!(
            "hit rate {:.2}% ({} of {} correctly classified FOIL captions; {} FOIL captions in total); \
             sensitivity agreement {:.2}%; n_samples {}; kernel width {}; seed {}",
            self.hit_rate,
            self.hits,
            self.audited,
            self.foil_examples,
            self.sensitivity_agreement,
            self.n_samples,
            self.kernel_width.map_or_else(|| "0.75*sqrt(d)".to_string(), |w| w.to_string()),
            self.seed
        )
    }
}

fn sensitivity_agrees<M: CaptionModel + ?Sized>(
    model: &M,
    image: &ImageRecord,
    tokens: &[String],
    explanation: &Explanation,
) -> Result<bool> {
    let base = explanation.foil_probability;
    let mut top = 0.0;
    let mut best_other: f64 = 0.0;
    for w in &explanation.weights {
        let rest: Vec<String> = tokens.iter().filter(|t| **t != w.word).cloned().collect();
        let shift = (model.score(image, &rest)?.foil_probability() - base).abs();
        if w.word == explanation.top_feature {
            top = shift;
        } else {
            best_other = best_other.max(shift);
        }
    }
    Ok(top >= best_other - 1e-12)
}

/// Share of correctly classified FOIL test captions whose top surrogate
/// feature is the foiled word. A multi-word foil counts as hit when the top
/// feature is any of its words.
pub fn foil_word_hit_rate<M: CaptionModel + ?Sized>(
    model: &M,
    corpus: &Corpus,
    config: &KernelConfig,
) -> Result<(AuditSummary, Vec<AuditRecord>)> {
    if !model.consumes_text() {
        return Err(Error::NoTextFeatures);
    }
    let foils: Vec<(usize, &Example)> = corpus.test.iter().enumerate().filter(|(_, e)| e.label == Label::Foil).collect();
    let correct: Vec<bool> = foils
        .par_iter()
        .map(|(_, e)| Ok(model.predict(corpus.image(e), &e.tokens)?.label == Label::Foil))
        .collect::<Result<_>>()?;
    let eligible: Vec<(usize, &Example)> = foils.iter().zip(&correct).filter(|(_, c)| **c).map(|(f, _)| *f).collect();
    if eligible.is_empty() {
        return Err(Error::EmptyAudit);
    }
    let records: Vec<AuditRecord> = eligible
        .par_iter()
        .map(|&(i, e)| {
            let example_config = KernelConfig {
                seed: rng::mix(config.seed, i as u64),
                ..*config
            };
            let image = corpus.image(e);
            let explanation = lime_explain(model, image, &e.tokens, &example_config)?;
            let foil_word = e.foil_word.clone().unwrap_or_default();
            let hit = tokenize(&foil_word).contains(&explanation.top_feature);
            let agrees = sensitivity_agrees(model, image, &e.tokens, &explanation)?;
            Ok(AuditRecord {
                image_id: e.image_id.clone(),
                caption: e.caption(),
                foil_word,
                top_feature: explanation.top_feature,
                hit,
                weights: explanation.weights,
                sensitivity_agrees: agrees,
            })
        })
        .collect::<Result<_>>()?;
    let hits = records.iter().filter(|r| r.hit).count();
    let agree = records.iter().filter(|r| r.sensitivity_agrees).count();
    let summary = AuditSummary {
        model: model.descriptor(),
        foil_examples: foils.len(),
        audited: records.len(),
        hits,
        hit_rate: 100.0 * hits as f64 / records.len() as f64,
        sensitivity_agreement: 100.0 * agree as f64 / records.len() as f64,
        n_samples: config.n_samples,
        kernel_width: config.kernel_width,
        seed: config.seed,
    };
    Ok((summary, records))
}
