//! Per-class and macro-averaged accuracy, ablation grids, and CSV/JSONL reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{CaptionModel, Classifier, ModelSpec};
use crate::corpus::{Corpus, Example, Label};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, ImageSpec, ObjectSource, TextSpec};
use crate::nn::{Architecture, TrainConfig};

/// Human majority-vote accuracy on the noun test set; a reference point only.
pub const HUMAN_MAJORITY_OVERALL: f64 = 92.89;

/// Counts indexed `[true label][predicted label]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
}

impl Confusion {
    pub fn from_counts(counts: [[u64; 2]; 2]) -> Self {
        Self { counts }
    }

    pub fn add(&mut self, truth: Label, predicted: Label) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn class_total(&self, label: Label) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    pub fn correct(&self, label: Label) -> u64 {
        self.counts[label.index()][label.index()]
    }

    /// Percent of `label` examples predicted as `label`; `None` if the class is empty.
    pub fn accuracy(&self, label: Label) -> Option<f64> {
        let n = self.class_total(label);
        (n > 0).then(|| 100.0 * self.correct(label) as f64 / n as f64)
    }

    /// Macro average of the two per-class accuracies.
    pub fn overall(&self) -> Option<f64> {
        Some((self.accuracy(Label::Real)? + self.accuracy(Label::Foil)?) / 2.0)
    }

    /// Per-class accuracy at two decimals, rounded half-up on the exact ratio.
    pub fn accuracy_display(&self, label: Label) -> Option<String> {
        let n = self.class_total(label) as u128;
        (n > 0).then(|| hundredths(10_000 * self.correct(label) as u128, n))
    }

    /// Macro overall at two decimals, rounded half-up on the exact ratio
    /// `50 (c_r/n_r + c_f/n_f)`, so 96.04 and 96.85 give 96.45.
    pub fn overall_display(&self) -> Option<String> {
        let (nr, nf) = (self.class_total(Label::Real) as u128, self.class_total(Label::Foil) as u128);
        if nr == 0 || nf == 0 {
            return None;
        }
        let (cr, cf) = (self.correct(Label::Real) as u128, self.correct(Label::Foil) as u128);
        Some(hundredths(5_000 * (cr * nf + cf * nr), nr * nf))
    }
}

/// Format `num / den` hundredths as a decimal with two places, half-up.
fn hundredths(num: u128, den: u128) -> String {
    let rounded = (2 * num + den) / (2 * den);
    format!("{}.{:02}", rounded / 100, rounded % 100)
}

/// Half-up rounding of a decimal percentage to two places, for values that
/// are exact decimals (such as published table entries).
pub fn round_percent(value: f64) -> String {
    let text = format!("{value:.6}");
    let (int, frac) = text.split_once('.').expect("fixed-point format");
    let digits: u128 = format!("{int}{frac}").trim_start_matches('-').parse().expect("digits");
    let den = 10_000u128;
    let rounded = (digits + den / 2) / den;
    let sign = if value < 0.0 && rounded > 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", rounded / 100, rounded % 100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_real: f64,
    pub accuracy_foil: f64,
    pub overall: f64,
    pub confusion: Confusion,
    pub n_examples: u64,
    pub model: String,
    pub corpus: String,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion, model: String, corpus: String) -> Result<Self> {
        let n_examples = confusion.total();
        if n_examples == 0 {
            return Err(Error::EmptyTestSet);
        }
        let real = confusion.accuracy(Label::Real).ok_or(Error::MissingClass(Label::Real))?;
        let foil = confusion.accuracy(Label::Foil).ok_or(Error::MissingClass(Label::Foil))?;
        Ok(Self {
            accuracy_real: real,
            accuracy_foil: foil,
            overall: (real + foil) / 2.0,
            confusion,
            n_examples,
            model,
            corpus,
        })
    }

    pub fn overall_display(&self) -> String {
        self.confusion.overall_display().expect("both classes present")
    }

    pub fn real_display(&self) -> String {
        self.confusion.accuracy_display(Label::Real).expect("class present")
    }

    pub fn foil_display(&self) -> String {
        self.confusion.accuracy_display(Label::Foil).expect("class present")
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: overall {} real {} foil {} (n={})",
            self.model,
            self.overall_display(),
            self.real_display(),
            self.foil_display(),
            self.n_examples
        )
    }
}

/// Evaluate `model` on the test split of `corpus`.
pub fn evaluate<M: CaptionModel + ?Sized>(model: &M, corpus: &Corpus) -> Result<EvalReport> {
    evaluate_examples(model, &corpus.test, corpus, format!("{}:test", corpus.pos_subset))
}

pub fn evaluate_examples<M: CaptionModel + ?Sized>(
    model: &M,
    examples: &[Example],
    corpus: &Corpus,
    corpus_name: String,
) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let predictions: Vec<Label> = examples
        .par_iter()
        .map(|e| Ok(model.predict(corpus.image(e), &e.tokens)?.label))
        .collect::<Result<_>>()?;
    let mut confusion = Confusion::default();
    for (e, p) in examples.iter().zip(predictions) {
        confusion.add(e.label, p);
    }
    EvalReport::from_confusion(confusion, model.descriptor(), corpus_name)
}

/// One configuration in an ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationCell {
    pub image: ImageSpec,
    pub text: TextSpec,
    pub classifier: Architecture,
}

impl AblationCell {
    pub fn new(image: ImageSpec, text: TextSpec, classifier: Architecture) -> Self {
        Self { image, text, classifier }
    }

    /// `base` with this cell's features and architecture substituted.
    pub fn spec(&self, base: &ModelSpec) -> ModelSpec {
        let mut spec = base.clone();
        spec.architecture = self.classifier;
        spec.features.image = self.image;
        spec.features.text = self.text;
        spec
    }

    pub fn image_label(&self) -> String {
        match self.image {
            ImageSpec::None => "-".into(),
            other => other.to_string(),
        }
    }

    pub fn text_label(&self) -> String {
        match self.text {
            TextSpec::None => "-".into(),
            other => other.to_string(),
        }
    }
}

impl std::str::FromStr for AblationCell {
    type Err = String;

    /// `image/text/classifier`, e.g. `gold-freq/bow/mlp` or `-/tokens/lstm`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        let [image, text, classifier] = parts[..] else {
            return Err(format!("grid cell {s:?} is not image/text/classifier"));
        };
        Ok(Self::new(image.parse()?, text.parse()?, classifier.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub cells: Vec<AblationCell>,
}

impl AblationSpec {
    /// The eight-row noun ablation: image-only, MLP with BOW, LSTM with tokens.
    pub fn standard() -> Self {
        use Architecture::{Lstm, Mlp};
        let gold = ImageSpec::Frequency { source: ObjectSource::Gold };
        let cells = vec![
            AblationCell::new(ImageSpec::Embedding, TextSpec::None, Mlp),
            AblationCell::new(gold, TextSpec::None, Mlp),
            AblationCell::new(ImageSpec::None, TextSpec::Bow, Mlp),
            AblationCell::new(ImageSpec::Embedding, TextSpec::Bow, Mlp),
            AblationCell::new(gold, TextSpec::Bow, Mlp),
            AblationCell::new(ImageSpec::None, TextSpec::Tokens, Lstm),
            AblationCell::new(ImageSpec::Embedding, TextSpec::Tokens, Lstm),
            AblationCell::new(gold, TextSpec::Tokens, Lstm),
        ];
        Self { cells }
    }

    /// Every runnable (image, text, classifier) combination.
    pub fn full() -> Self {
        let images = [
            ImageSpec::None,
            ImageSpec::Embedding,
            ImageSpec::Frequency { source: ObjectSource::Gold },
            ImageSpec::Mention { source: ObjectSource::Gold },
            ImageSpec::Frequency { source: ObjectSource::Predicted },
            ImageSpec::Mention { source: ObjectSource::Predicted },
        ];
        let mut cells = Vec::new();
        for classifier in [Architecture::Mlp, Architecture::Lstm, Architecture::MmLstm] {
            for text in [TextSpec::None, TextSpec::Bow, TextSpec::Tokens] {
                for image in images {
                    let cell = AblationCell::new(image, text, classifier);
                    if ModelSpec::standard(classifier, image, text).validate().is_ok() {
                        cells.push(cell);
                    }
                }
            }
        }
        Self { cells }
    }

    /// One cell per non-empty line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let cells = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<AblationCell>().map_err(Error::Config))
            .collect::<Result<Vec<_>>>()?;
        if cells.is_empty() {
            return Err(Error::Config("ablation grid has no cells".into()));
        }
        Ok(Self { cells })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub seed: u64,
    pub report: Option<EvalReport>,
    /// Set when the cell could not be trained or evaluated.
    pub error: Option<String>,
}

/// Train and evaluate every cell with the same seed. Failed cells are kept
/// as rows with `error` set. `jobs` bounds the worker threads.
pub fn ablate(
    spec: &AblationSpec,
    corpus: &Corpus,
    embeddings: Option<Arc<EmbeddingTable>>,
    base: &ModelSpec,
    config: &TrainConfig,
    jobs: Option<usize>,
) -> Result<Vec<AblationRow>> {
    let run = |cell: &AblationCell| {
        let outcome = Classifier::fit(&cell.spec(base), corpus, embeddings.clone(), config)
            .and_then(|(model, _)| evaluate(&model, corpus));
        match outcome {
            Ok(report) => AblationRow {
                cell: *cell,
                seed: config.seed,
                report: Some(report),
                error: None,
            },
            Err(e) => {
                log::warn!("ablation cell {}/{}/{} failed: {e}", cell.image_label(), cell.text_label(), cell.classifier);
                AblationRow {
                    cell: *cell,
                    seed: config.seed,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| spec.cells.par_iter().map(run).collect()))
}

pub const CSV_HEADER: &str = "image_feat,text_feat,classifier,overall,real,foil,n,seed";

fn csv_line(cell: &AblationCell, seed: Option<u64>, report: Option<&EvalReport>) -> String {
    let mut line = format!("{},{},{}", cell.image_label(), cell.text_label(), cell.classifier);
    match report {
        Some(r) => {
            let _ = write!(line, ",{},{},{},{}", r.overall_display(), r.real_display(), r.foil_display(), r.n_examples);
        }
        None => line.push_str(",NA,NA,NA,0"),
    }
    match seed {
        Some(s) => {
            let _ = write!(line, ",{s}");
        }
        None => line.push(','),
    }
    line
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for line in lines {
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

/// Ablation table: CSV with display percentages, JSONL with full records.
pub fn write_ablation(csv: &Path, jsonl: &Path, rows: &[AblationRow]) -> Result<()> {
    let body = rows.iter().map(|r| csv_line(&r.cell, Some(r.seed), r.report.as_ref()));
    write_lines(csv, std::iter::once(CSV_HEADER.to_string()).chain(body))?;
    write_lines(jsonl, rows.iter().map(|r| serde_json::to_string(r).expect("rows serialize")))
}

/// Single-model report in the same CSV shape as the ablation table.
pub fn write_report(csv: &Path, jsonl: &Path, classifier: &Classifier, report: &EvalReport) -> Result<()> {
    let cell = AblationCell::new(
        classifier.spec.features.image,
        classifier.spec.features.text,
        classifier.spec.architecture,
    );
    let line = csv_line(&cell, Some(classifier.train_config.seed), Some(report));
    write_lines(csv, [CSV_HEADER.to_string(), line])?;
    write_lines(jsonl, [serde_json::to_string(report).expect("reports serialize")])
}
