use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use foilcap_core::corpus::{
    leaky_concentration, load_detections, load_foil_json, read_corpus, synth_generate, write_corpus, FoilSplit,
    PosSubset, SplitCounts, SynthConfig,
};
use foilcap_core::eval::{self, AblationSpec};
use foilcap_core::explain::{foil_word_hit_rate, KernelConfig};
use foilcap_core::features::{synthetic_embeddings, EmbeddingTable, ImageSpec, ObjectSource, TextSpec};
use foilcap_core::nn::{Architecture, TrainConfig};
use foilcap_core::{Classifier, Corpus, Error, ModelSpec, Result};
use serde::Serialize;

use crate::{config, AblateArgs, EvalArgs, ExplainArgs, IngestArgs, ModelOptions, SynthArgs, TrainArgs};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io(path))?;
    file.write_all(body.as_bytes()).map_err(io(path))
}

/// Create the output directory and record the resolved options in it.
fn prepare_out<T: Serialize>(out: &Path, command: &str, args: &T) -> Result<()> {
    fs::create_dir_all(out).map_err(io(out))?;
    write_file(&out.join("resolved.conf"), &config::render(command, args))
}

fn usage(message: impl Into<String>) -> Error {
    Error::Config(message.into())
}

fn counts_line(name: &str, c: SplitCounts) -> String {
    format!("{name}: {} captions ({} REAL, {} FOIL)", c.total, c.real, c.foil)
}

fn corpus_summary(corpus: &Corpus) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", counts_line("train", corpus.train_counts()));
    let _ = writeln!(s, "{}", counts_line("test", corpus.test_counts()));
    let _ = write!(s, "images: {}", corpus.images.len());
    s
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let pos: PosSubset = args.pos.parse().map_err(usage)?;
    let train = FoilSplit::new(&args.foil_json, &args.coco_instances);
    let test = match (&args.test_foil_json, &args.test_coco_instances) {
        (Some(f), Some(i)) => Some(FoilSplit::new(f, i)),
        _ => None,
    };
    let mut corpus = load_foil_json(&train, test.as_ref(), pos)?;
    let mut detection_note = None;
    if let Some(path) = &args.detections {
        let (with, report) = load_detections(path, &corpus, args.threshold)?;
        corpus = with;
        detection_note = Some(format!(
            "detections: {} kept, {} below threshold, {} for unknown images, {} images without detections",
            report.kept, report.below_threshold, report.unmatched, report.missing_images
        ));
    }
    prepare_out(&args.out, "ingest", args)?;
    write_corpus(&args.out, &corpus)?;
    println!("{}", corpus_summary(&corpus));
    if let Some(note) = detection_note {
        println!("{note}");
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let leaky_words: Vec<String> = args
        .leaky_words
        .as_deref()
        .map(|s| s.split(',').map(|w| w.trim().to_string()).filter(|w| !w.is_empty()).collect())
        .unwrap_or_default();
    let cfg = SynthConfig {
        n_images: args.n_images,
        captions_per_image: args.captions_per_image,
        bias_strength: args.bias,
        seed: args.seed,
        leaky_words,
        ..SynthConfig::default()
    };
    let corpus = synth_generate(&cfg)?;
    prepare_out(&args.out, "synth", args)?;
    write_corpus(&args.out, &corpus)?;
    if args.embedding_dim > 0 {
        synthetic_embeddings(&corpus, args.embedding_dim, args.seed).write(&args.out.join("embeddings.txt"))?;
    }
    println!("{}", corpus_summary(&corpus));
    let leaky = cfg.leaky_set(&corpus.categories)?;
    if let Some(share) = leaky_concentration(corpus.train.iter().chain(&corpus.test), &corpus.categories, &leaky) {
        println!("leaky-word concentration: {:.2}% of FOIL captions", 100.0 * share);
    }
    Ok(())
}

fn image_spec(feats: &str, source: &str) -> Result<ImageSpec> {
    let source = match source {
        "gold" => ObjectSource::Gold,
        "pred" => ObjectSource::Predicted,
        other => return Err(usage(format!("unknown object source {other:?}"))),
    };
    Ok(match feats {
        "none" => ImageSpec::None,
        "mention" => ImageSpec::Mention { source },
        "freq" => ImageSpec::Frequency { source },
        "cnn" => ImageSpec::Embedding,
        other => return Err(usage(format!("unknown image features {other:?}"))),
    })
}

fn widths(list: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(|w| w.trim().parse::<usize>().ok().filter(|w| *w > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| usage(format!("--mlp-hidden expects comma-separated positive widths, got {list:?}")))
}

fn model_spec(arch: Architecture, image: ImageSpec, text: TextSpec, o: &ModelOptions) -> Result<ModelSpec> {
    let mut spec = ModelSpec::standard(arch, image, text);
    spec.mlp_hidden = widths(&o.mlp_hidden)?;
    spec.embed_dim = o.embed_dim;
    spec.hidden_dim = o.hidden_dim;
    spec.init_cell = o.init_cell;
    spec.features.min_count = o.min_count;
    spec.features.max_len = o.max_len;
    spec.features.standardize = o.standardize;
    Ok(spec)
}

fn train_config(o: &ModelOptions) -> TrainConfig {
    TrainConfig {
        epochs: o.epochs,
        batch_size: o.batch_size,
        seed: o.seed,
        patience: o.patience,
        validation_fraction: o.validation_fraction,
        learning_rate: o.learning_rate,
    }
}

fn embeddings_path(explicit: Option<&PathBuf>, corpus: &Path) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| corpus.join("embeddings.txt"))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let arch: Architecture = args.model.parse().map_err(usage)?;
    let image = image_spec(&args.image_feats, &args.source)?;
    let text = match &args.text_feats {
        Some(t) => t.parse().map_err(usage)?,
        None => ModelSpec::default_text(arch),
    };
    let spec = model_spec(arch, image, text, &args.options)?;
    spec.validate()?;
    let corpus = read_corpus(&args.corpus)?;
    let embeddings = if image == ImageSpec::Embedding {
        let path = embeddings_path(args.options.embeddings.as_ref(), &args.corpus);
        Some(Arc::new(EmbeddingTable::load(&path, None)?))
    } else {
        None
    };
    let config = train_config(&args.options);
    let (model, log) = Classifier::fit(&spec, &corpus, embeddings, &config)?;
    prepare_out(&args.out, "train", args)?;
    model.save(&args.out.join("model.json"))?;
    let mut csv = String::from("epoch,train_loss,validation_accuracy\n");
    for e in &log.epochs {
        let _ = writeln!(csv, "{},{},{}", e.epoch, e.train_loss, e.validation_accuracy);
    }
    write_file(&args.out.join("train_log.csv"), &csv)?;
    println!(
        "{}: {} epochs, best epoch {} with validation accuracy {:.4} ({} train / {} validation captions)",
        spec.descriptor(),
        log.epochs.len(),
        log.best_epoch,
        log.best_validation_accuracy(),
        log.train_size,
        log.validation_size
    );
    Ok(())
}

fn load_model(path: &Path, embeddings: Option<&PathBuf>, corpus: &Path) -> Result<Classifier> {
    let path = if path.is_dir() { path.join("model.json") } else { path.to_path_buf() };
    let model = Classifier::load(&path)?;
    if !model.needs_embeddings() {
        return Ok(model);
    }
    let table = EmbeddingTable::load(&embeddings_path(embeddings, corpus), Some(model.featurizer.image_dim))?;
    model.attach_embeddings(Arc::new(table))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let model = load_model(&args.model, args.embeddings.as_ref(), &args.corpus)?;
    let report = eval::evaluate(&model, &corpus)?;
    prepare_out(&args.out, "eval", args)?;
    eval::write_report(&args.out.join("report.csv"), &args.out.join("report.jsonl"), &model, &report)?;
    println!("{}", report.summary_line());
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let grid = match &args.grid {
        Some(path) => AblationSpec::parse(&fs::read_to_string(path).map_err(io(path))?)?,
        None if args.preset == "full" => AblationSpec::full(),
        None => AblationSpec::standard(),
    };
    if args.jobs == Some(0) {
        return Err(usage("--jobs must be positive"));
    }
    let corpus = read_corpus(&args.corpus)?;
    let wants_cnn = grid.cells.iter().any(|c| c.image == ImageSpec::Embedding);
    let embeddings = if wants_cnn {
        let path = embeddings_path(args.options.embeddings.as_ref(), &args.corpus);
        match EmbeddingTable::load(&path, None) {
            Ok(t) => Some(Arc::new(t)),
            // cnn cells will be reported as failed
            Err(e) => {
                log::warn!("{e}");
                None
            }
        }
    } else {
        None
    };
    let base = model_spec(Architecture::Mlp, ImageSpec::None, TextSpec::Bow, &args.options)?;
    let config = train_config(&args.options);
    let rows = eval::ablate(&grid, &corpus, embeddings, &base, &config, args.jobs)?;
    prepare_out(&args.out, "ablate", args)?;
    eval::write_ablation(&args.out.join("ablation.csv"), &args.out.join("ablation.jsonl"), &rows)?;
    println!("{:<14}{:<8}{:<9}{:>8}{:>8}{:>8}", "image", "text", "model", "overall", "real", "foil");
    for row in &rows {
        let (o, r, f) = match &row.report {
            Some(rep) => (rep.overall_display(), rep.real_display(), rep.foil_display()),
            None => ("failed".into(), String::new(), String::new()),
        };
        println!(
            "{:<14}{:<8}{:<9}{o:>8}{r:>8}{f:>8}",
            row.cell.image_label(),
            row.cell.text_label(),
            row.cell.classifier.to_string()
        );
    }
    Ok(())
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let model = load_model(&args.model, args.embeddings.as_ref(), &args.corpus)?;
    let config = KernelConfig {
        n_samples: args.n_samples,
        kernel_width: args.kernel_width,
        seed: args.seed,
    };
    let (summary, records) = foil_word_hit_rate(&model, &corpus, &config)?;
    prepare_out(&args.out, "explain", args)?;
    let mut audit = String::new();
    for r in &records {
        audit.push_str(&serde_json::to_string(r).expect("records serialize"));
        audit.push('\n');
    }
    write_file(&args.out.join("audit.jsonl"), &audit)?;
    write_file(&args.out.join("summary.txt"), &format!("{}\n", summary.line()))?;
    println!("{}", summary.line());
    Ok(())
}
