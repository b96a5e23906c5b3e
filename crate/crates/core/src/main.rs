//! `groundlink`: train, infer, evaluate, synthesize, inspect.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use groundlink::corpus::{
    read_jsonl, write_jsonl, CorpusManifest, GroundTruthRecord, ManifestExample, Model,
    PredictionRecord,
};
use groundlink::error::{Error, Result};
use groundlink::eval::{accuracy, format_report, EvalRecord};
use groundlink::inference::{ground, GroundingInput, GroundingParams};
use groundlink::linker::{CooccurrenceStats, RelevanceMatrix};
use groundlink::synth;
use groundlink::vocab::Vocabulary;
use groundlink::BoundingBox;

#[derive(Parser)]
#[command(name = "groundlink", version, about = "Unsupervised word-to-concept grounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary and relevance matrix from a corpus
    Train(TrainArgs),
    /// Ground every corpus example with a trained model
    Infer(InferArgs),
    /// Score predictions against ground truth
    Eval(EvalArgs),
    /// Generate a synthetic corpus with planted links
    Synth(SynthArgs),
    /// Query a trained model: relevant concepts or word distances
    Inspect(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary size K (plus the unknown token)
    #[arg(long)]
    vocab_size: usize,
    /// Output model file (JSON); the vocabulary is also written next to it
    #[arg(long)]
    out: PathBuf,
    /// Confidence threshold for concept activation
    #[arg(long, default_value_t = 0.5)]
    activation_conf: f64,
    /// Minimum detected-box area fraction for concept activation
    #[arg(long, default_value_t = 0.05)]
    activation_area: f64,
}

#[derive(Args)]
struct InferArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    corpus: PathBuf,
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Significance level: select a concept only when its best E value is
    /// strictly below this
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    /// Output predictions file (JSON Lines)
    #[arg(long)]
    out: PathBuf,
    /// Let the unknown token participate in concept selection
    #[arg(long)]
    include_unknown: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions file (JSON Lines)
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth file (JSON Lines)
    #[arg(long)]
    gt: PathBuf,
    /// IoU threshold; a prediction is correct when IoU is strictly above it
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Include the per-category table
    #[arg(long)]
    by_category: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config (JSON); missing fields take their defaults
    #[arg(long)]
    config: PathBuf,
    /// Output corpus directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Word to look up
    #[arg(long, conflicts_with = "embed_dist", required_unless_present = "embed_dist")]
    word: Option<String>,
    /// How many concepts to list for --word
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Print the Euclidean distance between two words' relevance rows
    #[arg(long, num_args = 2, value_names = ["WORD", "WORD"])]
    embed_dist: Option<Vec<String>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("GROUND_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("the global thread pool is built before any parallel work");
            }
            _ => {
                eprintln!("groundlink: GROUND_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groundlink: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let manifest = CorpusManifest::load(&args.corpus)?;
    if manifest.examples.is_empty() {
        return Err(Error::InvalidInput(format!(
            "corpus {} has no examples",
            args.corpus.display()
        )));
    }
    let vocab = Vocabulary::build(
        manifest.examples.iter().map(|e| e.query.as_str()),
        args.vocab_size,
    )?;

    let observations: Vec<_> = manifest
        .examples
        .par_iter()
        .map(|example| -> Result<_> {
            let actives = example_activations(
                &manifest,
                &args.corpus,
                example,
                args.activation_conf,
                args.activation_area,
            )?;
            Ok((vocab.tokenize(&example.query), actives))
        })
        .collect::<Result<_>>()?;

    let mut stats =
        CooccurrenceStats::new(vocab.tokens().to_vec(), manifest.concepts.clone());
    for (tokens, actives) in &observations {
        stats.record(tokens, actives)?;
    }
    let model = Model {
        matrix: RelevanceMatrix::build(stats),
        confidence_threshold: args.activation_conf,
        area_threshold: args.activation_area,
    };
    model.save(&args.out)?;
    vocab.save(&args.out.with_extension("vocab"))?;
    eprintln!(
        "trained on {} examples: {} tokens, {} concepts -> {}",
        manifest.examples.len(),
        model.matrix.tokens().len(),
        model.matrix.concepts().len(),
        args.out.display()
    );
    Ok(())
}

/// Per-concept active bits for one example, in manifest concept order.
fn example_activations(
    manifest: &CorpusManifest,
    manifest_path: &Path,
    example: &ManifestExample,
    confidence_threshold: f64,
    area_threshold: f64,
) -> Result<Vec<bool>> {
    let maps = manifest.load_maps(manifest_path, example)?;
    let mut actives = vec![false; manifest.concepts.len()];
    for map in &maps {
        let idx = manifest
            .concepts
            .iter()
            .position(|c| c == map.concept_id())
            .expect("manifest load rejected unknown concepts");
        let act = groundlink::detect_activation(map, confidence_threshold, area_threshold);
        actives[idx] = act.active;
    }
    Ok(actives)
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let manifest = CorpusManifest::load(&args.corpus)?;
    let model = Model::load(&args.model)?;
    let vocab = model.vocabulary();
    let params = GroundingParams {
        tau: args.tau,
        confidence_threshold: model.confidence_threshold,
        area_threshold: model.area_threshold,
        include_unknown: args.include_unknown,
    };
    let predictions: Vec<PredictionRecord> = manifest
        .examples
        .par_iter()
        .map(|example| -> Result<PredictionRecord> {
            let input = GroundingInput {
                image_id: example.id.clone(),
                query: example.query.clone(),
                width: example.width,
                height: example.height,
                maps: manifest.load_maps(&args.corpus, example)?,
            };
            let result = ground(&input, &model.matrix, &vocab, &params)?;
            Ok(PredictionRecord::from_result(&example.id, &result))
        })
        .collect::<Result<_>>()?;
    write_jsonl(&args.out, &predictions)?;
    eprintln!(
        "grounded {} examples -> {}",
        predictions.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let predictions: Vec<PredictionRecord> = read_jsonl(&args.pred)?;
    let gt: Vec<GroundTruthRecord> = read_jsonl(&args.gt)?;
    let gt_by_id: BTreeMap<&str, &GroundTruthRecord> =
        gt.iter().map(|g| (g.id.as_str(), g)).collect();

    let missing_gt: Vec<&str> = predictions
        .iter()
        .map(|p| p.id.as_str())
        .filter(|id| !gt_by_id.contains_key(id))
        .collect();
    if !missing_gt.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no ground truth for ids: {}",
            missing_gt.join(", ")
        )));
    }
    let pred_ids: std::collections::BTreeSet<&str> =
        predictions.iter().map(|p| p.id.as_str()).collect();
    let missing_pred: Vec<&str> = gt_by_id
        .keys()
        .copied()
        .filter(|id| !pred_ids.contains(id))
        .collect();
    if !missing_pred.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no prediction for ids: {}",
            missing_pred.join(", ")
        )));
    }

    let records: Vec<EvalRecord> = predictions
        .iter()
        .map(|p| -> Result<EvalRecord> {
            let g = gt_by_id[p.id.as_str()];
            Ok(EvalRecord {
                id: p.id.clone(),
                predicted: p.bbox()?,
                ground_truth: BoundingBox::from_array(g.box_)?,
                category: g.category.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let report = accuracy(&records, args.iou)?;
    print!("{}", format_report(&report, args.by_category));

    let mut json = serde_json::to_string_pretty(&report).expect("report serialization cannot fail");
    json.push('\n');
    let report_path = sibling_with_suffix(&args.pred, ".report.json");
    groundlink::corpus::atomic_write(&report_path, json.as_bytes())?;
    Ok(())
}

/// `pred.jsonl` -> `pred.jsonl.report.json` in the same directory.
fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let config: synth::SynthConfig =
        serde_json::from_str(&text).map_err(|e| Error::format(&args.config, e.to_string()))?;
    let world = synth::generate(&config)?;

    let maps_dir = args.out.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(|e| Error::io(&maps_dir, e))?;

    let mut examples = Vec::with_capacity(world.examples.len());
    let mut gt_records = Vec::with_capacity(world.examples.len());
    for example in &world.examples {
        let mut map_paths = BTreeMap::new();
        for map in &example.maps {
            let rel = format!("maps/{}_{}.smap", example.id, map.concept_id());
            map.write_smap(&args.out.join(&rel))?;
            map_paths.insert(map.concept_id().to_string(), rel);
        }
        examples.push(ManifestExample {
            id: example.id.clone(),
            query: example.query.clone(),
            width: example.width,
            height: example.height,
            maps: map_paths,
            gt_box: Some(example.gt_box.to_array()),
            category: Some(example.category.clone()),
        });
        gt_records.push(GroundTruthRecord {
            id: example.id.clone(),
            box_: example.gt_box.to_array(),
            category: Some(example.category.clone()),
        });
    }
    let manifest = CorpusManifest {
        concepts: world.concepts.clone(),
        examples,
    };
    manifest.save(&args.out.join("manifest.json"))?;
    write_jsonl(&args.out.join("gt.jsonl"), &gt_records)?;
    eprintln!(
        "wrote {} examples ({} concepts, {} words) -> {}",
        world.examples.len(),
        world.concepts.len(),
        world.words.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    if let Some(pair) = &args.embed_dist {
        let d = model.matrix.word_embedding_distance(&pair[0], &pair[1])?;
        println!("{d:.12e}");
        return Ok(());
    }
    let word = args.word.as_deref().expect("clap requires --word or --embed-dist");
    let top = model.matrix.top_relevant_concepts(word, args.top_k)?;
    for (concept, e) in top {
        println!("{concept}\t{e:.12e}");
    }
    Ok(())
}
