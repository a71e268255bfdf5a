use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use relcl::corpus::folds::{load_folds, make_folds};
use relcl::corpus::io::load_corpus;
use relcl::corpus::record::SentenceRecord;
use relcl::corpus::stats::corpus_stats;
use relcl::corpus::synth::{synth_corpus, SynthConfig};
use relcl::encoder::source::load_sidecars;
use relcl::evaluation::report::{load_predictions, score_ner, score_re_minus, score_re_strict};
use relcl::inference::checks::{linear_probe, similarity_check, ProbeOptions};
use relcl::inference::extract::{
    entity_space_from, extract_entity_reps, extract_relation_reps, relation_space_from,
    ExtractionMode,
};
use relcl::inference::knn::{knn_classify, KnnConfig, KnnMetric};
use relcl::inference::space::{load_space, write_space};
use relcl::numeric::ParamSet;
use relcl::pipeline::{run_pipeline, PipelineManifest, Stage};
use relcl::training::config::{ModelKind, TrainConfig};
use relcl::training::run::{load_trained, train, TrainedModel};

#[derive(Parser)]
#[command(name = "relcl", about = "Contrastive relation learning over token embeddings", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus utilities: validate, stats, synthesize
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Train one of the contrastive models on a fold
    Train(TrainArgs),
    /// Inference over a stored representation space
    Infer {
        #[command(subcommand)]
        command: InferCommand,
    },
    /// Intermediate evaluation protocols
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Export labeled representations for external tools
    Export {
        #[command(subcommand)]
        command: ExportCommand,
    },
    /// Score a prediction file against gold records
    Score(ScoreArgs),
    /// Run the end-to-end pipeline
    Pipeline(PipelineArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Load every record and check all invariants
    Validate { dir: PathBuf },
    /// Corpus statistics, optionally per split
    Stats {
        dir: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic corpus
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        sentences: usize,
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    fold: usize,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Fold count when no split files are given
    #[arg(long, default_value_t = 10)]
    folds: usize,
}

#[derive(Subcommand)]
enum InferCommand {
    /// Classify query vectors against a space file
    Knn {
        #[arg(long)]
        space: PathBuf,
        /// Query file in the same space format; labels are treated as gold
        /// and an accuracy line is printed to stderr
        #[arg(long)]
        queries: PathBuf,
        #[arg(short, long)]
        k: usize,
        #[arg(long, default_value = "cosine")]
        metric: String,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Graph similarity check for a trained sentence-level model
    Simcheck {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        fold: usize,
        #[arg(long, default_value_t = 7)]
        negatives: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Linear relation probe over a trained (or baseline) encoder
    Probe {
        /// Model directory; omit for the frozen-base baseline
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        fold: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ExportCommand {
    /// Export labeled relation or entity representations
    Reps {
        #[arg(long)]
        mode: String,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        emb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Negatives per relation in gold-pair mode
        #[arg(long, default_value_t = 3)]
        negatives: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    mode: String,
    /// For re-minus: score the classifier's raw head pairs instead of the
    /// pairs derived from emitted relations
    #[arg(long, default_value_t = false)]
    raw_pairs: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    fold: usize,
    /// Comma-separated subset of prep,train-cldr,train-clner,extract,knn,score
    #[arg(long, default_value = "prep,train-cldr,train-clner,extract,knn,score")]
    stages: String,
}

fn fold_records(
    data: &Path,
    splits: Option<&PathBuf>,
    folds: usize,
    fold: usize,
    seed: u64,
) -> Result<(Vec<SentenceRecord>, Vec<String>, Vec<String>)> {
    let records = load_corpus(data)?;
    let all = match splits {
        Some(dir) => load_folds(dir)?,
        None => make_folds(&records, folds, seed)?,
    };
    let split = all
        .iter()
        .find(|f| f.fold_index == fold)
        .with_context(|| format!("fold {fold} not found"))?;
    Ok((records, split.train_ids.clone(), split.test_ids.clone()))
}

fn select<'a>(records: &'a [SentenceRecord], ids: &[String]) -> Vec<&'a SentenceRecord> {
    ids.iter().filter_map(|id| records.iter().find(|r| &r.id == id)).collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Corpus { command } => corpus_command(command),
        Command::Train(args) => train_command(args),
        Command::Infer { command } => infer_command(command),
        Command::Eval { command } => eval_command(command),
        Command::Export { command } => export_command(command),
        Command::Score(args) => score_command(args),
        Command::Pipeline(args) => pipeline_command(args),
    }
}

fn corpus_command(command: CorpusCommand) -> Result<()> {
    match command {
        CorpusCommand::Validate { dir } => {
            let records = load_corpus(&dir)?;
            println!("{} records valid", records.len());
        }
        CorpusCommand::Stats { dir, splits } => {
            let records = load_corpus(&dir)?;
            let stats = corpus_stats(&records);
            println!(
                "sentences {}\nrelations {}\nentities {}\nunique_drugs {}\nunique_aes {}",
                stats.sentence_count,
                stats.relation_count,
                stats.entity_count,
                stats.unique_drug_count,
                stats.unique_ae_count
            );
            if let Some(dir) = splits {
                for fold in load_folds(&dir)? {
                    let (train, test) = fold.select(&records);
                    let tr = corpus_stats(train.iter().copied());
                    let te = corpus_stats(test.iter().copied());
                    println!(
                        "fold {}: train_relations {} train_entities {} test_relations {} test_entities {}",
                        fold.fold_index,
                        tr.relation_count,
                        tr.entity_count,
                        te.relation_count,
                        te.entity_count
                    );
                }
            }
        }
        CorpusCommand::Synth { seed, sentences, density, out } => {
            let config = SynthConfig {
                sentences,
                seed,
                relation_density: density,
                ..SynthConfig::default()
            };
            let records = synth_corpus(&config)?;
            relcl::corpus::io::write_corpus(&records, &out)?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
    }
    Ok(())
}

fn train_command(args: TrainArgs) -> Result<()> {
    let kind = ModelKind::parse(&args.model)?;
    let config = TrainConfig::from_file(&args.config, kind, Some(kind.as_str()))?;
    let (records, train_ids, _) =
        fold_records(&args.data, args.splits.as_ref(), args.folds, args.fold, config.seed)?;
    let train_refs = select(&records, &train_ids);
    let source = load_sidecars(&records, &args.emb)?;
    let outcome = train(&config, &train_refs, &source, Some(&args.out))?;
    println!(
        "trained {} for {} epochs; best epoch {}; final train loss {}",
        kind,
        config.epochs,
        outcome.history.best_epoch,
        outcome.history.epoch_train_loss.last().unwrap()
    );
    Ok(())
}

fn infer_command(command: InferCommand) -> Result<()> {
    match command {
        InferCommand::Knn { space, queries, k, metric } => {
            let space = load_space(&space)?;
            let queries = load_space(&queries)?;
            let metric = KnnMetric::parse(&metric)?;
            let query_vectors: Vec<Vec<f64>> =
                queries.vectors.iter().map(|(_, v)| v.clone()).collect();
            let predictions = knn_classify(&space, &query_vectors, &KnnConfig { k, metric })?;
            let mut agree = 0usize;
            for ((gold, _), predicted) in queries.vectors.iter().zip(predictions.iter()) {
                println!("{predicted}");
                if gold == predicted {
                    agree += 1;
                }
            }
            eprintln!(
                "accuracy {:.4} over {} queries",
                agree as f64 / predictions.len().max(1) as f64,
                predictions.len()
            );
        }
    }
    Ok(())
}

fn eval_command(command: EvalCommand) -> Result<()> {
    match command {
        EvalCommand::Simcheck { model_dir, data, emb, splits, fold, negatives, seed } => {
            let (records, _, test_ids) = fold_records(&data, splits.as_ref(), 10, fold, seed)?;
            let source = load_sidecars(&records, &emb)?;
            let model = load_trained(&model_dir, &source)?;
            let TrainedModel::Clgs(model) = model else {
                bail!("similarity check needs a sentence-level (clgs) model");
            };
            let test = select(&records, &test_ids);
            let accuracy = similarity_check(&model, &test, negatives, seed)?;
            println!("similarity-check accuracy {accuracy:.4} over fold {fold} test set");
        }
        EvalCommand::Probe { model_dir, data, emb, splits, fold, seed } => {
            let (records, train_ids, test_ids) =
                fold_records(&data, splits.as_ref(), 10, fold, seed)?;
            let source = load_sidecars(&records, &emb)?;
            let train_refs = select(&records, &train_ids);
            let test_refs = select(&records, &test_ids);
            let options = ProbeOptions { seed, ..ProbeOptions::default() };
            let report = match model_dir {
                Some(dir) => {
                    let model = load_trained(&dir, &source)?;
                    linear_probe(model.encoder(), model.params(), &train_refs, &test_refs, options)?
                }
                None => {
                    let mut params = ParamSet::new();
                    let baseline = relcl::encoder::stack::EncoderStack::new(
                        source.clone(),
                        0,
                        false,
                        &mut params,
                        "encoder",
                        seed,
                    );
                    linear_probe(&baseline, &params, &train_refs, &test_refs, options)?
                }
            };
            println!(
                "probe precision {:.4} recall {:.4} f1 {:.4} degenerate {} ({} train examples, {} test candidates)",
                report.score.precision,
                report.score.recall,
                report.score.f1,
                report.score.degenerate,
                report.train_examples,
                report.test_candidates
            );
        }
    }
    Ok(())
}

fn export_command(command: ExportCommand) -> Result<()> {
    match command {
        ExportCommand::Reps { mode, model_dir, data, emb, out, negatives, seed } => {
            let records = load_corpus(&data)?;
            let refs: Vec<&SentenceRecord> = records.iter().collect();
            let source = load_sidecars(&records, &emb)?;
            let model = load_trained(&model_dir, &source)?;
            let fingerprint = source.fingerprint();
            let space = match mode.as_str() {
                "relation" => {
                    let reps = extract_relation_reps(
                        model.encoder(),
                        model.params(),
                        &refs,
                        ExtractionMode::GoldPairs { negatives_per_relation: negatives, seed },
                    )?;
                    relation_space_from(&reps, &fingerprint)?
                }
                "entity" => {
                    let reps = extract_entity_reps(model.encoder(), model.params(), &refs)?;
                    entity_space_from(&reps, &fingerprint)?
                }
                other => bail!("unknown export mode `{other}` (use relation|entity)"),
            };
            write_space(&space, &out)?;
            println!("wrote {} labeled vectors to {}", space.len(), out.display());
        }
    }
    Ok(())
}

fn score_command(args: ScoreArgs) -> Result<()> {
    let gold = load_corpus(&args.gold)?;
    let predictions = load_predictions(&args.pred)?;
    let report = match args.mode.as_str() {
        "ner" => score_ner(&gold, &predictions)?,
        "re" => score_re_strict(&gold, &predictions)?,
        "re-minus" => score_re_minus(&gold, &predictions, args.raw_pairs)?,
        other => bail!("unknown mode `{other}` (use ner|re|re-minus)"),
    };
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = args.out {
        std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn pipeline_command(args: PipelineArgs) -> Result<()> {
    let stages: Vec<Stage> = args
        .stages
        .split(',')
        .map(|s| Stage::parse(s.trim()))
        .collect::<Result<_, _>>()?;
    let manifest = PipelineManifest {
        data_dir: args.data,
        emb_dir: args.emb,
        splits_dir: args.splits,
        config_path: args.config,
        out_dir: args.out,
        seed: args.seed,
        fold: args.fold,
    };
    let report = run_pipeline(&manifest, &stages)?;
    for stage in &report.ran {
        println!("stage {} done", stage.as_str());
    }
    for (name, score) in &report.scores {
        println!(
            "{name}: precision {:.4} recall {:.4} f1 {:.4}",
            score.score.precision, score.score.recall, score.score.f1
        );
    }
    Ok(())
}
