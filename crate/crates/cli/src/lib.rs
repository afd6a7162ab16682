//! Command implementations shared by the `titlepress`, `corpus` and
//! `pretrain` binaries.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use titlepress::corpus::{
    encode_example, normalize_text, read_jsonl, split_dataset, tokenize, write_jsonl, RawTitlePair, Split, Vocabulary,
};
use titlepress::embedder::WordVectors;
use titlepress::experiments::{
    emit_report, encode_pretraining, load_checkpoint, low_resource_sweep, nested_subsample, pretrain_network,
    run_ablation, save_checkpoint, AblationResult, AblationSpec, Datasets, LoadedCheckpoint, SweepRecord,
};
use titlepress::pretrain::{
    build_pretraining_corpus, median_length, pretrain_class_weights, PretrainExample, SkipGramModel,
};
use titlepress::train_eval::{evaluate, fine_tune, train};
use titlepress::{Error, Result, TitleModel};

pub use config::AppConfig;

pub const DEVICE_VAR: &str = "TITLEPRESS_DEVICE";
pub const ABLATION_FILE: &str = "ablation_results.json";
pub const SWEEP_FILE: &str = "sweep_records.json";

/// Flags accepted by every binary.
#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for histories, metrics and reports.
    #[arg(long, global = true, default_value = ".")]
    pub outdir: PathBuf,
}

#[derive(Parser, Debug)]
#[command(name = "titlepress", version, about = "Product-title compression toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write template-generated title pairs.
    Synth(SynthArgs),
    /// Normalize raw pairs and drop those whose short title does not align.
    Normalize(NormalizeArgs),
    BuildVocab(BuildVocabArgs),
    /// Seeded 72/8/20 split into train.jsonl, val.jsonl and test.jsonl.
    Split(SplitArgs),
    TrainSkipgram(SkipGramArgs),
    /// Build the replaced-token-detection corpus.
    PretrainGen(GenArgs),
    /// Pre-train the network as a replaced-token detector.
    Pretrain(PretrainArgs),
    /// Train on labeled pairs, from a pre-trained checkpoint or from scratch.
    Finetune(FinetuneArgs),
    Evaluate(EvaluateArgs),
    Ablate(AblateArgs),
    Sweep(SweepArgs),
    /// Turn ablation and sweep results into tables and a plot.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// JSONL of `{"long": ..., "short": ...}` records.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct SkipGramArgs {
    #[arg(long)]
    pub titles: PathBuf,
    /// Model file (JSON), used by pretrain-gen.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the input vectors in text format.
    #[arg(long)]
    pub vectors_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub titles: PathBuf,
    /// Replacement fraction.
    #[arg(long)]
    pub f: Option<f64>,
    /// Context radius used when scoring replacements.
    #[arg(long)]
    pub window: Option<usize>,
    /// Trained skip-gram model; one is trained on `--titles` when absent.
    #[arg(long)]
    pub skipgram: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub val_corpus: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Directory holding train.jsonl, val.jsonl and test.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    /// Vocabulary file; built from the training titles when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pre-trained checkpoint; trains from scratch when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Labeled pairs to score.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Variant name; repeat for several. All variants when absent.
    #[arg(long)]
    pub variant: Vec<String>,
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub pretrained: PathBuf,
    /// Comma-separated training fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory with ablation and sweep results; defaults to `--outdir`.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

/// Fails unless the requested device is the CPU.
pub fn check_device(value: Option<&str>) -> Result<()> {
    match value {
        None => Ok(()),
        Some(v) if v.trim().eq_ignore_ascii_case("cpu") || v.trim().is_empty() => Ok(()),
        Some(v) => Err(Error::Device(v.to_owned())),
    }
}

pub fn run(global: &GlobalArgs, command: &Command) -> Result<()> {
    check_device(std::env::var(DEVICE_VAR).ok().as_deref())?;
    let config = AppConfig::load(global.config.as_deref(), global.seed)?;
    fs::create_dir_all(&global.outdir)?;
    let outdir = global.outdir.as_path();
    match command {
        Command::Synth(a) => synth(a, &config),
        Command::Normalize(a) => normalize(a),
        Command::BuildVocab(a) => build_vocab(a),
        Command::Split(a) => split(a, &config, outdir),
        Command::TrainSkipgram(a) => train_skipgram(a, &config),
        Command::PretrainGen(a) => pretrain_gen(a, &config),
        Command::Pretrain(a) => pretrain(a, &config, outdir),
        Command::Finetune(a) => finetune(a, &config, outdir),
        Command::Evaluate(a) => evaluate_cmd(a, outdir),
        Command::Ablate(a) => ablate(a, &config, outdir),
        Command::Sweep(a) => sweep(a, &config, outdir),
        Command::Report(a) => report(a, outdir),
    }
}

fn long_tokens(pairs: &[RawTitlePair]) -> Vec<Vec<String>> {
    pairs.iter().map(|p| tokenize(&normalize_text(&p.long))).collect()
}

fn synth(a: &SynthArgs, config: &AppConfig) -> Result<()> {
    let pairs = titlepress::synthetic::generate_pairs(a.count, config.seed);
    write_jsonl(&a.out, &pairs)?;
    println!("wrote {} pairs to {}", pairs.len(), a.out.display());
    Ok(())
}

fn normalize(a: &NormalizeArgs) -> Result<()> {
    let raw: Vec<RawTitlePair> = read_jsonl(&a.input)?;
    let mut kept = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for (line, pair) in raw.iter().enumerate() {
        let norm = RawTitlePair {
            long: normalize_text(&pair.long),
            short: pair.short.as_deref().map(normalize_text),
        };
        if tokenize(&norm.long).is_empty() {
            log::warn!("line {}: empty long title", line + 1);
            dropped += 1;
        } else if let Err(e) = norm.validate() {
            log::warn!("line {}: {e}", line + 1);
            dropped += 1;
        } else {
            kept.push(norm);
        }
    }
    write_jsonl(&a.out, &kept)?;
    println!("kept {} pairs, flagged and dropped {dropped}", kept.len());
    Ok(())
}

fn build_vocab(a: &BuildVocabArgs) -> Result<()> {
    let pairs: Vec<RawTitlePair> = read_jsonl(&a.input)?;
    let vocab = Vocabulary::build(long_tokens(&pairs))?;
    vocab.save(&a.out)?;
    println!("{} words, {} characters", vocab.word_count(), vocab.char_count());
    Ok(())
}

fn split(a: &SplitArgs, config: &AppConfig, outdir: &Path) -> Result<()> {
    let pairs: Vec<RawTitlePair> = read_jsonl(&a.input)?;
    let parts = split_dataset(&pairs, config.seed)?;
    for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        write_jsonl(outdir.join(format!("{name}.jsonl")), part)?;
    }
    println!("train {} val {} test {}", parts.train.len(), parts.val.len(), parts.test.len());
    Ok(())
}

fn train_skipgram(a: &SkipGramArgs, config: &AppConfig) -> Result<()> {
    let titles = long_tokens(&read_jsonl(&a.titles)?);
    let model = SkipGramModel::train(&titles, &config.skipgram)?;
    model.save(&a.out)?;
    if let Some(path) = &a.vectors_out {
        model.word_vectors().save(path)?;
    }
    println!("{} words, dim {}", model.words.len(), model.dim());
    Ok(())
}

fn pretrain_gen(a: &GenArgs, config: &AppConfig) -> Result<()> {
    let titles = long_tokens(&read_jsonl(&a.titles)?);
    let mut model = match &a.skipgram {
        Some(path) => SkipGramModel::load(path)?,
        None => {
            let sg = titlepress::pretrain::SkipGramConfig {
                window: a.window.unwrap_or(config.skipgram.window),
                ..config.skipgram.clone()
            };
            SkipGramModel::train(&titles, &sg)?
        }
    };
    if let Some(w) = a.window {
        if w == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        model.window = w;
    }
    let corruption = titlepress::pretrain::CorruptionConfig {
        fraction: a.f.unwrap_or(config.corruption.fraction),
        max_len: config.model.max_len,
        ..config.corruption.clone()
    };
    let corpus = build_pretraining_corpus(&titles, &model, &corruption)?;
    write_jsonl(&a.out, &corpus)?;
    println!("{} titles -> {} examples", titles.len(), corpus.len());
    Ok(())
}

/// Splits a corpus into per-title groups. Each group starts with the
/// uncorrupted copy, the only example whose labels are all zero.
pub fn title_groups(corpus: &[PretrainExample]) -> Vec<std::ops::Range<usize>> {
    let mut starts: Vec<usize> = corpus
        .iter()
        .enumerate()
        .filter(|(_, ex)| ex.labels.iter().all(|&l| l == 0))
        .map(|(i, _)| i)
        .collect();
    if starts.first() != Some(&0) && !corpus.is_empty() {
        starts.insert(0, 0);
    }
    let mut groups = Vec::with_capacity(starts.len());
    for (k, &s) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(corpus.len());
        groups.push(s..end);
    }
    groups
}

fn word_vectors(path: Option<&Path>) -> Result<Option<WordVectors>> {
    match path {
        Some(p) => Ok(Some(WordVectors::load(p)?)),
        None => {
            log::warn!("no word vectors given; words get seeded random vectors");
            Ok(None)
        }
    }
}

fn pretrain(a: &PretrainArgs, config: &AppConfig, outdir: &Path) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let corpus: Vec<PretrainExample> = read_jsonl(&a.corpus)?;
    if corpus.is_empty() {
        return Err(Error::EmptyDataset("pre-training corpus"));
    }
    let groups = title_groups(&corpus);
    let (train_part, val_part) = match &a.val_corpus {
        Some(path) => (corpus.clone(), read_jsonl(path)?),
        None => {
            let held: std::collections::HashSet<usize> = if config.holdout > 0.0 {
                nested_subsample(groups.len(), config.holdout, config.seed)?.into_iter().collect()
            } else {
                Default::default()
            };
            let (mut tr, mut va) = (Vec::new(), Vec::new());
            for (g, range) in groups.iter().enumerate() {
                let dest = if held.contains(&g) { &mut va } else { &mut tr };
                dest.extend_from_slice(&corpus[range.clone()]);
            }
            (tr, va)
        }
    };
    let clean: Vec<&[String]> = groups.iter().map(|r| corpus[r.start].tokens.as_slice()).collect();
    let mut training = config.pretraining.clone();
    if !config.pretrain_weights_given {
        let median = median_length(&clean).ok_or(Error::EmptyDataset("pre-training corpus"))?;
        training.loss_weights = pretrain_class_weights(median, config.corruption.fraction, config.model.max_len)?;
        log::info!("median title length {median}; loss weights {:?}", training.loss_weights);
    }
    let vectors = word_vectors(a.vectors.as_deref())?;
    let (table, coverage) = titlepress::embedder::build_word_table(
        &vocab,
        vectors.as_ref(),
        config.model.word_dim,
        &mut titlepress::nn::ModelRng::seed_from_u64(config.seed),
    )?;
    log::info!("word vector coverage {coverage:?}");
    let mut model = TitleModel::new(config.model.clone(), std::sync::Arc::new(table), vocab.char_count(), config.seed)?;
    let train_set = encode_pretraining(&train_part, &vocab, &config.model)?;
    let val_set = encode_pretraining(&val_part, &vocab, &config.model)?;
    let report = pretrain_network(&mut model, &train_set, &val_set, &training)?;
    report.write_history(outdir.join("pretrain_history.csv"))?;
    save_checkpoint(&a.out, &model, &vocab.fingerprint(), report.steps as u64)?;
    println!(
        "best epoch {} validation token accuracy {:.4}; stopped by {:?}",
        report.best_epoch, report.best_score, report.stop
    );
    Ok(())
}

fn load_pairs(dir: &Path) -> Result<Split<RawTitlePair>> {
    let part = |name: &str| -> Result<Vec<RawTitlePair>> {
        let path = dir.join(format!("{name}.jsonl"));
        if path.exists() {
            read_jsonl(&path)
        } else {
            Ok(Vec::new())
        }
    };
    Ok(Split { train: part("train")?, val: part("val")?, test: part("test")? })
}

fn load_pretrained(path: &Path, vocab: &Vocabulary) -> Result<LoadedCheckpoint> {
    let loaded = load_checkpoint(path, Some(&vocab.fingerprint()))?;
    for w in &loaded.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(loaded)
}

/// Encoded splits plus an optional pre-trained model whose frozen word table
/// replaces the one built from `--vectors`.
fn load_data(a: &DataArgs, config: &AppConfig, pretrained: Option<&Path>) -> Result<(Datasets, Option<TitleModel>)> {
    let split = load_pairs(&a.data)?;
    if split.train.is_empty() {
        return Err(Error::EmptyDataset("training split"));
    }
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::build(long_tokens(&split.train))?,
    };
    let model = pretrained.map(|p| load_pretrained(p, &vocab)).transpose()?.map(|l| l.model);
    let model_config = model.as_ref().map_or(&config.model, |m| &m.config);
    let vectors = if model.is_some() { None } else { word_vectors(a.vectors.as_deref())? };
    let mut data = Datasets::with_vocab(vocab, &split, vectors.as_ref(), model_config, config.seed)?;
    if let Some(m) = &model {
        if m.embedder.word_table.nrows() != data.vocab.word_count() {
            return Err(Error::IncompatibleCheckpoint(vec![format!(
                "word table has {} rows, vocabulary has {} words",
                m.embedder.word_table.nrows(),
                data.vocab.word_count()
            )]));
        }
        data.word_table = m.embedder.word_table.clone();
    }
    Ok((data, model))
}

fn finetune(a: &FinetuneArgs, config: &AppConfig, outdir: &Path) -> Result<()> {
    let (data, pretrained) = load_data(&a.data, config, a.init.as_deref())?;
    let (model, report) = match pretrained {
        Some(mut m) => {
            let r = fine_tune(&mut m, &data.train, &data.val, &config.training)?;
            (m, r)
        }
        None => {
            let mut m = data.new_model(config.model.clone(), config.seed)?;
            let r = train(&mut m, &data.train, &data.val, &config.training)?;
            (m, r)
        }
    };
    report.write_history(outdir.join("history.csv"))?;
    save_checkpoint(&a.out, &model, &data.vocab.fingerprint(), report.steps as u64)?;
    println!("best epoch {} validation F1 {:.4}; stopped by {:?}", report.best_epoch, report.best_score, report.stop);
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs, outdir: &Path) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let model = load_pretrained(&a.checkpoint, &vocab)?.model;
    let pairs: Vec<RawTitlePair> = read_jsonl(&a.input)?;
    let examples = pairs
        .iter()
        .map(|p| encode_example(p, &vocab, &model.config))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&model, &examples)?;
    let json = serde_json::to_string(&report)?;
    fs::write(outdir.join("metrics.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn ablate(a: &AblateArgs, config: &AppConfig, outdir: &Path) -> Result<()> {
    let specs = if a.variant.is_empty() {
        AblationSpec::predefined()
            .into_iter()
            .filter(|s| {
                let keep = !s.pretrained || a.pretrained.is_some();
                if !keep {
                    log::warn!("skipping {}: no --pretrained checkpoint", s.name);
                }
                keep
            })
            .collect()
    } else {
        a.variant.iter().map(|n| AblationSpec::by_name(n)).collect::<Result<Vec<_>>>()?
    };
    let (data, pretrained) = load_data(&a.data, config, a.pretrained.as_deref())?;
    let base = pretrained.as_ref().map_or(&config.model, |m| &m.config);
    let mut results: Vec<AblationResult> = Vec::new();
    for spec in &specs {
        let r = run_ablation(spec, &data, base, &config.training, pretrained.as_ref(), config.seed)?;
        println!("{:<16} F1 {:.4} EM {:.2}", r.name, r.report.rouge1_f1, r.report.em);
        results.push(r);
    }
    fs::write(outdir.join(ABLATION_FILE), serde_json::to_string_pretty(&results)?)?;
    Ok(())
}

fn sweep(a: &SweepArgs, config: &AppConfig, outdir: &Path) -> Result<()> {
    let (data, pretrained) = load_data(&a.data, config, Some(&a.pretrained))?;
    let pretrained = pretrained.expect("checkpoint was requested");
    let fractions = a.fractions.clone().unwrap_or_else(|| config.sweep.fractions.clone());
    let records = low_resource_sweep(&fractions, &data, &pretrained, &config.training, config.seed)?;
    for r in &records {
        println!("{:.2} {:<10} n={:<6} F1 {:.4} EM {:.2}", r.fraction, r.variant, r.train_size, r.rouge1_f1, r.em);
    }
    fs::write(outdir.join(SWEEP_FILE), serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

fn report(a: &ReportArgs, outdir: &Path) -> Result<()> {
    let dir = a.results.as_deref().unwrap_or(outdir);
    let read = |name: &str| -> Result<Option<String>> {
        let path = dir.join(name);
        Ok(if path.exists() { Some(fs::read_to_string(path)?) } else { None })
    };
    let ablations: Vec<AblationResult> = match read(ABLATION_FILE)? {
        Some(text) => serde_json::from_str(&text)?,
        None => Vec::new(),
    };
    let sweep: Vec<SweepRecord> = match read(SWEEP_FILE)? {
        Some(text) => serde_json::from_str(&text)?,
        None => Vec::new(),
    };
    for path in emit_report(&ablations, &sweep, outdir)? {
        println!("{}", path.display());
    }
    Ok(())
}
