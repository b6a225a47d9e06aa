//! Subcommand implementations. Every artifact-producing command writes its
//! outputs under `--out-dir` together with a manifest naming the command,
//! configuration, seed, input fingerprints, and any metric results.

use std::path::{Path, PathBuf};

use acci::clustering::{
    cluster, filter_likely_pairs, read_key_file, read_partition_json, write_key_file,
    write_partition_json, Partition, ScoredPair,
};
use acci::corpus::{parse_corpus, validate_corpus, write_corpus, Corpus, Split};
use acci::experiment::{
    build_experiment_data, compute_raw_scores, default_beta_grid, run_ablation, standard_spec,
    standard_train_config, sweep_beta, sweep_to_csv, ablation_to_json, compare_losses,
    history_to_csv, STANDARD_SEED,
};
use acci::manifest::{file_sha256, ExperimentManifest};
use acci::metrics::{evaluate, format_report};
use acci::pairgen::{
    generate_pairs, heuristic_filter, read_pairs, trigger_match_stats, write_pairs, FilterMode,
    MentionPair, PairScope,
};
use acci::plot::{line_chart, Series};
use acci::scm::{Assignment, DiscreteSCM};
use acci::scoring::{ScoreRecord, write_scores};
use acci::synth::generate_confounded_corpus;
use acci::training::{fit, gold_partition, pair_contexts, Model, TrainConfig, TrainedModel};
use anyhow::Context;
use clap::{Args, Subcommand, ValueEnum};

use crate::config::FileConfig;
use crate::{validation, Cli, Cmd};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = CmdContext { cfg, seed: cli.seed, out_dir: cli.out_dir };
    match cli.cmd {
        Cmd::Ingest(args) => ingest(&ctx, args),
        Cmd::GenSynth(args) => gen_synth(&ctx, args),
        Cmd::Pairs(args) => pairs_cmd(&ctx, args),
        Cmd::Train(args) => train(&ctx, args),
        Cmd::Predict(args) => predict(&ctx, args),
        Cmd::Cluster(args) => cluster_cmd(&ctx, args),
        Cmd::Score(args) => score_cmd(&ctx, args),
        Cmd::Ablate(args) => ablate(&ctx, args),
        Cmd::SweepBeta(args) => sweep_beta_cmd(&ctx, args),
        Cmd::CompareLosses(args) => compare_losses_cmd(&ctx, args),
        Cmd::Scm(args) => scm_cmd(args),
    }
}

pub struct CmdContext {
    pub cfg: FileConfig,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl CmdContext {
    fn manifest(
        &self,
        name: &str,
        config: serde_json::Value,
        seed: u64,
        inputs: &[&Path],
        outputs: &[PathBuf],
        metrics: Option<serde_json::Value>,
    ) -> anyhow::Result<PathBuf> {
        let mut fingerprints = std::collections::BTreeMap::new();
        for path in inputs {
            fingerprints.insert(path.display().to_string(), file_sha256(path)?);
        }
        let manifest = ExperimentManifest {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config,
            seed,
            corpus_fingerprints: fingerprints,
            output_paths: outputs.iter().map(|p| p.display().to_string()).collect(),
            metrics,
        };
        let path = self.out_dir.join(format!("{name}.manifest.json"));
        manifest.write(&path)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

fn load_corpus(path: &Path, split: SplitArg) -> anyhow::Result<Corpus> {
    parse_corpus(path, split.into())
        .map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn load_pairs(path: &Path) -> anyhow::Result<Vec<MentionPair>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    read_pairs(std::io::BufReader::new(file))
        .map_err(|e| validation(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- ingest

#[derive(Args)]
pub struct IngestArgs {
    /// Input corpus in JSONL document/mention records.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Canonicalized output path (default: <out-dir>/corpus.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn ingest(ctx: &CmdContext, args: IngestArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&args.input, args.split)?;
    let violations = validate_corpus(&corpus);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation [{}] {}", v.entity, v.rule);
        }
        return Err(validation(format!("{} corpus violations", violations.len())));
    }
    let stats = acci::corpus::corpus_stats(&corpus);
    let out = args.out.unwrap_or_else(|| ctx.out_dir.join("corpus.jsonl"));
    write_corpus(&corpus, &out)?;
    println!(
        "ingested {} documents, {} mentions, {} topics, {} gold clusters -> {}",
        stats.documents, stats.mentions, stats.topics, stats.clusters,
        out.display()
    );
    ctx.manifest(
        "ingest",
        serde_json::json!({"split": format!("{:?}", Split::from(args.split))}),
        0,
        &[&args.input],
        &[out],
        Some(serde_json::to_value(&stats)?),
    )?;
    Ok(())
}

// -------------------------------------------------------------- gen-synth

#[derive(Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub p_confounder: Option<f64>,
    #[arg(long)]
    pub flip_rate_test: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_dev: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub vocab_per_role: Option<usize>,
    #[arg(long)]
    pub arg_noise: Option<f64>,
}

fn gen_synth(ctx: &CmdContext, args: GenSynthArgs) -> anyhow::Result<()> {
    let mut spec = ctx.cfg.confound_spec(standard_spec());
    if let Some(v) = args.p_confounder {
        spec.p_confounder = v;
    }
    if let Some(v) = args.flip_rate_test {
        spec.flip_rate_test = v;
    }
    if let Some(v) = args.n_train {
        spec.n_train = v;
    }
    if let Some(v) = args.n_dev {
        spec.n_dev = v;
    }
    if let Some(v) = args.n_test {
        spec.n_test = v;
    }
    if let Some(v) = args.vocab_per_role {
        spec.vocab_per_role = v;
    }
    if let Some(v) = args.arg_noise {
        spec.arg_noise = v;
    }
    spec.validate().map_err(|e| validation(e.to_string()))?;
    let seed = ctx.seed.unwrap_or(STANDARD_SEED);
    let (train, dev, test) = generate_confounded_corpus(&spec, seed)?;
    let mut outputs = Vec::new();
    for (name, corpus) in [("train", &train), ("dev", &dev), ("test", &test)] {
        let path = ctx.out_dir.join(format!("{name}.jsonl"));
        write_corpus(corpus, &path)?;
        let stats = trigger_match_stats(&generate_pairs(corpus, PairScope::Subtopic));
        println!(
            "{name}: {} mentions, lexsim/label phi = {}",
            corpus.mentions.len(),
            stats.phi.map_or("undefined".to_string(), |p| format!("{p:.3}")),
        );
        outputs.push(path);
    }
    ctx.manifest("gen-synth", serde_json::to_value(&spec)?, seed, &[], &outputs, None)?;
    Ok(())
}

// ------------------------------------------------------------------ pairs

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    Topic,
    Subtopic,
    GoldTopic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FilterArg {
    LemmaOverlap,
    SynonymSet,
}

#[derive(Args)]
pub struct PairsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "subtopic")]
    pub scope: ScopeArg,
    /// Apply the heuristic non-coreferent filter with this trigger-match mode.
    #[arg(long, value_enum)]
    pub filter: Option<FilterArg>,
    /// Fraction of non-matching pairs the filter keeps anyway.
    #[arg(long, default_value_t = 0.0)]
    pub keep_nonmatch_rate: f64,
    /// Also keep every gold-coreferent pair (oracle filter variant).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn pairs_cmd(ctx: &CmdContext, args: PairsArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&args.keep_nonmatch_rate) {
        return Err(validation("keep-nonmatch-rate must lie in [0,1]"));
    }
    let corpus = load_corpus(&args.corpus, args.split)?;
    let scope = match args.scope {
        ScopeArg::Topic => PairScope::Topic,
        ScopeArg::Subtopic => PairScope::Subtopic,
        ScopeArg::GoldTopic => PairScope::GoldTopic,
    };
    let mut pairs = generate_pairs(&corpus, scope);
    let seed = ctx.seed.unwrap_or(STANDARD_SEED);
    let mut dropped_positives = 0;
    if let Some(filter) = args.filter {
        let mode = match filter {
            FilterArg::LemmaOverlap => FilterMode::LemmaOverlap,
            FilterArg::SynonymSet => FilterMode::SynonymSet,
        };
        let outcome =
            heuristic_filter(&corpus, &pairs, mode, args.keep_nonmatch_rate, args.oracle, seed);
        pairs = outcome.pairs;
        dropped_positives = outcome.dropped_positives;
    }
    let stats = trigger_match_stats(&pairs);
    let out = args.out.unwrap_or_else(|| ctx.out_dir.join("pairs.jsonl"));
    let file = std::fs::File::create(&out)?;
    write_pairs(&pairs, std::io::BufWriter::new(file))?;
    println!(
        "{} pairs ({} coreferent), dropped positives {}, phi {}  -> {}",
        pairs.len(),
        stats.c_lexsim + stats.c_lexdiv,
        dropped_positives,
        stats.phi.map_or("undefined".to_string(), |p| format!("{p:.3}")),
        out.display()
    );
    ctx.manifest(
        "pairs",
        serde_json::json!({
            "scope": format!("{:?}", args.scope),
            "filter": args.filter.map(|f| format!("{f:?}")),
            "keep_nonmatch_rate": args.keep_nonmatch_rate,
            "oracle": args.oracle,
        }),
        seed,
        &[&args.corpus],
        &[out],
        Some(serde_json::to_value(&stats)?),
    )?;
    Ok(())
}

// ------------------------------------------------------------------ train

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_corpus: PathBuf,
    #[arg(long)]
    pub dev_corpus: PathBuf,
    /// Pair list for the train split (default: all pairs within subtopics).
    #[arg(long)]
    pub train_pairs: Option<PathBuf>,
    #[arg(long)]
    pub dev_pairs: Option<PathBuf>,
}

fn train(ctx: &CmdContext, args: TrainArgs) -> anyhow::Result<()> {
    let train_corpus = load_corpus(&args.train_corpus, SplitArg::Train)?;
    let dev_corpus = load_corpus(&args.dev_corpus, SplitArg::Dev)?;
    let train_pairs = match &args.train_pairs {
        Some(p) => load_pairs(p)?,
        None => generate_pairs(&train_corpus, PairScope::Subtopic),
    };
    let dev_pairs = match &args.dev_pairs {
        Some(p) => load_pairs(p)?,
        None => generate_pairs(&dev_corpus, PairScope::Subtopic),
    };
    let config = ctx.cfg.train_config(TrainConfig::default(), ctx.seed);
    config.validate().map_err(|e| validation(e.to_string()))?;
    let trained = fit(&train_corpus, &train_pairs, &dev_corpus, &dev_pairs, &config)?;
    report_training(&trained);

    let model_path = ctx.out_dir.join("model.json");
    trained.model.save(&model_path)?;
    let history_path = ctx.out_dir.join("history.csv");
    std::fs::write(&history_path, history_csv(&trained))?;

    let mut inputs: Vec<&Path> = vec![&args.train_corpus, &args.dev_corpus];
    inputs.extend(args.train_pairs.as_deref());
    inputs.extend(args.dev_pairs.as_deref());
    let best_dev = trained
        .best_epoch
        .and_then(|e| trained.history.get(e))
        .map(|r| r.dev_b3_f1);
    ctx.manifest(
        "train",
        serde_json::to_value(&config)?,
        config.seed,
        &inputs,
        &[model_path, history_path],
        Some(serde_json::json!({"best_epoch": trained.best_epoch, "best_dev_b3_f1": best_dev})),
    )?;
    Ok(())
}

fn report_training(trained: &TrainedModel) {
    for r in &trained.history {
        println!(
            "epoch {}: loss_f {:.4} loss_c {:.4} bias {:.4} dev_b3 {:.4}",
            r.epoch, r.loss_f, r.loss_c, r.bias_loss, r.dev_b3_f1
        );
    }
    println!("selected epoch: {:?}", trained.best_epoch);
}

fn history_csv(trained: &TrainedModel) -> String {
    let mut out = String::from("epoch,loss_f,loss_c,bias_loss,dev_b3_f1\n");
    for r in &trained.history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.loss_f, r.loss_c, r.bias_loss, r.dev_b3_f1
        ));
    }
    out
}

// ---------------------------------------------------------------- predict

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn predict(ctx: &CmdContext, args: PredictArgs) -> anyhow::Result<()> {
    let model = Model::load(&args.model)?;
    let corpus = load_corpus(&args.corpus, args.split)?;
    let pairs = load_pairs(&args.pairs)?;
    let settings = ctx.cfg.inference_settings();
    let mut records = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let (s1, s2) = pair_contexts(&corpus, pair)?;
        let bundle =
            model.score_pair_debiased(&s1, &s2, settings.alpha_infer, settings.beta)?;
        records.push(ScoreRecord::from_bundle(&pair.pair_id, &bundle));
    }
    let out = args.out.unwrap_or_else(|| ctx.out_dir.join("scores.jsonl"));
    let file = std::fs::File::create(&out)?;
    write_scores(&records, std::io::BufWriter::new(file))?;
    let positive = records.iter().filter(|r| r.decision).count();
    println!("{} pairs scored, {positive} coreferent decisions -> {}", records.len(), out.display());
    ctx.manifest(
        "predict",
        serde_json::to_value(settings)?,
        0,
        &[&args.model, &args.corpus, &args.pairs],
        &[out],
        None,
    )?;
    Ok(())
}

// ---------------------------------------------------------------- cluster

#[derive(Args)]
pub struct ClusterArgs {
    /// Score records from `predict` (JSONL).
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

fn cluster_cmd(ctx: &CmdContext, args: ClusterArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&args.corpus, args.split)?;
    let text = std::fs::read_to_string(&args.scores)
        .with_context(|| format!("reading {}", args.scores.display()))?;
    let mut scored = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord = serde_json::from_str(line)
            .map_err(|e| validation(format!("{} line {}: {e}", args.scores.display(), i + 1)))?;
        let Some((m1, m2)) = record.pair_id.split_once('|') else {
            return Err(validation(format!(
                "{} line {}: pair_id is not in canonical `a|b` form",
                args.scores.display(),
                i + 1
            )));
        };
        scored.push(ScoredPair {
            pair_id: record.pair_id.clone(),
            m1: m1.to_string(),
            m2: m2.to_string(),
            score: record.y,
        });
    }
    let settings = ctx.cfg.inference_settings();
    let mentions: Vec<String> = corpus.mentions.iter().map(|m| m.mention_id.clone()).collect();
    let likely = filter_likely_pairs(&scored, settings.gate);
    let partition =
        cluster(&mentions, &likely, &scored, settings.tau_cluster, settings.link_mode);

    let clusters_path = ctx.out_dir.join("clusters.json");
    write_partition_json(&partition, std::fs::File::create(&clusters_path)?)?;
    let key_path = ctx.out_dir.join("pred.key");
    write_key_file(&partition, &corpus, std::fs::File::create(&key_path)?)?;
    let non_singleton = partition.clusters.iter().filter(|c| c.len() > 1).count();
    println!(
        "{} clusters over {} mentions ({non_singleton} non-singleton) -> {}",
        partition.clusters.len(),
        partition.mention_count(),
        clusters_path.display()
    );
    ctx.manifest(
        "cluster",
        serde_json::to_value(settings)?,
        0,
        &[&args.scores, &args.corpus],
        &[clusters_path, key_path],
        None,
    )?;
    Ok(())
}

// ------------------------------------------------------------------ score

#[derive(Args)]
pub struct ScoreArgs {
    /// Gold corpus (cluster ids come from its mentions).
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Predicted partition: clusters.json or a .key file.
    #[arg(long)]
    pub pred: PathBuf,
}

fn score_cmd(ctx: &CmdContext, args: ScoreArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&args.gold, args.split)?;
    let file = std::fs::File::open(&args.pred)
        .with_context(|| format!("opening {}", args.pred.display()))?;
    let pred: Partition = if args.pred.extension().is_some_and(|e| e == "key") {
        read_key_file(std::io::BufReader::new(file))
            .map_err(|e| validation(format!("{}: {e}", args.pred.display())))?
    } else {
        read_partition_json(std::io::BufReader::new(file))
            .map_err(|e| validation(format!("{}: {e}", args.pred.display())))?
    };
    let gold = gold_partition(&corpus);
    if !pred.is_valid_over(gold.all_mentions().iter().copied()) {
        return Err(validation(
            "predicted partition does not cover exactly the gold corpus mentions",
        ));
    }
    let report = evaluate(&gold, &pred)?;
    print!("{}", format_report(&report));
    let metrics_path = ctx.out_dir.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&report)?)?;
    ctx.manifest(
        "score",
        serde_json::Value::Null,
        0,
        &[&args.gold, &args.pred],
        &[metrics_path],
        Some(serde_json::to_value(&report)?),
    )?;
    Ok(())
}

// ----------------------------------------------------- model-or-standard

/// Shared inputs for ablate / sweep-beta: either a trained checkpoint with
/// an eval corpus + pairs, or `--standard` to run the pinned synthetic
/// experiment (train-in-place).
#[derive(Args)]
pub struct EvalInputs {
    /// Run the pinned synthetic experiment end to end.
    #[arg(long)]
    pub standard: bool,
    #[arg(long, required_unless_present = "standard")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "standard")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, required_unless_present = "standard")]
    pub pairs: Option<PathBuf>,
}

impl EvalInputs {
    fn resolve(
        &self,
        ctx: &CmdContext,
    ) -> anyhow::Result<(Model, Corpus, Vec<MentionPair>, u64, Vec<PathBuf>)> {
        if self.standard {
            let spec = ctx.cfg.confound_spec(standard_spec());
            spec.validate().map_err(|e| validation(e.to_string()))?;
            let seed = ctx.seed.unwrap_or(STANDARD_SEED);
            let data = build_experiment_data(&spec, seed)?;
            let config = ctx.cfg.train_config(standard_train_config(), ctx.seed);
            config.validate().map_err(|e| validation(e.to_string()))?;
            let trained =
                fit(&data.train, &data.train_pairs, &data.dev, &data.dev_pairs, &config)?;
            println!("standard experiment: trained, selected epoch {:?}", trained.best_epoch);
            Ok((trained.model, data.test, data.test_pairs, seed, Vec::new()))
        } else {
            let model_path = self.model.as_ref().expect("clap enforces --model");
            let corpus_path = self.corpus.as_ref().expect("clap enforces --corpus");
            let pairs_path = self.pairs.as_ref().expect("clap enforces --pairs");
            let model = Model::load(model_path)?;
            let corpus = load_corpus(corpus_path, self.split)?;
            let pairs = load_pairs(pairs_path)?;
            let inputs = vec![model_path.clone(), corpus_path.clone(), pairs_path.clone()];
            Ok((model, corpus, pairs, ctx.seed.unwrap_or(STANDARD_SEED), inputs))
        }
    }
}

// ----------------------------------------------------------------- ablate

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub inputs: EvalInputs,
}

fn ablate(ctx: &CmdContext, args: AblateArgs) -> anyhow::Result<()> {
    let (model, corpus, pairs, seed, input_paths) = args.inputs.resolve(ctx)?;
    let raw = compute_raw_scores(&model, &corpus, &pairs)?;
    let settings = ctx.cfg.inference_settings();
    let rows = run_ablation(&raw, &corpus, &settings)?;
    println!("mode      accuracy  conll_f1  b3_f1     d_conll");
    for row in &rows {
        println!(
            "{:<9} {:<9.4} {:<9.4} {:<9.4} {:+.4}",
            format!("{:?}", row.mode).to_lowercase(),
            row.result.pairwise_accuracy,
            row.result.report.conll_f1,
            row.result.report.b_cubed.f1,
            row.delta_conll_vs_full
        );
    }
    let json = ablation_to_json(&rows);
    let out = ctx.out_dir.join("ablation.json");
    std::fs::write(&out, serde_json::to_string_pretty(&json)?)?;
    let inputs: Vec<&Path> = input_paths.iter().map(PathBuf::as_path).collect();
    ctx.manifest("ablate", serde_json::to_value(settings)?, seed, &inputs, &[out], Some(json))?;
    Ok(())
}

// ------------------------------------------------------------- sweep-beta

#[derive(Args)]
pub struct SweepBetaArgs {
    #[command(flatten)]
    pub inputs: EvalInputs,
}

fn sweep_beta_cmd(ctx: &CmdContext, args: SweepBetaArgs) -> anyhow::Result<()> {
    let (model, corpus, pairs, seed, input_paths) = args.inputs.resolve(ctx)?;
    let raw = compute_raw_scores(&model, &corpus, &pairs)?;
    let settings = ctx.cfg.inference_settings();
    let points = sweep_beta(&raw, &corpus, &settings, &default_beta_grid())?;

    let csv_path = ctx.out_dir.join("beta_sweep.csv");
    std::fs::write(&csv_path, sweep_to_csv(&points))?;
    let conll: Vec<(f64, f64)> = points.iter().map(|p| (p.beta, p.conll_f1)).collect();
    let b3: Vec<(f64, f64)> = points.iter().map(|p| (p.beta, p.b_cubed_f1)).collect();
    let svg = line_chart(
        "CoNLL and B3 F1 vs beta",
        "beta",
        "F1",
        &[Series { name: "conll", points: &conll }, Series { name: "b3", points: &b3 }],
    );
    let svg_path = ctx.out_dir.join("beta_sweep.svg");
    std::fs::write(&svg_path, svg)?;

    let best = points
        .iter()
        .max_by(|a, b| a.conll_f1.total_cmp(&b.conll_f1))
        .expect("grid is non-empty");
    println!(
        "{} grid points; CoNLL argmax beta = {:.2} (F1 {:.4}) -> {}",
        points.len(),
        best.beta,
        best.conll_f1,
        csv_path.display()
    );
    let inputs: Vec<&Path> = input_paths.iter().map(PathBuf::as_path).collect();
    ctx.manifest(
        "sweep-beta",
        serde_json::to_value(settings)?,
        seed,
        &inputs,
        &[csv_path, svg_path],
        Some(serde_json::json!({"argmax_beta": best.beta, "argmax_conll_f1": best.conll_f1})),
    )?;
    Ok(())
}

// --------------------------------------------------------- compare-losses

#[derive(Args)]
pub struct CompareLossesArgs {
    /// Use the pinned synthetic experiment's train/dev splits.
    #[arg(long)]
    pub standard: bool,
    #[arg(long, required_unless_present = "standard")]
    pub train_corpus: Option<PathBuf>,
    #[arg(long, required_unless_present = "standard")]
    pub dev_corpus: Option<PathBuf>,
}

fn compare_losses_cmd(ctx: &CmdContext, args: CompareLossesArgs) -> anyhow::Result<()> {
    let (train_corpus, dev_corpus, input_paths) = if args.standard {
        let spec = ctx.cfg.confound_spec(standard_spec());
        spec.validate().map_err(|e| validation(e.to_string()))?;
        let seed = ctx.seed.unwrap_or(STANDARD_SEED);
        let data = build_experiment_data(&spec, seed)?;
        (data.train, data.dev, Vec::new())
    } else {
        let train_path = args.train_corpus.as_ref().expect("clap enforces --train-corpus");
        let dev_path = args.dev_corpus.as_ref().expect("clap enforces --dev-corpus");
        (
            load_corpus(train_path, SplitArg::Train)?,
            load_corpus(dev_path, SplitArg::Dev)?,
            vec![train_path.clone(), dev_path.clone()],
        )
    };
    let train_pairs = generate_pairs(&train_corpus, PairScope::Subtopic);
    let dev_pairs = generate_pairs(&dev_corpus, PairScope::Subtopic);
    let base = if args.standard { standard_train_config() } else { TrainConfig::default() };
    let config = ctx.cfg.train_config(base, ctx.seed);
    config.validate().map_err(|e| validation(e.to_string()))?;

    let comparison = compare_losses(&train_corpus, &train_pairs, &dev_corpus, &dev_pairs, &config)?;
    println!(
        "batch order hashes: probabilities {:016x}, logits {:016x} ({})",
        comparison.prob_batch_hash,
        comparison.logit_batch_hash,
        if comparison.prob_batch_hash == comparison.logit_batch_hash {
            "identical"
        } else {
            "MISMATCH"
        }
    );
    for (kind, run) in [("probabilities", &comparison.prob_run), ("logits", &comparison.logit_run)]
    {
        let last = run.history.last();
        println!(
            "bce-on-{kind}: final loss_f {}",
            last.map_or("n/a".into(), |r| format!("{:.4}", r.loss_f))
        );
    }

    let csv_path = ctx.out_dir.join("loss_comparison.csv");
    std::fs::write(&csv_path, history_to_csv(&comparison))?;
    let prob: Vec<(f64, f64)> = comparison
        .prob_run
        .history
        .iter()
        .map(|r| (r.epoch as f64, r.loss_f))
        .collect();
    let logit: Vec<(f64, f64)> = comparison
        .logit_run
        .history
        .iter()
        .map(|r| (r.epoch as f64, r.loss_f))
        .collect();
    let svg = line_chart(
        "Training loss by loss kind",
        "epoch",
        "loss_f",
        &[
            Series { name: "bce-on-probabilities", points: &prob },
            Series { name: "bce-on-logits", points: &logit },
        ],
    );
    let svg_path = ctx.out_dir.join("loss_comparison.svg");
    std::fs::write(&svg_path, svg)?;

    let inputs: Vec<&Path> = input_paths.iter().map(PathBuf::as_path).collect();
    ctx.manifest(
        "compare-losses",
        serde_json::to_value(&config)?,
        config.seed,
        &inputs,
        &[csv_path, svg_path],
        Some(serde_json::json!({
            "batch_hashes_identical": comparison.prob_batch_hash == comparison.logit_batch_hash,
        })),
    )?;
    Ok(())
}

// -------------------------------------------------------------------- scm

#[derive(Args)]
pub struct ScmArgs {
    /// SCM definition: JSON with variables, domains, parents, CPT rows.
    #[arg(long)]
    pub file: PathBuf,
    #[command(subcommand)]
    pub query: ScmQuery,
}

#[derive(Subcommand)]
pub enum ScmQuery {
    /// P(target | evidence).
    Observational {
        #[arg(long)]
        target: String,
        /// Comma-separated assignments, e.g. "X=1,T=0".
        #[arg(long)]
        evidence: Option<String>,
    },
    /// P(target | do(intervention)), by graph surgery; optionally also the
    /// backdoor sum over an adjustment set for comparison.
    Do {
        #[arg(long)]
        target: String,
        #[arg(long = "do")]
        intervention: String,
        /// Comma-separated adjustment-set variables for the backdoor sum.
        #[arg(long)]
        backdoor: Option<String>,
    },
    /// Counterfactual P(target_{twiddle} | factual) via abduction,
    /// action, prediction.
    Counterfactual {
        #[arg(long)]
        target: String,
        #[arg(long)]
        factual: String,
        #[arg(long)]
        twiddle: String,
    },
}

fn parse_assignment(text: &str) -> anyhow::Result<Assignment> {
    let mut assignment = Assignment::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| validation(format!("assignment `{part}` is not NAME=VALUE")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| validation(format!("assignment `{part}` has a non-integer value")))?;
        assignment.insert(name.trim().to_string(), value);
    }
    Ok(assignment)
}

fn scm_cmd(args: ScmArgs) -> anyhow::Result<()> {
    let scm = DiscreteSCM::from_json_file(&args.file)
        .map_err(|e| validation(format!("{}: {e}", args.file.display())))?;
    let result = match &args.query {
        ScmQuery::Observational { target, evidence } => {
            let evidence = parse_assignment(evidence.as_deref().unwrap_or(""))?;
            let dist = scm
                .observational(target, &evidence)
                .map_err(|e| validation(e.to_string()))?;
            serde_json::json!({"query": "observational", "target": target, "distribution": dist})
        }
        ScmQuery::Do { target, intervention, backdoor } => {
            let intervention = parse_assignment(intervention)?;
            let dist = scm
                .interventional(target, &intervention)
                .map_err(|e| validation(e.to_string()))?;
            let mut out = serde_json::json!({
                "query": "do", "target": target, "distribution": dist,
            });
            if let Some(adjustment) = backdoor {
                let set: Vec<String> =
                    adjustment.split(',').map(|s| s.trim().to_string()).collect();
                let bd = scm
                    .backdoor_interventional(target, &intervention, &set)
                    .map_err(|e| validation(e.to_string()))?;
                out["backdoor_distribution"] = serde_json::to_value(bd)?;
            }
            out
        }
        ScmQuery::Counterfactual { target, factual, twiddle } => {
            let factual = parse_assignment(factual)?;
            let twiddle = parse_assignment(twiddle)?;
            let dist = scm
                .counterfactual(target, &factual, &twiddle)
                .map_err(|e| validation(e.to_string()))?;
            serde_json::json!({"query": "counterfactual", "target": target, "distribution": dist})
        }
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}
