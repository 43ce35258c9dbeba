//! Command-line interface. Every command prints one JSON record on stdout;
//! diagnostics go to stderr. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data error, 3 numeric or training error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::cnet::{
    coverage_stats, default_interjections, load_interjections, prune_cnet, CoverageReport,
};
use crate::corpus::{
    build_vocab, generate_synthetic, import_dstc2, load_corpus, load_corpus_ontology,
    load_embeddings, prune_dialogs, tokenize, transcript_cnet, write_corpus, ActWordMap, AsrSource,
    Dialog, Split, SynthConfig,
};
use crate::encoder::{Pooling, PoolingMode};
use crate::error::{Error, Result};
use crate::model::{
    all_heads, ensemble_tracker_predict, evaluate, group_name, head_groups, load_checkpoint,
    save_checkpoint, train_tracker, DstModel, EpochSchedule, JointAccuracy, ModelConfig, Ontology,
    Tracker, TrainConfig, UserView,
};
use crate::numerics::{AdamConfig, Fault};

/// Version of the JSON records printed by every command.
pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "CNET_DST_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "cnet-dst",
    version,
    about = "Dialog state tracking over ASR confusion networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Word coverage and size statistics of 1-best, full and pruned networks.
    Stats(StatsArgs),
    /// Train one model per head group for every seed.
    Train(TrainArgs),
    /// Joint goals and requests accuracy of trained checkpoints.
    Eval(EvalArgs),
    /// Finite-difference check of the full model's gradients.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic corpus.
    GenSynth(GenSynthArgs),
    /// Convert DSTC2 log/label files into the corpus layout.
    ImportDstc2(ImportArgs),
}

/// Built-in synthetic corpora, generated in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SyntheticPreset {
    /// 20 dialogs per split.
    Small,
    /// 100 training, 60 dev and 60 test dialogs.
    Medium,
}

impl SyntheticPreset {
    pub fn config(self, split: Split) -> SynthConfig {
        let (dialogs, seed) = match (self, split) {
            (SyntheticPreset::Small, Split::Train) => (20, 1),
            (SyntheticPreset::Small, Split::Dev) => (20, 2),
            (SyntheticPreset::Small, Split::Test) => (20, 3),
            (SyntheticPreset::Medium, Split::Train) => (100, 11),
            (SyntheticPreset::Medium, Split::Dev) => (60, 12),
            (SyntheticPreset::Medium, Split::Test) => (60, 13),
        };
        SynthConfig {
            dialogs,
            seed,
            id_prefix: split.as_str().into(),
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus root holding ontology.json and one directory per split.
    #[arg(
        long,
        required_unless_present = "synthetic",
        conflicts_with = "synthetic"
    )]
    pub corpus: Option<PathBuf>,
    /// Use a generated synthetic corpus instead of --corpus.
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticPreset>,
}

impl CorpusArgs {
    fn load(&self, split: Split) -> Result<(Ontology, Vec<Dialog>)> {
        match (&self.corpus, self.synthetic) {
            (Some(root), _) => {
                let ontology = load_corpus_ontology(root)?;
                let dialogs = load_corpus(root, split, &ontology)?;
                Ok((ontology, dialogs))
            }
            (None, Some(preset)) => Ok((
                Ontology::synthetic(),
                generate_synthetic(&preset.config(split))?,
            )),
            (None, None) => Err(Error::Config(
                "either --corpus or --synthetic is required".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Drop hypotheses with posterior below this value.
    #[arg(long, default_value_t = 0.001)]
    pub prune_threshold: f64,
    /// File of interjection tokens, one per line, removed before encoding.
    #[arg(long)]
    pub interjections: Option<PathBuf>,
}

impl PruneArgs {
    fn interjections(&self) -> Result<BTreeSet<String>> {
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(Error::Config(format!(
                "prune threshold {} outside [0, 1)",
                self.prune_threshold
            )));
        }
        match &self.interjections {
            Some(path) => load_interjections(path),
            None => Ok(default_interjections()),
        }
    }

    fn prune(&self, dialogs: &[Dialog]) -> Result<Vec<Dialog>> {
        prune_dialogs(dialogs, &self.interjections()?, self.prune_threshold)
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 32)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub dense_units: usize,
    #[arg(long, default_value_t = 32)]
    pub gru_units: usize,
    #[arg(long, default_value_t = 16)]
    pub combine_dim: usize,
    /// Full-size dimensions (300/300/100/50), overriding the four above.
    #[arg(long)]
    pub full_size: bool,
    /// Hypothesis pooling within a timestep: average or weighted.
    #[arg(long, default_value = "weighted")]
    pub pool: PoolingMode,
    /// Divide weighted-pooling scores by their sum per timestep.
    #[arg(long)]
    pub renormalize_pooling: bool,
}

impl ModelArgs {
    fn config(&self) -> ModelConfig {
        let pooling = Pooling {
            mode: self.pool,
            renormalize: self.renormalize_pooling,
        };
        if self.full_size {
            return ModelConfig {
                pooling,
                ..ModelConfig::full_size()
            };
        }
        ModelConfig {
            embedding_dim: self.embedding_dim,
            dense_units: self.dense_units,
            gru_units: self.gru_units,
            combine_dim: self.combine_dim,
            pooling,
        }
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = Split::Dev)]
    pub split: Split,
    #[command(flatten)]
    pub prune: PruneArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
    /// Output directory for checkpoints and the loss log.
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds, e.g. `1,2,5` or `1..10`.
    #[arg(long, default_value = "1..10")]
    pub seeds: Seeds,
    /// Epochs for every head group; default 100 food, 50 area and price
    /// range, 20 requests, 50 other goal slots.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch_dialogs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// User-utterance renderings each training dialog contributes.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "transcript,cnet"
    )]
    pub views: Vec<UserView>,
    /// Word vectors (`word v1 … vE` per line) for initialising embeddings.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Minimum corpus frequency for a word to enter the vocabulary.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub prune: PruneArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Directory written by `train`.
    #[arg(long)]
    pub checkpoints: PathBuf,
    /// Seeds to evaluate; default: every `seed<N>` directory found.
    #[arg(long)]
    pub seeds: Option<Seeds>,
    /// User-utterance rendering fed to the models.
    #[arg(long, value_enum, default_value_t = UserView::Cnet)]
    pub view: UserView,
    /// Also score the ensemble that averages predictions across seeds.
    #[arg(long)]
    pub ensemble: bool,
    #[command(flatten)]
    pub prune: PruneArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Corrupt the tanh backward rule (negative control).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
    #[arg(long, default_value_t = 20)]
    pub dialogs: usize,
    #[arg(long, default_value_t = 4)]
    pub turns: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub p_swap: f64,
    #[arg(long, default_value_t = 0.3)]
    pub p_confuse: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p_interj: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_drop: f64,
    #[arg(long, default_value_t = 40)]
    pub distractors: usize,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Directory the file list's entries are relative to.
    #[arg(long)]
    pub data_root: PathBuf,
    /// File with one dialog directory per line.
    #[arg(long)]
    pub flist: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Dev)]
    pub split: Split,
    #[arg(long, value_enum, default_value_t = AsrSource::Batch)]
    pub asr: AsrSource,
    /// Ontology JSON; default: the bundled DSTC2 ontology.
    #[arg(long)]
    pub ontology: Option<PathBuf>,
}

/// A seed list: `1,3,5`, `1..10` (inclusive) or a mix of both.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

impl std::str::FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_seeds(s).map(Seeds)
    }
}

/// Parses `1,3,5`, `1..10` (inclusive) or a mix of both.
pub fn parse_seeds(text: &str) -> std::result::Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim) {
        let num = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| format!("bad seed {s:?}: {e}"))
        };
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range {part}"));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(num(part)?),
        }
    }
    let unique: BTreeSet<u64> = seeds.iter().copied().collect();
    if unique.len() != seeds.len() {
        return Err("seeds listed twice".into());
    }
    Ok(seeds)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match configure_threads().and_then(|()| run(cli.command, out)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!("{THREADS_ENV}={value:?} is not a positive integer"))
    })?;
    // Fails only if the pool already exists, e.g. on a second in-process run.
    if rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_err()
    {
        info!("rayon pool already initialised; {THREADS_ENV} ignored");
    }
    Ok(())
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    let record = match command {
        Command::Stats(a) => cmd_stats(&a)?,
        Command::Train(a) => cmd_train(&a)?,
        Command::Eval(a) => cmd_eval(&a)?,
        Command::Gradcheck(a) => return cmd_gradcheck(&a, out),
        Command::GenSynth(a) => cmd_gen_synth(&a)?,
        Command::ImportDstc2(a) => cmd_import(&a)?,
    };
    emit(out, &record)
}

fn emit(out: &mut dyn Write, record: &serde_json::Value) -> Result<()> {
    let line = serde_json::to_string(record).expect("records serialize");
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

/// Tokens of every goal value, for slot-value coverage.
pub fn value_words(ontology: &Ontology) -> BTreeSet<String> {
    ontology
        .goal_slots()
        .flat_map(|s| ontology.values(s).unwrap_or_default())
        .flat_map(|v| tokenize(v))
        .collect()
}

#[derive(Serialize)]
struct StatsRecord {
    one_best: CoverageReport,
    cnet: CoverageReport,
    pruned_cnet: CoverageReport,
}

pub fn cmd_stats(a: &StatsArgs) -> Result<serde_json::Value> {
    let (ontology, dialogs) = a.corpus.load(a.split)?;
    let interjections = a.prune.interjections()?;
    let words = value_words(&ontology);
    let turns = dialogs.iter().flat_map(|d| &d.turns);
    let mut one_best = Vec::new();
    let mut full = Vec::new();
    let mut pruned = Vec::new();
    for t in turns {
        one_best.push((t.transcript.clone(), transcript_cnet(&t.cnet.one_best())?));
        full.push((t.transcript.clone(), t.cnet.clone()));
        pruned.push((
            t.transcript.clone(),
            prune_cnet(&t.cnet, &interjections, a.prune.prune_threshold)?,
        ));
    }
    let record = StatsRecord {
        one_best: coverage_stats(&one_best, &words)?,
        cnet: coverage_stats(&full, &words)?,
        pruned_cnet: coverage_stats(&pruned, &words)?,
    };
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "stats",
        "split": a.split,
        "dialogs": dialogs.len(),
        "prune_threshold": a.prune.prune_threshold,
        "coverage": record,
    }))
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed{seed}"))
}

pub fn checkpoint_path(root: &Path, seed: u64, group: &str) -> PathBuf {
    seed_dir(root, seed).join(format!("{group}.ckpt"))
}

pub const LOSS_LOG: &str = "losses.csv";

/// Dialogs as each view should see them: pruned networks for the cnet view,
/// the raw network for the 1-best view.
fn view_input<'a>(view_set: &[UserView], raw: &'a [Dialog], pruned: &'a [Dialog]) -> &'a [Dialog] {
    if view_set.contains(&UserView::Cnet) {
        pruned
    } else {
        raw
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<serde_json::Value> {
    let seeds = &a.seeds.0;
    let (ontology, raw) = a.corpus.load(a.split)?;
    let pruned = a.prune.prune(&raw)?;
    let map = ActWordMap::default();
    let vocab = build_vocab(&raw, &map, a.min_count);
    let model_config = a.model.config();
    model_config.validate()?;
    let config = TrainConfig {
        epochs: 0,
        batch_dialogs: a.batch_dialogs,
        adam: AdamConfig {
            learning_rate: a.lr,
            ..AdamConfig::default()
        },
        l2: a.l2,
        dropout: a.dropout,
        views: a.views.clone(),
        seed: 0,
    };
    config.validate()?;
    let schedule = a.epochs.map(EpochSchedule::uniform).unwrap_or_default();

    let embeddings = match &a.embeddings {
        Some(path) => {
            let probe = DstModel::new(
                model_config.clone(),
                vocab.clone(),
                ontology.clone(),
                all_heads(&ontology),
                0,
            )?;
            let mut table = probe.params().get(0).value.clone();
            let load = load_embeddings(path, &vocab, &mut table)?;
            info!(
                "pretrained vectors for {:.1}% of the vocabulary",
                load.hit_rate_pct
            );
            Some(table)
        }
        None => None,
    };

    let dialogs = view_input(&a.views, &raw, &pruned);
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            train_tracker(
                dialogs,
                &ontology,
                &vocab,
                &model_config,
                &schedule,
                &cfg,
                &map,
                embeddings.as_ref(),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut csv = String::from("epoch,head_group,seed,loss\n");
    let mut written = 0usize;
    for (&seed, (tracker, losses)) in seeds.iter().zip(&runs) {
        for m in tracker.models() {
            save_checkpoint(m, &checkpoint_path(&a.out, seed, &m.group_name()))?;
            written += 1;
        }
        for l in losses {
            csv += &format!("{},{},{},{}\n", l.epoch, l.head_group, l.seed, l.loss);
        }
    }
    let log_path = a.out.join(LOSS_LOG);
    fs::write(&log_path, csv).map_err(|e| Error::io(&log_path, e))?;

    let final_losses: serde_json::Map<String, serde_json::Value> = runs
        .iter()
        .flat_map(|(_, losses)| losses)
        .filter(|l| l.epoch == schedule.epochs_for(&l.head_group))
        .map(|l| (format!("seed{}/{}", l.seed, l.head_group), json!(l.loss)))
        .collect();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "train",
        "split": a.split,
        "dialogs": raw.len(),
        "vocab": vocab.len(),
        "seeds": seeds,
        "views": a.views,
        "model": model_config,
        "checkpoints": written,
        "final_loss": final_losses,
    }))
}

/// The seeds with a `seed<N>` directory under `root`, ascending.
pub fn discover_seeds(root: &Path) -> Result<Vec<u64>> {
    let mut seeds: Vec<u64> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("seed")?.parse().ok())
        .collect();
    seeds.sort_unstable();
    if seeds.is_empty() {
        return Err(Error::data(
            root.display().to_string(),
            "no seed<N> checkpoint directories",
        ));
    }
    Ok(seeds)
}

/// Loads the head-group checkpoints of one seed into a tracker.
pub fn load_tracker(root: &Path, seed: u64, ontology: &Ontology) -> Result<Tracker> {
    let models = head_groups(ontology)
        .iter()
        .map(|heads| {
            let path = checkpoint_path(root, seed, &group_name(heads));
            let model = load_checkpoint(&path, ontology)?;
            if model.heads() != heads.as_slice() {
                return Err(Error::Checkpoint {
                    field: "heads".into(),
                    msg: format!("{} holds heads {}", path.display(), model.group_name()),
                });
            }
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    Tracker::new(models)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Spread {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        Spread {
            avg: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Serialize)]
struct SeedScore {
    seed: u64,
    joint_goals: f64,
    joint_requests: f64,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<serde_json::Value> {
    let (ontology, raw) = a.corpus.load(a.split)?;
    let seeds = match &a.seeds {
        Some(s) => s.0.clone(),
        None => discover_seeds(&a.checkpoints)?,
    };
    let trackers = seeds
        .iter()
        .map(|&s| load_tracker(&a.checkpoints, s, &ontology))
        .collect::<Result<Vec<_>>>()?;
    let pruned = a.prune.prune(&raw)?;
    let dialogs = view_input(&[a.view], &raw, &pruned);
    let map = ActWordMap::default();

    let scores: Vec<JointAccuracy> = trackers
        .iter()
        .map(|t| evaluate(dialogs, &ontology, |d| t.predict(d, a.view, &map)))
        .collect::<Result<_>>()?;
    let per_seed: Vec<SeedScore> = seeds
        .iter()
        .zip(&scores)
        .map(|(&seed, s)| SeedScore {
            seed,
            joint_goals: s.joint_goals,
            joint_requests: s.joint_requests,
        })
        .collect();
    let goals: Vec<f64> = scores.iter().map(|s| s.joint_goals).collect();
    let requests: Vec<f64> = scores.iter().map(|s| s.joint_requests).collect();
    let ensemble = if a.ensemble {
        let acc = evaluate(dialogs, &ontology, |d| {
            ensemble_tracker_predict(&trackers, d, a.view, &map)
        })?;
        json!({"joint_goals": acc.joint_goals, "joint_requests": acc.joint_requests})
    } else {
        serde_json::Value::Null
    };
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "eval",
        "split": a.split,
        "view": a.view,
        "turns": scores[0].turns,
        "per_seed": per_seed,
        "joint_goals": Spread::of(&goals),
        "joint_requests": Spread::of(&requests),
        "ensemble": ensemble,
    }))
}

/// Report group of a parameter: `head.<name>` for heads, else the prefix
/// before the first dot.
fn param_group(name: &str) -> String {
    let mut parts = name.split('.');
    let first = parts.next().unwrap_or(name);
    match (first, parts.next()) {
        ("head", Some(head)) => format!("head.{head}"),
        _ => first.to_string(),
    }
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let ontology = Ontology::synthetic();
    let synth = SynthConfig {
        dialogs: 1,
        turns: 2,
        seed: a.seed,
        p_swap: 0.4,
        p_confuse: 0.4,
        ..SynthConfig::default()
    };
    let dialog = generate_synthetic(&synth)?.remove(0);
    let map = ActWordMap::default();
    let vocab = build_vocab(std::slice::from_ref(&dialog), &map, 1);
    let model = DstModel::new(
        a.model.config(),
        vocab,
        ontology.clone(),
        all_heads(&ontology),
        a.seed,
    )?;
    let enc = model.encode(&dialog, UserView::Cnet, &map);
    let fault = a.inject_fault.then_some(Fault::TanhBackward);
    let report =
        model.grad_check_with_fault(&enc, &dialog.gold(), a.l2, a.dropout, a.step, fault)?;

    let mut groups: std::collections::BTreeMap<String, f64> = std::collections::BTreeMap::new();
    for (name, e) in &report.per_param {
        let g = groups.entry(param_group(name)).or_insert(0.0);
        *g = g.max(*e);
    }
    let failing: Vec<&str> = groups
        .iter()
        .filter(|(_, &e)| !(e < a.threshold))
        .map(|(g, _)| g.as_str())
        .collect();
    emit(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "gradcheck",
            "threshold": a.threshold,
            "max_rel_error": report.max_rel_error,
            "checked": report.checked,
            "kink_skipped": report.kink_skipped,
            "groups": groups,
            "pass": failing.is_empty(),
        }),
    )?;
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Error::Harness(format!(
            "relative error at or above {} in: {}",
            a.threshold,
            failing.join(", ")
        )))
    }
}

pub fn cmd_gen_synth(a: &GenSynthArgs) -> Result<serde_json::Value> {
    let config = SynthConfig {
        dialogs: a.dialogs,
        turns: a.turns,
        seed: a.seed,
        p_swap: a.p_swap,
        p_confuse: a.p_confuse,
        p_interj: a.p_interj,
        p_drop: a.p_drop,
        distractor_pool: a.distractors,
        id_prefix: a.split.as_str().into(),
    };
    let dialogs = generate_synthetic(&config)?;
    write_corpus(&a.out, a.split, &dialogs, Some(&Ontology::synthetic()))?;
    let turns: usize = dialogs.iter().map(|d| d.turns.len()).sum();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "gen-synth",
        "out": a.out,
        "split": a.split,
        "dialogs": dialogs.len(),
        "turns": turns,
    }))
}

pub fn cmd_import(a: &ImportArgs) -> Result<serde_json::Value> {
    let ontology = match &a.ontology {
        Some(p) => Ontology::load(p)?,
        None => Ontology::dstc2(),
    };
    let n = import_dstc2(&a.data_root, &a.flist, &a.out, a.split, a.asr, &ontology)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "import-dstc2",
        "out": a.out,
        "split": a.split,
        "dialogs": n,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4, 1..2,9").unwrap(), vec![4, 1, 2, 9]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("1,1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn spread_matches_hand_computation() {
        let s = Spread::of(&[60.0, 72.5, 66.0]);
        assert_eq!(s.min, 60.0);
        assert_eq!(s.max, 72.5);
        assert!((s.avg - 66.166_666_666_666_67).abs() < 1e-12);
    }

    #[test]
    fn parameter_groups() {
        assert_eq!(param_group("gru.w_z"), "gru");
        assert_eq!(param_group("embedding"), "embedding");
        assert_eq!(param_group("head.food.w"), "head.food");
    }

    #[test]
    fn usage_errors_exit_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(main_with_args(["cnet-dst", "bogus"], &mut out, &mut err), 1);
        assert!(!err.is_empty());
        let code = main_with_args(
            [
                "cnet-dst",
                "stats",
                "--synthetic",
                "small",
                "--prune-threshold",
                "1.5",
            ],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 1);
    }

    #[test]
    fn help_exits_zero() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(
            main_with_args(["cnet-dst", "--help"], &mut out, &mut err),
            0
        );
        assert!(String::from_utf8(out).unwrap().contains("gen-synth"));
    }

    #[test]
    fn value_words_split_multiword_values() {
        let words = value_words(&Ontology::dstc2());
        assert!(words.contains("modern"));
        assert!(words.contains("european"));
        assert!(words.contains("centre"));
    }
}
