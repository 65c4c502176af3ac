//! Subcommand arguments and implementations. Progress records go to stdout as
//! `key=value` lines; diagnostics go through `log` to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cae_core::checkpoint::load_checkpoint;
use cae_core::evaluation::{build_report, train_classifier, train_lm, EvalReport, LmConfig};
use cae_core::inference::transfer_all;
use cae_core::synthetic;
use cae_core::trainer::{
    epoch_line, train_observed, warmup_line, TrainEvent, TrainLog, TrainOutcome, BEST_CHECKPOINT, FINAL_CHECKPOINT,
    METRICS_FILE,
};
use cae_core::{CaeError, Direction, Result, Style, TrainConfig, Vocabulary};

use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::pipeline::{
    ablation_variants, evaluate_both, load_corpora, optional_rppl, read_lines, real_perplexities, summary_table,
    EvalSettings, Judges, Splits, VariantSummary, TRAIN_FRACTION, VALID_FRACTION,
};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const ABLATION_FILE: &str = "ablation.txt";
pub const JUDGES_FILE: &str = "judges.txt";

#[derive(Parser, Debug)]
#[command(
    name = "cae",
    version,
    about = "Cycle-consistent adversarial autoencoders for text style transfer"
)]
pub struct Cli {
    /// More diagnostics on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the vocabulary, split both corpora and train a model.
    Train(TrainArgs),
    /// Transfer a sentence-per-line file with a trained checkpoint.
    Transfer(TransferArgs),
    /// Score transferred sentences against their sources.
    Evaluate(EvaluateArgs),
    /// Train and evaluate the full model and both ablations.
    Ablate(AblateArgs),
    /// Write a corpus from the built-in two-style toy grammar.
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Preset {
    #[default]
    Default,
    Yelp,
    Yahoo,
    Synthetic,
}

impl Preset {
    pub fn config(self) -> TrainConfig {
        match self {
            Preset::Default | Preset::Yelp => TrainConfig::yelp(),
            Preset::Yahoo => TrainConfig::yahoo(),
            Preset::Synthetic => TrainConfig::synthetic(),
        }
    }
}

/// Training configuration. Precedence, lowest first: preset, `--config`
/// file, `--set` pairs, individual flags.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// File of `key=value` config lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Any config key, e.g. `--set warmup_epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_cycle: bool,
    #[arg(long)]
    pub no_discriminators: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = self.preset.config();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CaeError::Config(format!("cannot read config file {}: {e}", path.display())))?;
            c.apply_kv_str(&text)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CaeError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k, v)?;
        }
        if let Some(v) = self.hidden {
            c.hidden = v;
        }
        if let Some(v) = self.lambda1 {
            c.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            c.lambda2 = v;
        }
        if let Some(v) = self.lambda3 {
            c.lambda3 = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.no_cycle |= self.no_cycle;
        c.no_discriminators |= self.no_discriminators;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub style1_file: PathBuf,
    #[arg(long)]
    pub style2_file: PathBuf,
    /// Output directory for the manifest, vocabulary, splits, metrics and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lowercase: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn parse_direction(s: &str) -> Result<Direction> {
    s.parse()
}

#[derive(Args, Clone, Debug)]
pub struct TransferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to `vocab.txt` next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// `1to2` or `2to1`.
    #[arg(long, value_parser = parse_direction)]
    pub direction: Direction,
    /// Defaults to the checkpoint's training value.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long)]
    pub lowercase: bool,
}

/// Sizes of the language models behind PPL and RPPL.
#[derive(Args, Clone, Debug)]
pub struct JudgeArgs {
    #[arg(long, default_value_t = LmConfig::default().embed)]
    pub lm_embed: usize,
    #[arg(long, default_value_t = LmConfig::default().hidden)]
    pub lm_hidden: usize,
    #[arg(long, default_value_t = LmConfig::default().epochs)]
    pub lm_epochs: usize,
    #[arg(long, default_value_t = LmConfig::default().dropout)]
    pub lm_dropout: f64,
}

impl Default for JudgeArgs {
    fn default() -> Self {
        let d = LmConfig::default();
        Self {
            lm_embed: d.embed,
            lm_hidden: d.hidden,
            lm_epochs: d.epochs,
            lm_dropout: d.dropout,
        }
    }
}

impl JudgeArgs {
    pub fn settings(&self, seed: u64, max_len: usize) -> Result<EvalSettings> {
        let mut s = EvalSettings::new(&TrainConfig {
            seed,
            max_len,
            ..TrainConfig::default()
        });
        s.lm = LmConfig {
            embed: self.lm_embed,
            hidden: self.lm_hidden,
            epochs: self.lm_epochs,
            dropout: self.lm_dropout,
            ..LmConfig::default()
        };
        s.lm.validate()?;
        Ok(s)
    }

    fn record(&self, m: &mut RunManifest) {
        m.set("lm.embed", self.lm_embed);
        m.set("lm.hidden", self.lm_hidden);
        m.set("lm.epochs", self.lm_epochs);
        m.set("lm.dropout", self.lm_dropout);
    }
}

#[derive(Args, Clone, Debug)]
pub struct EvaluateArgs {
    /// Transferred sentences, line-aligned with `--source`.
    #[arg(long)]
    pub transferred: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    /// Real style-1 text for the classifier and language models.
    #[arg(long)]
    pub style1_file: PathBuf,
    #[arg(long)]
    pub style2_file: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Direction the transfer went; its target style is scored.
    #[arg(long, value_parser = parse_direction)]
    pub direction: Direction,
    /// Real target-style sentences for RPPL; RPPL is skipped without them.
    #[arg(long)]
    pub held_out: Option<PathBuf>,
    /// Report file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub lowercase: bool,
    #[command(flatten)]
    pub judges: JudgeArgs,
}

#[derive(Args, Clone, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub judges: JudgeArgs,
}

#[derive(Args, Clone, Debug)]
pub struct SynthArgs {
    /// 1 or 2.
    #[arg(long)]
    pub style: u8,
    #[arg(long, default_value_t = 5000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit status for an error: 2 for bad configuration or inputs,
/// 3 for I/O failures, 4 for training divergence, 1 otherwise.
pub fn exit_code(e: &CaeError) -> i32 {
    match e {
        CaeError::Config(_) | CaeError::Contract(_) | CaeError::Parse { .. } | CaeError::Checkpoint(_) => 2,
        CaeError::Io { .. } => 3,
        CaeError::Divergence { .. } => 4,
        _ => 1,
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a).map(|_| ()),
        Command::Transfer(a) => cmd_transfer(a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| ()),
        Command::Ablate(a) => cmd_ablate(a).map(|_| ()),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// `path` with `.manifest.txt` in place of its extension.
pub fn sidecar_manifest(path: &Path) -> PathBuf {
    path.with_extension("manifest.txt")
}

fn train_manifest(command: &str, args: &TrainArgs, config: &TrainConfig) -> Result<RunManifest> {
    let mut m = RunManifest::new(command);
    m.add_input("style1_file", &args.style1_file)?;
    m.add_input("style2_file", &args.style2_file)?;
    m.set("seed", config.seed);
    m.set("lowercase", args.lowercase);
    m.set("split", format!("{TRAIN_FRACTION}/{VALID_FRACTION}"));
    let (l1, l2, l3) = config.effective_lambdas();
    m.set("lambda1", format!("{l1:?}"));
    m.set("lambda2", format!("{l2:?}"));
    m.set("lambda3", format!("{l3:?}"));
    m.add_config(config);
    m.set("out", args.out.display());
    Ok(m)
}

fn add_train_artifacts(m: &mut RunManifest, vocab: &str) {
    m.set("artifact.vocab", vocab);
    m.set("artifact.metrics", METRICS_FILE);
    m.set("artifact.best_checkpoint", BEST_CHECKPOINT);
    m.set("artifact.final_checkpoint", FINAL_CHECKPOINT);
}

fn add_split_artifacts(m: &mut RunManifest) {
    m.set("artifact.splits", "train{1,2}.txt valid{1,2}.txt test{1,2}.txt");
}

/// Trains into `dir`, echoing warm-up and epoch records to stdout with `tag`.
fn train_with_progress(
    splits: &Splits,
    vocab: &Vocabulary,
    config: &TrainConfig,
    dir: &Path,
    tag: &str,
) -> Result<TrainOutcome> {
    let config = TrainConfig {
        checkpoint_dir: Some(dir.to_path_buf()),
        ..config.clone()
    };
    let outcome = train_observed(&splits.train_data(), vocab, &config, |event| match event {
        TrainEvent::Warmup { epoch, recon } => println!("{tag}{}", warmup_line(epoch, recon)),
        TrainEvent::Epoch(r) => {
            println!("{tag}{}", epoch_line(r));
            log::info!("{tag}epoch {} took {:.1}s", r.epoch, r.seconds);
        }
        TrainEvent::Step { step, breakdown, .. } => log::debug!("{tag}step {step} {breakdown}"),
    })?;
    Ok(outcome)
}

fn done_line(tag: &str, log: &TrainLog) -> String {
    format!(
        "{tag}kind=done best_epoch={} initial_valid_recon={:?} final_valid_recon={:?}",
        log.best_epoch,
        log.initial_valid_recon().unwrap_or(f64::NAN),
        log.final_valid_recon().unwrap_or(f64::NAN)
    )
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub manifest: RunManifest,
    pub vocab: Vocabulary,
    pub splits: Splits,
    pub outcome: TrainOutcome,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainRun> {
    let config = args.config.resolve()?;
    let mut manifest = train_manifest("train", args, &config)?;
    add_train_artifacts(&mut manifest, VOCAB_FILE);
    add_split_artifacts(&mut manifest);
    manifest.write(&args.out.join(MANIFEST_FILE))?;

    let (vocab, corpora) = load_corpora(
        &args.style1_file,
        &args.style2_file,
        config.vocab_max_size,
        args.lowercase,
    )?;
    vocab.save(&args.out.join(VOCAB_FILE))?;
    let splits = Splits::new(&corpora, config.seed)?;
    splits.write(&args.out, &vocab)?;
    log::info!(
        "vocabulary {} tokens; train {}/{}, valid {}/{}, test {}/{}",
        vocab.len(),
        splits.train[0].len(),
        splits.train[1].len(),
        splits.valid[0].len(),
        splits.valid[1].len(),
        splits.test[0].len(),
        splits.test[1].len()
    );
    let outcome = train_with_progress(&splits, &vocab, &config, &args.out, "")?;
    println!("{}", done_line("", &outcome.log));
    Ok(TrainRun {
        manifest,
        vocab,
        splits,
        outcome,
    })
}

/// Returns the number of lines written.
pub fn cmd_transfer(args: &TransferArgs) -> Result<usize> {
    let vocab_path = match &args.vocab {
        Some(p) => p.clone(),
        None => args
            .checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(VOCAB_FILE),
    };
    let mut m = RunManifest::new("transfer");
    m.add_input("checkpoint", &args.checkpoint)?;
    m.add_input("vocab", &vocab_path)?;
    m.add_input("input", &args.input)?;
    m.set("direction", args.direction);
    m.set("lowercase", args.lowercase);
    m.set("artifact.output", args.output.display());
    let vocab = Vocabulary::load(&vocab_path)?;
    let ckpt = load_checkpoint(&args.checkpoint, &vocab)?;
    let max_len = args.max_len.unwrap_or(ckpt.config.max_len);
    m.set("max_len", max_len);
    m.write(&sidecar_manifest(&args.output))?;

    let lines = read_lines(&args.input, &vocab, args.lowercase)?;
    let sentences: Vec<Vec<usize>> = lines.iter().flatten().cloned().collect();
    let results = transfer_all(&ckpt.model, &sentences, args.direction, max_len, args.batch_size)?;
    let mut results = results.iter();
    let mut text = String::new();
    for line in &lines {
        if line.is_some() {
            let r = results.next().expect("one result per non-blank line");
            text.push_str(&vocab.decode(r.content()));
        }
        text.push('\n');
    }
    fs::write(&args.output, text).map_err(|e| CaeError::io(&args.output, e))?;
    println!("kind=transfer lines={} transferred={}", lines.len(), sentences.len());
    Ok(lines.len())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvalReport> {
    let mut inputs = vec![
        ("transferred", &args.transferred),
        ("source", &args.source),
        ("style1_file", &args.style1_file),
        ("style2_file", &args.style2_file),
        ("vocab", &args.vocab),
    ];
    if let Some(h) = &args.held_out {
        inputs.push(("held_out", h));
    }
    for (name, path) in &inputs {
        if !path.is_file() {
            return Err(CaeError::Config(format!(
                "--{} {} does not exist",
                name.replace('_', "-"),
                path.display()
            )));
        }
    }
    let mut m = RunManifest::new("evaluate");
    for (name, path) in &inputs {
        m.add_input(name, path)?;
    }
    m.set("direction", args.direction);
    m.set("seed", args.seed);
    m.set("lowercase", args.lowercase);
    args.judges.record(&mut m);
    m.set("artifact.report", args.out.display());
    m.write(&sidecar_manifest(&args.out))?;

    let vocab = Vocabulary::load(&args.vocab)?;
    let outputs = read_lines(&args.transferred, &vocab, args.lowercase)?;
    let sources = read_lines(&args.source, &vocab, args.lowercase)?;
    if outputs.len() != sources.len() {
        return Err(CaeError::Contract(format!(
            "{} has {} lines but {} has {}",
            args.transferred.display(),
            outputs.len(),
            args.source.display(),
            sources.len()
        )));
    }
    // rows with a blank source carry nothing to score
    let (sources, outputs): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sources
        .into_iter()
        .zip(outputs)
        .filter_map(|(s, o)| Some((s?, o.unwrap_or_default())))
        .unzip();
    let real = [
        read_lines(&args.style1_file, &vocab, args.lowercase)?
            .into_iter()
            .flatten()
            .collect::<Vec<_>>(),
        read_lines(&args.style2_file, &vocab, args.lowercase)?
            .into_iter()
            .flatten()
            .collect::<Vec<_>>(),
    ];
    let settings = args.judges.settings(args.seed, usize::MAX)?;
    let target = args.direction.target();
    let (classifier, lm) = thread::scope(|s| {
        let clf = s.spawn(|| train_classifier(&real[0], &real[1], vocab.len(), &settings.classifier, settings.seed));
        let lm = train_lm(&real[target.index()], vocab.len(), &settings.lm, settings.seed);
        (clf.join().expect("classifier thread panicked"), lm)
    });
    let (classifier, lm) = (classifier?, lm?);
    let rppl = match &args.held_out {
        Some(path) => {
            let held: Vec<Vec<usize>> = read_lines(path, &vocab, args.lowercase)?
                .into_iter()
                .flatten()
                .collect();
            let generated: Vec<Vec<usize>> = outputs.iter().filter(|o| !o.is_empty()).cloned().collect();
            optional_rppl(&generated, &held, vocab.len(), &settings, settings.seed ^ 0x7e57)?
        }
        None => None,
    };
    let report = build_report(&vocab, &classifier, &lm, &sources, &outputs, target, rppl)?;
    fs::write(&args.out, report.to_text()).map_err(|e| CaeError::io(&args.out, e))?;
    println!("{}", report_line("", &report));
    Ok(report)
}

fn report_line(tag: &str, r: &EvalReport) -> String {
    format!(
        "{tag}kind=report target={} transfer_rate={:?} bleu={:?} ppl={:?} rppl={} top_trigram_share={:?}",
        r.target.index() + 1,
        r.transfer_rate,
        r.bleu,
        r.ppl,
        r.rppl.map_or_else(|| "none".to_string(), |v| format!("{v:?}")),
        r.top_trigram_share
    )
}

#[derive(Clone, Debug)]
pub struct VariantRun {
    pub name: String,
    pub config: TrainConfig,
    pub log: TrainLog,
    pub reports: [EvalReport; 2],
    pub summary: VariantSummary,
}

#[derive(Clone, Debug)]
pub struct AblationRun {
    pub variants: Vec<VariantRun>,
    /// Held-out accuracy of the shared style classifier.
    pub classifier_accuracy: f64,
    /// Each style's real test split under its own language model.
    pub real_ppl: [f64; 2],
    pub table: String,
}

impl AblationRun {
    pub fn variant(&self, name: &str) -> Option<&VariantRun> {
        self.variants.iter().find(|v| v.name == name)
    }
}

/// Trains the full model and both ablations on the same splits, concurrently,
/// and evaluates each on the test splits in both directions.
pub fn cmd_ablate(args: &AblateArgs) -> Result<AblationRun> {
    let base = args.train.config.resolve()?;
    let variants = ablation_variants(&base);
    let out = &args.train.out;
    let mut m = train_manifest("ablate", &args.train, &base)?;
    args.judges.record(&mut m);
    m.set(
        "variants",
        variants.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","),
    );
    m.set("artifact.vocab", VOCAB_FILE);
    add_split_artifacts(&mut m);
    m.set("artifact.table", ABLATION_FILE);
    m.set("artifact.judges", JUDGES_FILE);
    m.write(&out.join(MANIFEST_FILE))?;
    for (name, config) in &variants {
        let mut vm = train_manifest("ablate", &args.train, config)?;
        vm.set("variant", name);
        vm.set("out", out.join(name).display());
        add_train_artifacts(&mut vm, &format!("../{VOCAB_FILE}"));
        vm.set("artifact.reports", "report_1to2.txt report_2to1.txt");
        vm.write(&out.join(name).join(MANIFEST_FILE))?;
    }

    let (vocab, corpora) = load_corpora(
        &args.train.style1_file,
        &args.train.style2_file,
        base.vocab_max_size,
        args.train.lowercase,
    )?;
    vocab.save(&out.join(VOCAB_FILE))?;
    let splits = Splits::new(&corpora, base.seed)?;
    splits.write(out, &vocab)?;
    let settings = args.judges.settings(base.seed, base.max_len)?;

    let (judges, outcomes) = thread::scope(|s| {
        let handles: Vec<_> = variants
            .iter()
            .map(|(name, config)| {
                let (splits, vocab) = (&splits, &vocab);
                let dir = out.join(name);
                s.spawn(move || train_with_progress(splits, vocab, config, &dir, &format!("variant={name} ")))
            })
            .collect();
        let judges = Judges::train(
            [&splits.train[0].sentences, &splits.train[1].sentences],
            vocab.len(),
            &settings,
        );
        let outcomes: Vec<Result<TrainOutcome>> = handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect();
        (judges, outcomes)
    });
    let judges = judges?;
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let real_ppl = real_perplexities(&judges, &splits)?;
    let judges_line = format!(
        "kind=judges classifier_accuracy={:?} real_ppl1={:?} real_ppl2={:?}",
        judges.classifier.held_out_accuracy, real_ppl[0], real_ppl[1]
    );
    let path = out.join(JUDGES_FILE);
    fs::write(&path, format!("{judges_line}\n")).map_err(|e| CaeError::io(&path, e))?;
    println!("{judges_line}");

    let runs = thread::scope(|s| {
        let handles: Vec<_> = variants
            .iter()
            .zip(&outcomes)
            .map(|((_, _), o)| s.spawn(|| evaluate_both(&o.model, &vocab, &judges, &splits, &settings)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect::<Vec<Result<[EvalReport; 2]>>>()
    });
    let mut variant_runs = Vec::new();
    for (((name, config), outcome), reports) in variants.iter().zip(outcomes).zip(runs) {
        let reports = reports?;
        let dir = out.join(name);
        for (r, dir_name) in reports.iter().zip(["1to2", "2to1"]) {
            let path = dir.join(format!("report_{dir_name}.txt"));
            fs::write(&path, r.to_text()).map_err(|e| CaeError::io(&path, e))?;
            println!("{}", report_line(&format!("variant={name} "), r));
        }
        println!("{}", done_line(&format!("variant={name} "), &outcome.log));
        let summary = VariantSummary::from_reports(name, &reports);
        variant_runs.push(VariantRun {
            name: name.to_string(),
            config: config.clone(),
            log: outcome.log,
            reports,
            summary,
        });
    }
    let summaries: Vec<VariantSummary> = variant_runs.iter().map(|v| v.summary.clone()).collect();
    let table = summary_table(&summaries);
    let path = out.join(ABLATION_FILE);
    fs::write(&path, &table).map_err(|e| CaeError::io(&path, e))?;
    Ok(AblationRun {
        variants: variant_runs,
        classifier_accuracy: judges.classifier.held_out_accuracy,
        real_ppl,
        table,
    })
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let style = match args.style {
        1 => Style::S1,
        2 => Style::S2,
        other => return Err(CaeError::Config(format!("--style must be 1 or 2, got {other}"))),
    };
    let mut m = RunManifest::new("synth");
    m.set("style", args.style);
    m.set("count", args.count);
    m.set("seed", args.seed);
    m.set("artifact.corpus", args.out.display());
    m.write(&sidecar_manifest(&args.out))?;
    let mut text = synthetic::generate(style, args.count, args.seed).join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(&args.out, text).map_err(|e| CaeError::io(&args.out, e))?;
    println!("kind=synth style={} sentences={}", args.style, args.count);
    Ok(())
}
