//! Alternating min-max training.
//!
//! Each step runs three phases in order:
//!
//! 1. `disc_steps` discriminator updates on `disc_1 + disc_2`, with the
//!    transferred latents computed from frozen encoders and transfer nets;
//! 2. one autoencoder update on `λ1 · L_R`;
//! 3. one transfer-net update on `λ2 · (gen_12 + gen_21) + λ3 · L_C`, with the
//!    encoder latents detached.
//!
//! Phase 1 and the generator terms are skipped under `no_discriminators`.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::save_checkpoint;
use crate::config::{TrainConfig, TransferInit};
use crate::data::{make_batches, sequential_batches, Batch, Corpus, Style, Vocabulary};
use crate::error::{CaeError, Result};
use crate::losses::{
    cycle_graph, discriminator_loss_graph, generator_loss_graph, reconstruction_graph, style_reconstruction_graph,
    total_loss, LossBreakdown, LossComponents,
};
use crate::model::{init_model, CaeModel};
use crate::tensor::{Graph, Optimizer, Tensor};

/// Adam state for the three parameter groups.
#[derive(Clone, Debug)]
pub struct TrainerState {
    pub autoencoder: Optimizer,
    pub generator: Optimizer,
    pub discriminator: Optimizer,
    /// Number of completed `train_step` calls.
    pub step: usize,
}

impl TrainerState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        Ok(Self {
            autoencoder: Optimizer::adam(config.lr_autoencoder)?,
            generator: Optimizer::adam(config.lr_generator)?,
            discriminator: Optimizer::adam(config.lr_discriminator)?,
            step: 0,
        })
    }
}

/// Which phase of a step is running; passed to [`train_step_observed`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Discriminator,
    Autoencoder,
    Transfer,
}

/// One alternating update. The returned breakdown holds the losses measured
/// before any parameter moved.
pub fn train_step(
    model: &mut CaeModel,
    batch1: &Batch,
    batch2: &Batch,
    config: &TrainConfig,
    state: &mut TrainerState,
) -> Result<LossBreakdown> {
    train_step_observed(model, batch1, batch2, config, state, |_, _| {})
}

/// [`train_step`] that calls `after_phase` once each phase has applied its update.
pub fn train_step_observed(
    model: &mut CaeModel,
    batch1: &Batch,
    batch2: &Batch,
    config: &TrainConfig,
    state: &mut TrainerState,
    mut after_phase: impl FnMut(Phase, &CaeModel),
) -> Result<LossBreakdown> {
    if batch1.style != Style::S1 || batch2.style != Style::S2 {
        return Err(CaeError::Contract(
            "train_step expects a style-1 and a style-2 batch".into(),
        ));
    }
    let lambdas = config.effective_lambdas();
    let step = state.step + 1;

    let mut rec = Graph::new();
    let (z1, z2, recon) = reconstruction_graph(&mut rec, model, batch1, batch2)?;
    let z1v = rec.value(z1).clone();
    let z2v = rec.value(z2).clone();
    let recon_value = rec.value(recon).item();

    let fake2 = crate::model::transfer(&model.t12, &z1v)?;
    let fake1 = crate::model::transfer(&model.t21, &z2v)?;

    // (a) discriminators
    let mut disc = None;
    let disc_rounds = if config.no_discriminators { 0 } else { config.disc_steps };
    for _ in 0..disc_rounds {
        let (d1, d2) = discriminator_step(model, &z1v, &z2v, &fake1, &fake2, &mut state.discriminator)?;
        disc.get_or_insert((d1, d2));
    }
    if disc_rounds > 0 {
        after_phase(Phase::Discriminator, model);
    }
    let (disc_1, disc_2) = match disc {
        Some(v) => v,
        None => discriminator_values(model, &z1v, &z2v, &fake1, &fake2)?,
    };

    // (b) autoencoders
    let weighted = rec.scale(recon, lambdas.0);
    rec.backward(weighted)?;
    rec.accumulate_grads(model.autoencoder_params_mut());
    state.autoencoder.step(model.autoencoder_params_mut())?;
    after_phase(Phase::Autoencoder, model);

    // (c) transfer nets
    let mut g = Graph::new();
    let a = g.constant(z1v);
    let b = g.constant(z2v);
    let t12 = model.t12.forward(&mut g, a)?;
    let t21 = model.t21.forward(&mut g, b)?;
    let gen_12 = generator_loss_graph(&mut g, &model.d2, t12)?;
    let gen_21 = generator_loss_graph(&mut g, &model.d1, t21)?;
    let cycle = cycle_graph(&mut g, model, a, b)?;
    let adv = g.add(gen_12, gen_21)?;
    let adv = g.scale(adv, lambdas.1);
    let cyc = g.scale(cycle, lambdas.2);
    let objective = g.add(adv, cyc)?;
    let components = LossComponents {
        recon: recon_value,
        gen_adv_12: g.value(gen_12).item(),
        gen_adv_21: g.value(gen_21).item(),
        disc_1,
        disc_2,
        cycle: g.value(cycle).item(),
    };
    let breakdown = total_loss(components, lambdas).map_err(|e| with_step(e, step))?;
    g.backward(objective)?;
    g.accumulate_grads(model.transfer_params_mut());
    state.generator.step(model.transfer_params_mut())?;
    after_phase(Phase::Transfer, model);

    state.step = step;
    Ok(breakdown)
}

fn with_step(e: CaeError, step: usize) -> CaeError {
    match e {
        CaeError::Divergence { breakdown, .. } => CaeError::Divergence { step, breakdown },
        other => other,
    }
}

fn discriminator_graph(
    g: &mut Graph,
    model: &CaeModel,
    z1: &Tensor,
    z2: &Tensor,
    fake1: &Tensor,
    fake2: &Tensor,
) -> Result<(crate::tensor::Var, crate::tensor::Var)> {
    let (r1, r2) = (g.constant(z1.clone()), g.constant(z2.clone()));
    let (f1, f2) = (g.constant(fake1.clone()), g.constant(fake2.clone()));
    let d1 = discriminator_loss_graph(g, &model.d1, r1, f1)?;
    let d2 = discriminator_loss_graph(g, &model.d2, r2, f2)?;
    Ok((d1, d2))
}

fn discriminator_values(
    model: &CaeModel,
    z1: &Tensor,
    z2: &Tensor,
    fake1: &Tensor,
    fake2: &Tensor,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let (d1, d2) = discriminator_graph(&mut g, model, z1, z2, fake1, fake2)?;
    Ok((g.value(d1).item(), g.value(d2).item()))
}

fn discriminator_step(
    model: &mut CaeModel,
    z1: &Tensor,
    z2: &Tensor,
    fake1: &Tensor,
    fake2: &Tensor,
    opt: &mut Optimizer,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let (d1, d2) = discriminator_graph(&mut g, model, z1, z2, fake1, fake2)?;
    let values = (g.value(d1).item(), g.value(d2).item());
    let sum = g.add(d1, d2)?;
    g.backward(sum)?;
    g.accumulate_grads(model.discriminator_params_mut());
    opt.step(model.discriminator_params_mut())?;
    Ok(values)
}

/// Token-weighted mean reconstruction NLL of one style over a whole corpus.
pub fn corpus_reconstruction_loss(model: &CaeModel, corpus: &Corpus, batch_size: usize, max_len: usize) -> Result<f64> {
    let ae = model.autoencoder(corpus.style);
    let mut nll = 0.0;
    let mut tokens = 0.0;
    for batch in sequential_batches(corpus, batch_size, max_len)? {
        let mut g = Graph::new();
        let (_, loss) = style_reconstruction_graph(&mut g, ae, &batch)?;
        let n: f64 = batch.lengths.iter().map(|&l| (l + 1) as f64).sum();
        nll += g.value(loss).item() * n;
        tokens += n;
    }
    Ok(if tokens > 0.0 { nll / tokens } else { 0.0 })
}

/// Validation L_R: per-style mean NLL summed over the two styles.
pub fn validation_loss(model: &CaeModel, valid1: &Corpus, valid2: &Corpus, config: &TrainConfig) -> Result<f64> {
    Ok(
        corpus_reconstruction_loss(model, valid1, config.batch_size, config.max_len)?
            + corpus_reconstruction_loss(model, valid2, config.batch_size, config.max_len)?,
    )
}

/// Training and validation corpora of both styles over one shared vocabulary.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train1: Corpus,
    pub train2: Corpus,
    pub valid1: Corpus,
    pub valid2: Corpus,
}

impl TrainData {
    fn check(&self) -> Result<()> {
        for (c, style, what) in [
            (&self.train1, Style::S1, "style-1 training"),
            (&self.train2, Style::S2, "style-2 training"),
            (&self.valid1, Style::S1, "style-1 validation"),
            (&self.valid2, Style::S2, "style-2 validation"),
        ] {
            if c.style != style {
                return Err(CaeError::Contract(format!("{what} corpus is labelled {}", c.style)));
            }
        }
        if self.train1.is_empty() || self.train2.is_empty() {
            return Err(CaeError::Config("both training corpora must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Index of the last step taken before this validation pass.
    pub last_step: usize,
    pub valid_recon: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Mean reconstruction loss of each warm-up epoch.
    pub warmup: Vec<f64>,
    pub steps: Vec<(usize, LossBreakdown)>,
    /// Entry 0 is the untrained model.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn initial_valid_recon(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.valid_recon)
    }

    pub fn final_valid_recon(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.valid_recon)
    }

    /// Metrics-file form; timings are left out so reruns are byte-identical.
    pub fn to_metrics_string(&self) -> String {
        let mut s = String::new();
        for (i, loss) in self.warmup.iter().enumerate() {
            let _ = writeln!(s, "{}", warmup_line(i + 1, *loss));
        }
        let mut steps = self.steps.iter().peekable();
        for e in &self.epochs {
            while let Some((step, b)) = steps.next_if(|(step, _)| *step <= e.last_step) {
                let _ = writeln!(s, "{}", step_line(*step, b));
            }
            let _ = writeln!(s, "{}", epoch_line(e));
        }
        for (step, b) in steps {
            let _ = writeln!(s, "{}", step_line(*step, b));
        }
        s
    }
}

pub fn step_line(step: usize, b: &LossBreakdown) -> String {
    format!("kind=step step={step} {b}")
}

pub fn warmup_line(epoch: usize, recon: f64) -> String {
    format!("kind=warmup epoch={epoch} recon={recon:?}")
}

pub fn epoch_line(e: &EpochRecord) -> String {
    format!("kind=epoch epoch={} valid_recon={:?}", e.epoch, e.valid_recon)
}

/// Events reported while training.
#[derive(Clone, Debug)]
pub enum TrainEvent<'a> {
    Warmup {
        epoch: usize,
        recon: f64,
    },
    Step {
        epoch: usize,
        step: usize,
        breakdown: &'a LossBreakdown,
    },
    Epoch(&'a EpochRecord),
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: CaeModel,
    /// Parameters with the lowest validation L_R seen (the initial model counts).
    pub best: CaeModel,
    pub log: TrainLog,
}

pub const METRICS_FILE: &str = "metrics.txt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// Derives an independent stream seed; splitmix64 finalizer.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Batch stream for one style. The shorter corpus is reshuffled and replayed
/// so both streams yield the same number of batches per epoch.
fn epoch_batches(corpus: &Corpus, config: &TrainConfig, epoch: usize, count: usize) -> Result<Vec<Batch>> {
    let style = corpus.style.index() as u64;
    let mut out = Vec::with_capacity(count);
    let mut pass = 0u64;
    while out.len() < count {
        let seed = mix_seed(config.seed, epoch as u64 * 1024 + pass, style + 1);
        let batches = make_batches(corpus, config.batch_size, config.max_len, seed)?;
        let need = count - out.len();
        out.extend(batches.into_iter().take(need));
        pass += 1;
    }
    Ok(out)
}

fn batches_per_epoch(corpus: &Corpus, batch_size: usize) -> usize {
    corpus.len().div_ceil(batch_size)
}

/// Full training run. When `config.checkpoint_dir` is set, the metrics file
/// and the best and final checkpoints are written there.
pub fn train(data: &TrainData, vocab: &Vocabulary, config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(data, vocab, config, |_| {})
}

pub fn train_observed(
    data: &TrainData,
    vocab: &Vocabulary,
    config: &TrainConfig,
    mut observe: impl FnMut(TrainEvent),
) -> Result<TrainOutcome> {
    config.validate()?;
    data.check()?;
    let mut model = init_model(config, vocab.len(), config.seed)?;
    let mut state = TrainerState::new(config)?;
    let mut metrics = match &config.checkpoint_dir {
        Some(dir) => Some(MetricsWriter::create(dir)?),
        None => None,
    };

    let mut log = TrainLog::default();
    let initial = EpochRecord {
        epoch: 0,
        last_step: 0,
        valid_recon: validation_loss(&model, &data.valid1, &data.valid2, config)?,
        seconds: 0.0,
    };
    record_epoch(&mut log, &mut metrics, initial, &mut observe)?;
    warm_start(&mut model, data, config, |epoch, recon| {
        if let Some(m) = metrics.as_mut() {
            m.line(&warmup_line(epoch, recon))?;
        }
        observe(TrainEvent::Warmup { epoch, recon });
        log.warmup.push(recon);
        Ok(())
    })?;
    let mut best = (log.epochs[0].valid_recon, model.clone());
    if let Some(dir) = &config.checkpoint_dir {
        save_checkpoint(&dir.join(BEST_CHECKPOINT), &model, config, vocab)?;
    }

    let steps_per_epoch =
        batches_per_epoch(&data.train1, config.batch_size).max(batches_per_epoch(&data.train2, config.batch_size));
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let b1 = epoch_batches(&data.train1, config, epoch, steps_per_epoch)?;
        let b2 = epoch_batches(&data.train2, config, epoch, steps_per_epoch)?;
        for (x1, x2) in b1.iter().zip(&b2) {
            let breakdown = train_step(&mut model, x1, x2, config, &mut state)?;
            if let Some(m) = metrics.as_mut() {
                m.line(&step_line(state.step, &breakdown))?;
            }
            observe(TrainEvent::Step {
                epoch,
                step: state.step,
                breakdown: &breakdown,
            });
            log.steps.push((state.step, breakdown));
        }
        let record = EpochRecord {
            epoch,
            last_step: state.step,
            valid_recon: validation_loss(&model, &data.valid1, &data.valid2, config)?,
            seconds: started.elapsed().as_secs_f64(),
        };
        if record.valid_recon < best.0 {
            best = (record.valid_recon, model.clone());
            log.best_epoch = epoch;
            if let Some(dir) = &config.checkpoint_dir {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), &model, config, vocab)?;
            }
        }
        record_epoch(&mut log, &mut metrics, record, &mut observe)?;
    }
    if let Some(dir) = &config.checkpoint_dir {
        save_checkpoint(&dir.join(FINAL_CHECKPOINT), &model, config, vocab)?;
    }
    Ok(TrainOutcome {
        model,
        best: best.1,
        log,
    })
}

/// Optional warm start: shifts the transfer nets towards the identity, then
/// pretrains the style-1 autoencoder on the union of both training corpora and
/// copies it into the style-2 slot, so both latent spaces start out aligned.
pub fn warm_start(
    model: &mut CaeModel,
    data: &TrainData,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64) -> Result<()>,
) -> Result<()> {
    if config.transfer_init == TransferInit::NearIdentity {
        model.t12.shift_to_near_identity();
        model.t21.shift_to_near_identity();
    }
    if config.warmup_epochs == 0 {
        return Ok(());
    }
    let mut union = data.train1.clone();
    union.sentences.extend(data.train2.sentences.iter().cloned());
    let mut opt = Optimizer::adam(config.lr_autoencoder)?;
    for epoch in 1..=config.warmup_epochs {
        let batches = make_batches(
            &union,
            config.batch_size,
            config.max_len,
            mix_seed(config.seed, epoch as u64, 0),
        )?;
        let mut total = 0.0;
        for batch in &batches {
            let mut g = Graph::new();
            let (_, loss) = style_reconstruction_graph(&mut g, &model.ae1, batch)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(CaeError::Divergence {
                    step: 0,
                    breakdown: Box::new(LossBreakdown {
                        recon: value,
                        ..LossBreakdown::default()
                    }),
                });
            }
            total += value;
            g.backward(loss)?;
            g.accumulate_grads(model.ae1.params_mut());
            opt.step(model.ae1.params_mut())?;
        }
        on_epoch(epoch, total / batches.len().max(1) as f64)?;
    }
    model.ae2 = model.ae1.renamed("ae2", Style::S2);
    Ok(())
}

fn record_epoch(
    log: &mut TrainLog,
    metrics: &mut Option<MetricsWriter>,
    record: EpochRecord,
    observe: &mut impl FnMut(TrainEvent),
) -> Result<()> {
    if let Some(m) = metrics.as_mut() {
        m.line(&epoch_line(&record))?;
    }
    observe(TrainEvent::Epoch(&record));
    log.epochs.push(record);
    Ok(())
}

/// Append-only `key=value` record file.
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
}

impl MetricsWriter {
    /// Creates (truncating) `dir/metrics.txt`, creating `dir` if needed.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CaeError::io(dir, e))?;
        let path = dir.join(METRICS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| CaeError::io(&path, e))?;
        Ok(Self { path, file })
    }

    pub fn line(&mut self, line: &str) -> Result<()> {
        writeln!(self.file, "{line}").map_err(|e| CaeError::io(&self.path, e))
    }
}

/// Parses one metrics line into ordered `(key, value)` pairs.
pub fn parse_metrics_line(line: &str) -> Result<Vec<(String, String)>> {
    line.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| CaeError::Parse {
                    what: "metrics line",
                    detail: format!("expected key=value, got {kv:?}"),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Batch;
    use crate::model::init_model;
    use crate::tensor::Param;

    fn toy() -> (CaeModel, Batch, Batch) {
        let cfg = TrainConfig {
            hidden: 4,
            ..TrainConfig::default()
        };
        let model = init_model(&cfg, 8, 3).unwrap();
        let b1 = Batch::from_sentences(&[&[4, 5, 6], &[5, 7]], Style::S1, 20).unwrap();
        let b2 = Batch::from_sentences(&[&[6, 4], &[7, 7, 5]], Style::S2, 20).unwrap();
        (model, b1, b2)
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(0, 1, 1), mix_seed(0, 2, 1));
        assert_ne!(mix_seed(0, 1, 1), mix_seed(0, 1, 2));
        assert_eq!(mix_seed(5, 1, 1), mix_seed(5, 1, 1));
    }

    #[test]
    fn recycled_stream_has_requested_length() {
        let c = Corpus::new(Style::S1, vec![vec![4]; 5], 8).unwrap();
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        let b = epoch_batches(&c, &cfg, 1, 7).unwrap();
        assert_eq!(b.len(), 7);
    }

    #[test]
    fn breakdown_reports_pre_update_losses() {
        let (mut model, b1, b2) = toy();
        let cfg = TrainConfig {
            hidden: 4,
            ..TrainConfig::default()
        };
        let recon = crate::losses::reconstruction_loss(&model, &b1, &b2).unwrap();
        let mut st = TrainerState::new(&cfg).unwrap();
        let b = train_step(&mut model, &b1, &b2, &cfg, &mut st).unwrap();
        assert_eq!(b.recon, recon);
        assert_eq!(st.step, 1);
        let expected = 0.1 * b.recon + b.gen_adv_12 + b.gen_adv_21 + b.cycle;
        assert!((b.total - expected).abs() < 1e-12);
    }

    fn snapshot<'a>(params: impl IntoIterator<Item = &'a Param>) -> Vec<(String, Tensor)> {
        params
            .into_iter()
            .map(|p| (p.name().to_string(), p.value().clone()))
            .collect()
    }

    fn groups(m: &CaeModel) -> [Vec<(String, Tensor)>; 3] {
        [
            snapshot(m.ae1.params().into_iter().chain(m.ae2.params())),
            snapshot(m.t12.params().into_iter().chain(m.t21.params())),
            snapshot(m.d1.params().into_iter().chain(m.d2.params())),
        ]
    }

    #[test]
    fn each_phase_moves_only_its_group() {
        let (mut model, b1, b2) = toy();
        let cfg = TrainConfig {
            hidden: 4,
            ..TrainConfig::default()
        };
        let mut st = TrainerState::new(&cfg).unwrap();
        let mut prev = groups(&model);
        let mut seen = Vec::new();
        train_step_observed(&mut model, &b1, &b2, &cfg, &mut st, |phase, m| {
            let now = groups(m);
            let moved: Vec<bool> = (0..3).map(|i| now[i] != prev[i]).collect();
            let expected = match phase {
                Phase::Discriminator => [false, false, true],
                Phase::Autoencoder => [true, false, false],
                Phase::Transfer => [false, true, false],
            };
            assert_eq!(moved, expected, "{phase:?}");
            seen.push(phase);
            prev = now;
        })
        .unwrap();
        assert_eq!(seen, [Phase::Discriminator, Phase::Autoencoder, Phase::Transfer]);
    }

    #[test]
    fn zero_learning_rates_leave_parameters_unchanged() {
        let (mut model, b1, b2) = toy();
        let before = model.clone();
        let cfg = TrainConfig {
            hidden: 4,
            ..TrainConfig::default()
        };
        let mut st = TrainerState {
            autoencoder: Optimizer::adam(0.0).unwrap(),
            generator: Optimizer::adam(0.0).unwrap(),
            discriminator: Optimizer::adam(0.0).unwrap(),
            step: 0,
        };
        for _ in 0..3 {
            train_step(&mut model, &b1, &b2, &cfg, &mut st).unwrap();
        }
        assert_eq!(model, before);
    }

    #[test]
    fn without_adversary_or_cycle_the_transfer_nets_stay_put() {
        let (mut model, b1, b2) = toy();
        let cfg = TrainConfig {
            hidden: 4,
            no_cycle: true,
            no_discriminators: true,
            ..TrainConfig::default()
        };
        let before = groups(&model);
        let mut st = TrainerState::new(&cfg).unwrap();
        let mut phases = Vec::new();
        for _ in 0..3 {
            train_step_observed(&mut model, &b1, &b2, &cfg, &mut st, |p, _| phases.push(p)).unwrap();
        }
        let after = groups(&model);
        assert!(!phases.contains(&Phase::Discriminator));
        assert_ne!(after[0], before[0]);
        assert_eq!(after[1], before[1]);
        assert_eq!(after[2], before[2]);
    }

    #[test]
    fn plain_autoencoder_limit() {
        // with the adversary off and λ2 = λ3 = 0 each autoencoder trains alone
        let (mut model, b1, b2) = toy();
        let cfg = TrainConfig {
            hidden: 4,
            lambda1: 1.0,
            lambda2: 0.0,
            lambda3: 0.0,
            no_discriminators: true,
            ..TrainConfig::default()
        };
        let mut ae1 = model.ae1.clone();
        let mut ae2 = model.ae2.clone();
        let mut opt1 = Optimizer::adam(cfg.lr_autoencoder).unwrap();
        let mut opt2 = Optimizer::adam(cfg.lr_autoencoder).unwrap();
        let mut st = TrainerState::new(&cfg).unwrap();
        for _ in 0..4 {
            train_step(&mut model, &b1, &b2, &cfg, &mut st).unwrap();
            for (ae, b, opt) in [(&mut ae1, &b1, &mut opt1), (&mut ae2, &b2, &mut opt2)] {
                let mut g = Graph::new();
                let (_, loss) = style_reconstruction_graph(&mut g, ae, b).unwrap();
                g.backward(loss).unwrap();
                g.accumulate_grads(ae.params_mut());
                opt.step(ae.params_mut()).unwrap();
            }
        }
        for (a, b) in model
            .ae1
            .params()
            .iter()
            .zip(ae1.params())
            .chain(model.ae2.params().iter().zip(ae2.params()))
        {
            assert!(a.value().max_abs_diff(b.value()) < 1e-12, "{}", a.name());
        }
    }

    fn tiny_data(seed: u64) -> (TrainData, Vocabulary) {
        let l1 = crate::synthetic::generate(Style::S1, 24, seed);
        let l2 = crate::synthetic::generate(Style::S2, 24, seed);
        let vocab = Vocabulary::build(l1.iter().chain(&l2).map(|s| s.split_whitespace()), 1000).unwrap();
        let corpus =
            |style, lines: &[String]| Corpus::from_lines(style, lines.iter().map(String::as_str), &vocab, false).0;
        let data = TrainData {
            train1: corpus(Style::S1, &l1[..16]),
            train2: corpus(Style::S2, &l2[..16]),
            valid1: corpus(Style::S1, &l1[16..]),
            valid2: corpus(Style::S2, &l2[16..]),
        };
        (data, vocab)
    }

    #[test]
    fn zero_epochs_return_the_initial_model() {
        let (data, vocab) = tiny_data(1);
        let cfg = TrainConfig {
            hidden: 4,
            epochs: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&data, &vocab, &cfg).unwrap();
        let init = init_model(&cfg, vocab.len(), 5).unwrap();
        assert_eq!(out.model, init);
        assert_eq!(out.best, init);
        assert!(out.log.steps.is_empty());
        assert_eq!(out.log.epochs.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, vocab) = tiny_data(2);
        let cfg = TrainConfig {
            hidden: 4,
            epochs: 2,
            batch_size: 4,
            warmup_epochs: 1,
            ..TrainConfig::default()
        };
        let a = train(&data, &vocab, &cfg).unwrap();
        let b = train(&data, &vocab, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log.to_metrics_string(), b.log.to_metrics_string());
        let c = train(
            &data,
            &vocab,
            &TrainConfig {
                seed: cfg.seed + 1,
                ..cfg
            },
        )
        .unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn warm_start_ties_the_autoencoders() {
        let (data, vocab) = tiny_data(3);
        let cfg = TrainConfig {
            hidden: 4,
            batch_size: 8,
            warmup_epochs: 2,
            transfer_init: TransferInit::NearIdentity,
            ..TrainConfig::default()
        };
        let mut model = init_model(&cfg, vocab.len(), 0).unwrap();
        let t12 = model.t12.clone();
        let mut epochs = Vec::new();
        warm_start(&mut model, &data, &cfg, |e, r| {
            epochs.push((e, r));
            Ok(())
        })
        .unwrap();
        assert_eq!(epochs.len(), 2);
        for (a, b) in model.ae1.params().iter().zip(model.ae2.params()) {
            assert_eq!(a.value(), b.value());
            assert_eq!(a.name().replacen("ae1", "ae2", 1), b.name());
        }
        let eye = Tensor::identity(4);
        for (w0, w) in [(&t12.w1, &model.t12.w1), (&t12.w2, &model.t12.w2)] {
            let shifted: Vec<f64> = w0.value().data().iter().zip(eye.data()).map(|(a, b)| a + b).collect();
            assert_eq!(w.value().data(), shifted.as_slice());
        }
        assert!(model.t12.b1.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn metrics_lines_parse_back() {
        let b = LossBreakdown {
            recon: 1.5,
            total: 0.25,
            lambdas: (0.1, 1.0, 1.0),
            ..LossBreakdown::default()
        };
        let kv = parse_metrics_line(&step_line(3, &b)).unwrap();
        assert_eq!(kv[0], ("kind".into(), "step".into()));
        assert_eq!(kv[1], ("step".into(), "3".into()));
        assert_eq!(kv[2], ("recon".into(), "1.5".into()));
        assert!(parse_metrics_line("oops").is_err());
    }
}
