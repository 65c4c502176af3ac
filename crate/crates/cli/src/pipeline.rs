//! Shared plumbing behind the subcommands: corpus loading and splitting,
//! evaluation judges, and per-direction evaluation of a trained model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::thread;

use cae_core::data::split_corpus;
use cae_core::evaluation::{
    build_report, perplexity, reverse_perplexity, train_classifier, train_lm, ClassifierConfig, EvalReport,
    LanguageModel, LmConfig, StyleClassifier, RPPL_MIN_SENTENCES,
};
use cae_core::inference::transfer_all;
use cae_core::trainer::mix_seed;
use cae_core::{CaeError, CaeModel, Corpus, Direction, Result, Style, TrainConfig, TrainData, Vocabulary};

pub const TRAIN_FRACTION: f64 = 0.8;
pub const VALID_FRACTION: f64 = 0.1;

/// Builds the shared vocabulary and reads both corpora with it.
pub fn load_corpora(
    style1: &Path,
    style2: &Path,
    max_vocab: usize,
    lowercase: bool,
) -> Result<(Vocabulary, [Corpus; 2])> {
    let vocab = Vocabulary::from_files(&[style1, style2], max_vocab, lowercase)?;
    let (c1, _) = Corpus::read(style1, Style::S1, &vocab, lowercase)?;
    let (c2, _) = Corpus::read(style2, Style::S2, &vocab, lowercase)?;
    for c in [&c1, &c2] {
        if c.is_empty() {
            return Err(CaeError::Config(format!("style {} corpus has no sentences", c.style)));
        }
    }
    Ok((vocab, [c1, c2]))
}

/// Reads a sentence-per-line file. Blank lines become `None` so callers can
/// keep outputs line-aligned.
pub fn read_lines(path: &Path, vocab: &Vocabulary, lowercase: bool) -> Result<Vec<Option<Vec<usize>>>> {
    let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| {
            if lowercase {
                vocab.encode(&l.to_lowercase())
            } else {
                vocab.encode(l)
            }
        })
        .collect())
}

pub fn write_sentences(path: &Path, vocab: &Vocabulary, sentences: &[Vec<usize>]) -> Result<()> {
    let mut s = String::new();
    for sent in sentences {
        s.push_str(&vocab.decode(sent));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CaeError::io(path, e))
}

/// Seeded train/valid/test partition of both styles, indexed by style.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: [Corpus; 2],
    pub valid: [Corpus; 2],
    pub test: [Corpus; 2],
}

impl Splits {
    pub fn new(corpora: &[Corpus; 2], seed: u64) -> Result<Self> {
        let [t1, v1, s1] = split_corpus(&corpora[0], TRAIN_FRACTION, VALID_FRACTION, mix_seed(seed, 1, 7))?;
        let [t2, v2, s2] = split_corpus(&corpora[1], TRAIN_FRACTION, VALID_FRACTION, mix_seed(seed, 2, 7))?;
        Ok(Self {
            train: [t1, t2],
            valid: [v1, v2],
            test: [s1, s2],
        })
    }

    pub fn train_data(&self) -> TrainData {
        TrainData {
            train1: self.train[0].clone(),
            train2: self.train[1].clone(),
            valid1: self.valid[0].clone(),
            valid2: self.valid[1].clone(),
        }
    }

    /// Writes `{train,valid,test}{1,2}.txt` into `dir`.
    pub fn write(&self, dir: &Path, vocab: &Vocabulary) -> Result<()> {
        for (name, parts) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for (i, c) in parts.iter().enumerate() {
                write_sentences(&dir.join(format!("{name}{}.txt", i + 1)), vocab, &c.sentences)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub classifier: ClassifierConfig,
    pub lm: LmConfig,
    pub seed: u64,
    pub max_len: usize,
    pub batch_size: usize,
}

impl EvalSettings {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            classifier: ClassifierConfig::default(),
            lm: LmConfig::default(),
            seed: config.seed,
            max_len: config.max_len,
            batch_size: 64,
        }
    }
}

/// Models trained once on real text and shared by every evaluation.
#[derive(Clone, Debug)]
pub struct Judges {
    pub classifier: StyleClassifier,
    /// One language model per style, trained on that style's real text.
    pub lms: [LanguageModel; 2],
}

impl Judges {
    pub fn train(real: [&[Vec<usize>]; 2], vocab_size: usize, settings: &EvalSettings) -> Result<Self> {
        let (classifier, lms) = thread::scope(|s| {
            let clf = s.spawn(|| train_classifier(real[0], real[1], vocab_size, &settings.classifier, settings.seed));
            let lm1 = s.spawn(|| train_lm(real[0], vocab_size, &settings.lm, mix_seed(settings.seed, 1, 11)));
            let lm2 = train_lm(real[1], vocab_size, &settings.lm, mix_seed(settings.seed, 2, 11));
            let lm1 = lm1.join().expect("language model thread panicked");
            let clf = clf.join().expect("classifier thread panicked");
            Ok::<_, CaeError>((clf?, [lm1?, lm2?]))
        })?;
        log::info!("style classifier held-out accuracy {:.4}", classifier.held_out_accuracy);
        Ok(Self { classifier, lms })
    }

    pub fn lm(&self, style: Style) -> &LanguageModel {
        &self.lms[style.index()]
    }
}

/// Perplexity of each style's real test split under its own language model.
pub fn real_perplexities(judges: &Judges, splits: &Splits) -> Result<[f64; 2]> {
    Ok([
        perplexity(&judges.lms[0], &splits.test[0].sentences)?,
        perplexity(&judges.lms[1], &splits.test[1].sentences)?,
    ])
}

/// Sentences of `sources` transferred in `direction`, without their `EOS`.
pub fn transfer_sentences(
    model: &CaeModel,
    sources: &[Vec<usize>],
    direction: Direction,
    settings: &EvalSettings,
) -> Result<Vec<Vec<usize>>> {
    Ok(
        transfer_all(model, sources, direction, settings.max_len, settings.batch_size)?
            .iter()
            .map(|r| r.content().to_vec())
            .collect(),
    )
}

/// RPPL of `held_out` under an LM trained on `generated`; `None` with a
/// warning when there are too few generated sentences.
pub fn optional_rppl(
    generated: &[Vec<usize>],
    held_out: &[Vec<usize>],
    vocab_size: usize,
    settings: &EvalSettings,
    seed: u64,
) -> Result<Option<f64>> {
    if generated.len() < RPPL_MIN_SENTENCES {
        log::warn!(
            "skipping RPPL: {} generated sentences, at least {RPPL_MIN_SENTENCES} needed",
            generated.len()
        );
        return Ok(None);
    }
    if held_out.is_empty() {
        log::warn!("skipping RPPL: no held-out sentences");
        return Ok(None);
    }
    reverse_perplexity(generated, held_out, vocab_size, &settings.lm, seed).map(Some)
}

/// Evaluates one direction: the test split of the source style is transferred
/// and scored; RPPL comes from an LM trained on transfers of the (larger)
/// training split and is measured on the target style's real test split.
pub fn evaluate_direction(
    model: &CaeModel,
    vocab: &Vocabulary,
    judges: &Judges,
    splits: &Splits,
    direction: Direction,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    let (src, tgt) = (direction.source().index(), direction.target().index());
    let sources = &splits.test[src].sentences;
    let outputs = transfer_sentences(model, sources, direction, settings)?;
    let generated = transfer_sentences(model, &splits.train[src].sentences, direction, settings)?;
    let seed = mix_seed(settings.seed, src as u64 + 1, 13);
    let rppl = optional_rppl(&generated, &splits.test[tgt].sentences, vocab.len(), settings, seed)?;
    build_report(
        vocab,
        &judges.classifier,
        judges.lm(direction.target()),
        sources,
        &outputs,
        direction.target(),
        rppl,
    )
}

/// Both directions, evaluated concurrently.
pub fn evaluate_both(
    model: &CaeModel,
    vocab: &Vocabulary,
    judges: &Judges,
    splits: &Splits,
    settings: &EvalSettings,
) -> Result<[EvalReport; 2]> {
    thread::scope(|s| {
        let a = s.spawn(|| evaluate_direction(model, vocab, judges, splits, Direction::OneToTwo, settings));
        let b = evaluate_direction(model, vocab, judges, splits, Direction::TwoToOne, settings)?;
        Ok([a.join().expect("evaluation thread panicked")?, b])
    })
}

/// One row of an ablation table: metrics averaged over both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantSummary {
    pub name: String,
    pub transfer: f64,
    pub bleu: f64,
    pub ppl: f64,
    pub rppl: Option<f64>,
    pub top_trigram_share: f64,
}

impl VariantSummary {
    pub fn from_reports(name: &str, reports: &[EvalReport; 2]) -> Self {
        let mean = |f: fn(&EvalReport) -> f64| (f(&reports[0]) + f(&reports[1])) / 2.0;
        Self {
            name: name.to_string(),
            transfer: mean(|r| r.transfer_rate),
            bleu: mean(|r| r.bleu),
            ppl: mean(|r| r.ppl),
            rppl: match (reports[0].rppl, reports[1].rppl) {
                (Some(a), Some(b)) => Some((a + b) / 2.0),
                _ => None,
            },
            top_trigram_share: mean(|r| r.top_trigram_share),
        }
    }
}

pub const TABLE_HEADER: &str = "variant\ttransfer\tbleu\tppl\trppl\ttop_trigram_share";

pub fn summary_table(rows: &[VariantSummary]) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    for r in rows {
        let rppl = r.rppl.map_or_else(|| "none".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            s,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{rppl}\t{:.4}",
            r.name, r.transfer, r.bleu, r.ppl, r.top_trigram_share
        );
    }
    s
}

/// The full model and the two ablations, each derived from `base`.
pub fn ablation_variants(base: &TrainConfig) -> [(&'static str, TrainConfig); 3] {
    [
        (
            "full",
            TrainConfig {
                no_cycle: false,
                no_discriminators: false,
                ..base.clone()
            },
        ),
        (
            "no_cycle",
            TrainConfig {
                no_cycle: true,
                no_discriminators: false,
                ..base.clone()
            },
        ),
        (
            "no_discriminators",
            TrainConfig {
                no_cycle: false,
                no_discriminators: true,
                ..base.clone()
            },
        ),
    ]
}
