//! One evaluation run: corpus-level metrics plus a per-sentence table.
//!
//! Text layout: `key=value` lines, a blank line, a tab-separated header, then
//! one row per sentence (`source`, `output`, `score`, `sentence_bleu`).

use std::collections::HashMap;
use std::fmt::Write as _;

use super::bleu::{corpus_bleu, sentence_bleu};
use super::classifier::{transfer_rate, StyleClassifier};
use super::lm::{perplexity, LanguageModel};
use crate::data::{Style, Vocabulary};
use crate::error::{CaeError, Result};

const TABLE_HEADER: &str = "source\toutput\tscore\tsentence_bleu";

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceRecord {
    pub source: String,
    pub output: String,
    /// Classifier probability of style 2.
    pub score: f64,
    pub sentence_bleu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub target: Style,
    pub transfer_rate: f64,
    /// Held-out accuracy of the classifier behind `transfer_rate`.
    pub classifier_accuracy: f64,
    /// Corpus BLEU of outputs against their sources.
    pub bleu: f64,
    /// Mean smoothed sentence BLEU.
    pub sentence_bleu: f64,
    pub ppl: f64,
    /// Absent when there were too few outputs to train an LM on.
    pub rppl: Option<f64>,
    /// Fraction of outputs containing the most common output trigram.
    pub top_trigram_share: f64,
    pub records: Vec<SentenceRecord>,
}

/// Share of `outputs` that contain the single most frequent trigram, where
/// each output counts a trigram at most once. Outputs shorter than three
/// tokens contain none.
pub fn top_trigram_share(outputs: &[Vec<usize>]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&[usize], usize> = HashMap::new();
    for o in outputs {
        let mut seen: Vec<&[usize]> = o.windows(3).collect();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts.values().copied().max().unwrap_or(0) as f64 / outputs.len() as f64
}

/// Computes every metric except RPPL, which the caller trains separately.
/// `lm` is a language model trained on real text of the target style.
pub fn build_report(
    vocab: &Vocabulary,
    classifier: &StyleClassifier,
    lm: &LanguageModel,
    sources: &[Vec<usize>],
    outputs: &[Vec<usize>],
    target: Style,
    rppl: Option<f64>,
) -> Result<EvalReport> {
    if sources.len() != outputs.len() {
        return Err(CaeError::Contract(format!(
            "{} sources but {} outputs",
            sources.len(),
            outputs.len()
        )));
    }
    if outputs.is_empty() {
        return Err(CaeError::Contract("nothing to evaluate".into()));
    }
    let refs: Vec<&[usize]> = outputs.iter().map(Vec::as_slice).collect();
    let scores = classifier.scores(&refs)?;
    let records: Vec<SentenceRecord> = sources
        .iter()
        .zip(outputs)
        .zip(&scores)
        .map(|((s, o), &score)| SentenceRecord {
            source: vocab.decode(s),
            output: vocab.decode(o),
            score,
            sentence_bleu: sentence_bleu(o, s),
        })
        .collect();
    let sentence_mean = records.iter().map(|r| r.sentence_bleu).sum::<f64>() / records.len() as f64;
    let report = EvalReport {
        target,
        transfer_rate: transfer_rate(classifier, outputs, target)?,
        classifier_accuracy: classifier.held_out_accuracy,
        bleu: corpus_bleu(outputs.iter().zip(sources)),
        sentence_bleu: sentence_mean,
        ppl: perplexity(lm, outputs)?,
        rppl,
        top_trigram_share: top_trigram_share(outputs),
        records,
    };
    report.check()?;
    Ok(report)
}

impl EvalReport {
    fn check(&self) -> Result<()> {
        let finite = [
            self.transfer_rate,
            self.bleu,
            self.sentence_bleu,
            self.ppl,
            self.top_trigram_share,
        ]
        .iter()
        .chain(self.rppl.as_ref())
        .all(|v| v.is_finite());
        if !finite || !(0.0..=1.0).contains(&self.transfer_rate) {
            return Err(CaeError::Contract(format!("report has out-of-range metrics: {self:?}")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "target={}", self.target.index() + 1);
        let _ = writeln!(s, "sentences={}", self.records.len());
        let _ = writeln!(s, "transfer_rate={:?}", self.transfer_rate);
        let _ = writeln!(s, "classifier_accuracy={:?}", self.classifier_accuracy);
        let _ = writeln!(s, "bleu={:?}", self.bleu);
        let _ = writeln!(s, "sentence_bleu={:?}", self.sentence_bleu);
        let _ = writeln!(s, "ppl={:?}", self.ppl);
        match self.rppl {
            Some(v) => {
                let _ = writeln!(s, "rppl={v:?}");
            }
            None => s.push_str("rppl=none\n"),
        }
        let _ = writeln!(s, "top_trigram_share={:?}", self.top_trigram_share);
        s.push('\n');
        s.push_str(TABLE_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}\t{}\t{:?}\t{:?}", r.source, r.output, r.score, r.sentence_bleu);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |detail: String| CaeError::Parse { what: "report", detail };
        let (head, table) = text
            .split_once("\n\n")
            .ok_or_else(|| bad("missing blank line before the table".into()))?;
        let mut kv = HashMap::new();
        for line in head.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad line {line:?}")))?;
            kv.insert(k, v);
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("missing key {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("bad value for {k}"))) };
        let target = match get("target")? {
            "1" => Style::S1,
            "2" => Style::S2,
            other => return Err(bad(format!("bad target {other:?}"))),
        };
        let rppl = match get("rppl")? {
            "none" => None,
            _ => Some(num("rppl")?),
        };
        let mut lines = table.lines();
        if lines.next() != Some(TABLE_HEADER) {
            return Err(bad("missing table header".into()));
        }
        let records = lines
            .map(|line| {
                let f: Vec<&str> = line.split('\t').collect();
                let [source, output, score, sb] = f.as_slice() else {
                    return Err(bad(format!("bad row {line:?}")));
                };
                let parse = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number in row {line:?}")));
                Ok(SentenceRecord {
                    source: source.to_string(),
                    output: output.to_string(),
                    score: parse(score)?,
                    sentence_bleu: parse(sb)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sentences: usize = get("sentences")?
            .parse()
            .map_err(|_| bad("bad sentence count".into()))?;
        if sentences != records.len() {
            return Err(bad(format!(
                "header says {sentences} sentences, table has {}",
                records.len()
            )));
        }
        Ok(Self {
            target,
            transfer_rate: num("transfer_rate")?,
            classifier_accuracy: num("classifier_accuracy")?,
            bleu: num("bleu")?,
            sentence_bleu: num("sentence_bleu")?,
            ppl: num("ppl")?,
            rppl,
            top_trigram_share: num("top_trigram_share")?,
            records,
        })
    }
}
