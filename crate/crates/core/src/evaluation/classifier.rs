//! Bag-of-words style classifier used for the Transfer metric: token
//! embeddings are averaged per sentence and fed to a logistic unit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Style, UNK};
use crate::error::{CaeError, Result};
use crate::model::uniform_param;
use crate::tensor::{Graph, Optimizer, Param, Tensor, Var};

const PROB_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a held-out accuracy gain before training stops.
    pub patience: usize,
    pub held_out_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            learning_rate: 0.05,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            held_out_fraction: 0.1,
        }
    }
}

/// `P(style 2 | sentence) = sigmoid(mean_embedding · w + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleClassifier {
    /// `[V x dim]`
    pub embedding: Param,
    /// `[dim x 1]`
    pub weight: Param,
    /// `[1]`
    pub bias: Param,
    /// Accuracy on the held-out split at the selected epoch.
    pub held_out_accuracy: f64,
    pub epochs_trained: usize,
}

impl StyleClassifier {
    pub fn vocab_size(&self) -> usize {
        self.embedding.value().rows()
    }

    /// Probabilities `[B x 1]`. Empty sentences average to the zero vector.
    fn forward(&self, g: &mut Graph, sentences: &[&[usize]]) -> Result<Var> {
        let vocab = self.vocab_size();
        let total: usize = sentences.iter().map(|s| s.len()).sum();
        let mut avg = Tensor::zeros(&[sentences.len(), total.max(1)]);
        let mut ids = Vec::with_capacity(total.max(1));
        for (r, s) in sentences.iter().enumerate() {
            for &id in s.iter() {
                avg.data_mut()[r * total + ids.len()] = 1.0 / s.len() as f64;
                ids.push(if id < vocab { id } else { UNK });
            }
        }
        if ids.is_empty() {
            ids.push(UNK);
        }
        let emb = g.param(&self.embedding);
        let rows = g.gather(emb, &ids)?;
        let a = g.constant(avg);
        let mean = g.matmul(a, rows)?;
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        let logit = g.matmul(mean, w)?;
        let logit = g.add(logit, b)?;
        Ok(g.sigmoid(logit))
    }

    /// Probability of style 2 for each sentence.
    pub fn scores(&self, sentences: &[&[usize]]) -> Result<Vec<f64>> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let p = self.forward(&mut g, sentences)?;
        Ok(g.value(p).data().to_vec())
    }

    pub fn score(&self, sentence: &[usize]) -> Result<f64> {
        Ok(self.scores(&[sentence])?[0])
    }

    pub fn predict(&self, sentence: &[usize]) -> Result<Style> {
        Ok(label(self.score(sentence)?))
    }

    fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.embedding, &mut self.weight, &mut self.bias]
    }
}

fn label(score: f64) -> Style {
    if score >= 0.5 {
        Style::S2
    } else {
        Style::S1
    }
}

/// `-mean(y log p + (1 - y) log(1 - p))`
fn bce(g: &mut Graph, p: Var, labels: &[f64]) -> Result<Var> {
    let n = labels.len();
    let y = g.constant(Tensor::new(vec![n, 1], labels.to_vec())?);
    let not_y = g.constant(Tensor::new(vec![n, 1], labels.iter().map(|v| 1.0 - v).collect())?);
    let pc = g.clamp(p, PROB_FLOOR, 1.0 - PROB_FLOOR);
    let log_p = g.log(pc)?;
    let q = g.affine(pc, -1.0, 1.0);
    let log_q = g.log(q)?;
    let a = g.mul(y, log_p)?;
    let b = g.mul(not_y, log_q)?;
    let sum = g.add(a, b)?;
    let mean = g.mean(sum);
    Ok(g.neg(mean))
}

fn accuracy_on(clf: &StyleClassifier, examples: &[(&[usize], Style)]) -> Result<f64> {
    let sentences: Vec<&[usize]> = examples.iter().map(|e| e.0).collect();
    let scores = clf.scores(&sentences)?;
    let hits = scores.iter().zip(examples).filter(|(s, e)| label(**s) == e.1).count();
    Ok(hits as f64 / examples.len() as f64)
}

/// Trains on the two labeled corpora. A seeded shuffle reserves
/// `held_out_fraction` of the examples; training stops once held-out accuracy
/// has not improved for `patience` epochs and the best epoch's weights are kept.
pub fn train_classifier(
    style1: &[Vec<usize>],
    style2: &[Vec<usize>],
    vocab_size: usize,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<StyleClassifier> {
    if style1.is_empty() || style2.is_empty() {
        return Err(CaeError::Config("classifier needs sentences of both styles".into()));
    }
    if config.dim < 1 || config.batch_size < 1 || vocab_size < 1 {
        return Err(CaeError::Config(
            "classifier dim, batch_size and vocabulary must be non-empty".into(),
        ));
    }
    if !(config.held_out_fraction > 0.0 && config.held_out_fraction < 1.0) {
        return Err(CaeError::Config(format!(
            "held_out_fraction must be in (0, 1), got {}",
            config.held_out_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = 1.0 / (config.dim as f64).sqrt();
    let mut clf = StyleClassifier {
        embedding: uniform_param("clf.embed", &[vocab_size, config.dim], range, &mut rng),
        weight: uniform_param("clf.w", &[config.dim, 1], range, &mut rng),
        bias: Param::new("clf.b", Tensor::zeros(&[1])),
        held_out_accuracy: 0.0,
        epochs_trained: 0,
    };

    let mut examples: Vec<(&[usize], Style)> = style1
        .iter()
        .map(|s| (s.as_slice(), Style::S1))
        .chain(style2.iter().map(|s| (s.as_slice(), Style::S2)))
        .collect();
    examples.shuffle(&mut rng);
    let held = ((examples.len() as f64 * config.held_out_fraction).ceil() as usize).clamp(1, examples.len() - 1);
    let (held_out, train) = examples.split_at(held);
    let mut train = train.to_vec();

    let mut opt = Optimizer::adam(config.learning_rate)?;
    let mut best = (accuracy_on(&clf, held_out)?, clf.clone());
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(config.batch_size) {
            let sentences: Vec<&[usize]> = chunk.iter().map(|e| e.0).collect();
            let labels: Vec<f64> = chunk.iter().map(|e| e.1.index() as f64).collect();
            let mut g = Graph::new();
            let p = clf.forward(&mut g, &sentences)?;
            let loss = bce(&mut g, p, &labels)?;
            g.backward(loss)?;
            g.accumulate_grads(clf.params_mut());
            opt.step(clf.params_mut())?;
        }
        clf.epochs_trained = epoch;
        let acc = accuracy_on(&clf, held_out)?;
        if acc > best.0 {
            best = (acc, clf.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (acc, mut chosen) = best;
    chosen.held_out_accuracy = acc;
    Ok(chosen)
}

/// Fraction of `sentences` the classifier assigns to `target`.
pub fn transfer_rate(classifier: &StyleClassifier, sentences: &[Vec<usize>], target: Style) -> Result<f64> {
    if sentences.is_empty() {
        return Err(CaeError::Contract("transfer rate of an empty set".into()));
    }
    let refs: Vec<&[usize]> = sentences.iter().map(Vec::as_slice).collect();
    let hits = classifier
        .scores(&refs)?
        .into_iter()
        .filter(|&s| label(s) == target)
        .count();
    Ok(hits as f64 / sentences.len() as f64)
}
