//! One-layer LSTM language model for PPL and reverse PPL.
//!
//! Every sentence is scored as `bos w1 .. wn -> w1 .. wn eos`, so the eos
//! prediction counts as a token and empty sentences still cost one token.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{BOS, EOS, PAD, UNK};
use crate::error::{CaeError, Result};
use crate::model::{uniform_param, LstmCell};
use crate::tensor::{Graph, Optimizer, Param, Tensor, Var};

/// Reverse perplexity refuses to train on fewer generated sentences.
pub const RPPL_MIN_SENTENCES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct LmConfig {
    pub embed: usize,
    pub hidden: usize,
    /// Applied to embeddings and to LSTM outputs before the projection, in training only.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training sentences are truncated to this many tokens.
    pub max_len: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            embed: 300,
            hidden: 300,
            dropout: 0.2,
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            max_len: 20,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed < 1 || self.hidden < 1 || self.batch_size < 1 || self.max_len < 1 {
            return Err(CaeError::Config(
                "LM sizes, batch_size and max_len must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CaeError::Config(format!(
                "LM dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(CaeError::Config(format!(
                "LM learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageModel {
    /// `[V x embed]`
    pub embedding: Param,
    pub cell: LstmCell,
    /// `[hidden x V]`
    pub out_w: Param,
    /// `[V]`
    pub out_b: Param,
}

/// Time-major padded view of a set of sentences.
struct Steps {
    rows: usize,
    inputs: Vec<Vec<usize>>,
    targets: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl Steps {
    fn new(sentences: &[&[usize]], vocab: usize, max_len: Option<usize>) -> Self {
        let clip = |s: &[usize]| max_len.map_or(s.len(), |m| s.len().min(m));
        let width = sentences.iter().map(|s| clip(s)).max().unwrap_or(0);
        let known = |id: usize| if id < vocab { id } else { UNK };
        let mut steps = Steps {
            rows: sentences.len(),
            inputs: Vec::with_capacity(width + 1),
            targets: Vec::with_capacity(width + 1),
            weights: Vec::with_capacity(width + 1),
        };
        for t in 0..=width {
            let (mut inp, mut tgt, mut w) = (Vec::new(), Vec::new(), Vec::new());
            for s in sentences {
                let len = clip(s);
                inp.push(match t {
                    0 => BOS,
                    t if t <= len => known(s[t - 1]),
                    _ => PAD,
                });
                let (target, weight) = match t.cmp(&len) {
                    std::cmp::Ordering::Less => (known(s[t]), 1.0),
                    std::cmp::Ordering::Equal => (EOS, 1.0),
                    std::cmp::Ordering::Greater => (PAD, 0.0),
                };
                tgt.push(target);
                w.push(weight);
            }
            steps.inputs.push(inp);
            steps.targets.push(tgt);
            steps.weights.push(w);
        }
        steps
    }

    fn tokens(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }
}

impl LanguageModel {
    pub fn new(vocab_size: usize, config: &LmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size <= EOS {
            return Err(CaeError::Config("LM vocabulary must include the special tokens".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let range = 1.0 / (config.hidden as f64).sqrt();
        Ok(Self {
            embedding: uniform_param("lm.embed", &[vocab_size, config.embed], range, &mut rng),
            cell: LstmCell::uniform("lm.lstm", config.embed, config.hidden, range, &mut rng),
            out_w: uniform_param("lm.out.w", &[config.hidden, vocab_size], range, &mut rng),
            out_b: uniform_param("lm.out.b", &[vocab_size], range, &mut rng),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.out_b.value().len()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.cell.params_mut());
        v.extend([&mut self.out_w, &mut self.out_b]);
        v
    }

    fn dropout(g: &mut Graph, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        let keep = 1.0 - rate;
        let shape = g.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let mask = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = g.constant(Tensor::new(shape, mask)?);
        g.mul(x, m)
    }

    /// Summed masked NLL over `steps`, divided by `denom`.
    fn loss_graph(
        &self,
        g: &mut Graph,
        steps: &Steps,
        denom: f64,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<Var> {
        let hs = self.cell.hidden;
        let emb = g.param(&self.embedding);
        let mut h = g.constant(Tensor::zeros(&[steps.rows, hs]));
        let mut c = g.constant(Tensor::zeros(&[steps.rows, hs]));
        let mut states = Vec::with_capacity(steps.inputs.len());
        for ids in &steps.inputs {
            let mut x = g.gather(emb, ids)?;
            if let Some((rate, rng)) = dropout.as_mut() {
                x = Self::dropout(g, x, *rate, rng)?;
            }
            (h, c) = self.cell.step(g, x, h, c)?;
            let mut out = h;
            if let Some((rate, rng)) = dropout.as_mut() {
                out = Self::dropout(g, out, *rate, rng)?;
            }
            states.push(out);
        }
        let all = g.concat_rows(&states)?;
        let w = g.param(&self.out_w);
        let b = g.param(&self.out_b);
        let logits = g.matmul(all, w)?;
        let logits = g.add(logits, b)?;
        let targets: Vec<usize> = steps.targets.concat();
        let weights: Vec<f64> = steps.weights.concat();
        g.softmax_cross_entropy_weighted(logits, &targets, &weights, denom)
    }

    /// Total NLL (nats) and token count over `sentences`, evaluated in batches.
    /// Ids outside the vocabulary are read as unk.
    pub fn nll(&self, sentences: &[Vec<usize>], batch_size: usize) -> Result<(f64, usize)> {
        let vocab = self.vocab_size();
        let (mut total, mut tokens) = (0.0, 0usize);
        for chunk in sentences.chunks(batch_size.max(1)) {
            let refs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
            let steps = Steps::new(&refs, vocab, None);
            let mut g = Graph::new();
            let loss = self.loss_graph(&mut g, &steps, 1.0, None)?;
            total += g.value(loss).item();
            tokens += steps.tokens() as usize;
        }
        Ok((total, tokens))
    }

    /// `log p(next | bos, prefix)` over the whole vocabulary, computed by
    /// running the cell one token at a time.
    pub fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let vocab = self.vocab_size();
        let hs = self.cell.hidden;
        let mut g = Graph::new();
        let emb = g.param(&self.embedding);
        let mut h = g.constant(Tensor::zeros(&[1, hs]));
        let mut c = g.constant(Tensor::zeros(&[1, hs]));
        for &id in std::iter::once(&BOS).chain(prefix) {
            let x = g.gather(emb, &[if id < vocab { id } else { UNK }])?;
            (h, c) = self.cell.step(&mut g, x, h, c)?;
        }
        let w = g.param(&self.out_w);
        let b = g.param(&self.out_b);
        let logits = g.matmul(h, w)?;
        let logits = g.add(logits, b)?;
        let row = g.value(logits).data();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(row.iter().map(|v| v - lse).collect())
    }
}

/// Trains a fresh LM with Adam on `sentences`, shuffling each epoch.
pub fn train_lm(sentences: &[Vec<usize>], vocab_size: usize, config: &LmConfig, seed: u64) -> Result<LanguageModel> {
    if sentences.is_empty() {
        return Err(CaeError::Config(
            "language model needs at least one training sentence".into(),
        ));
    }
    let mut lm = LanguageModel::new(vocab_size, config, seed)?;
    if let Some(bad) = sentences.iter().flatten().find(|&&id| id >= vocab_size) {
        return Err(CaeError::Index {
            index: *bad,
            bound: vocab_size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a2b);
    let mut opt = Optimizer::adam(config.learning_rate)?;
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&[usize]> = chunk.iter().map(|&i| sentences[i].as_slice()).collect();
            let steps = Steps::new(&refs, vocab_size, Some(config.max_len));
            let mut g = Graph::new();
            let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut rng));
            let loss = lm.loss_graph(&mut g, &steps, steps.tokens(), dropout)?;
            g.backward(loss)?;
            g.accumulate_grads(lm.params_mut());
            opt.step(lm.params_mut())?;
        }
    }
    Ok(lm)
}

/// `exp` of the mean per-token NLL, eos included.
pub fn perplexity(lm: &LanguageModel, sentences: &[Vec<usize>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(CaeError::Contract("perplexity of an empty set".into()));
    }
    let (nll, tokens) = lm.nll(sentences, 64)?;
    Ok((nll / tokens as f64).exp())
}

/// Perplexity of real `held_out` sentences under an LM trained on `generated`.
pub fn reverse_perplexity(
    generated: &[Vec<usize>],
    held_out: &[Vec<usize>],
    vocab_size: usize,
    config: &LmConfig,
    seed: u64,
) -> Result<f64> {
    if generated.len() < RPPL_MIN_SENTENCES {
        return Err(CaeError::Config(format!(
            "reverse perplexity needs at least {RPPL_MIN_SENTENCES} generated sentences, got {}",
            generated.len()
        )));
    }
    let lm = train_lm(generated, vocab_size, config, seed)?;
    perplexity(&lm, held_out)
}
