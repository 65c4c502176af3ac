//! The CAE parameter bundle and its forward computations.
//!
//! Layout conventions: weight matrices are stored input-major (`[in x out]`)
//! so a batch of row vectors is multiplied on the left. LSTM gates are packed
//! in the order input, forget, cell, output along the `4h` axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::data::{Batch, Style};
use crate::error::{CaeError, Result};
use crate::tensor::{Graph, Param, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    OneToTwo,
    TwoToOne,
}

impl Direction {
    pub fn source(self) -> Style {
        match self {
            Direction::OneToTwo => Style::S1,
            Direction::TwoToOne => Style::S2,
        }
    }

    pub fn target(self) -> Style {
        self.source().other()
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::OneToTwo => Direction::TwoToOne,
            Direction::TwoToOne => Direction::OneToTwo,
        }
    }

    pub fn from_source(style: Style) -> Direction {
        match style {
            Style::S1 => Direction::OneToTwo,
            Style::S2 => Direction::TwoToOne,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = CaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1to2" | "1->2" => Ok(Direction::OneToTwo),
            "2to1" | "2->1" => Ok(Direction::TwoToOne),
            _ => Err(CaeError::Config(format!("unknown direction {s:?} (use 1to2 or 2to1)"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::OneToTwo => "1to2",
            Direction::TwoToOne => "2to1",
        })
    }
}

struct Init<'a> {
    rng: &'a mut ChaCha8Rng,
    range: f64,
}

impl Init<'_> {
    fn param(&mut self, name: String, shape: &[usize]) -> Param {
        uniform_param(name, shape, self.range, self.rng)
    }
}

/// Parameter with entries drawn uniformly from `[-range, range]`.
pub fn uniform_param(name: impl Into<String>, shape: &[usize], range: f64, rng: &mut impl Rng) -> Param {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-range..=range)).collect();
    Param::new(name, Tensor::new(shape.to_vec(), data).expect("shape matches"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    /// `[input x 4h]`
    pub w: Param,
    /// `[h x 4h]`
    pub u: Param,
    /// `[4h]`
    pub b: Param,
    pub hidden: usize,
}

impl LstmCell {
    fn init(prefix: &str, input: usize, hidden: usize, init: &mut Init) -> Self {
        Self {
            w: init.param(format!("{prefix}.w"), &[input, 4 * hidden]),
            u: init.param(format!("{prefix}.u"), &[hidden, 4 * hidden]),
            b: init.param(format!("{prefix}.b"), &[4 * hidden]),
            hidden,
        }
    }

    /// Cell with uniform `[-range, range]` weights; parameters are named `{prefix}.w|u|b`.
    pub fn uniform(prefix: &str, input: usize, hidden: usize, range: f64, rng: &mut ChaCha8Rng) -> Self {
        Self::init(prefix, input, hidden, &mut Init { rng, range })
    }

    /// One step `(x, h, c) -> (h', c')`.
    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let (w, u, b) = (g.param(&self.w), g.param(&self.u), g.param(&self.b));
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let pre = g.add(xw, hu)?;
        let gates = g.add(pre, b)?;
        let hs = self.hidden;
        let i = g.slice_cols(gates, 0, hs)?;
        let f = g.slice_cols(gates, hs, hs)?;
        let cand = g.slice_cols(gates, 2 * hs, hs)?;
        let o = g.slice_cols(gates, 3 * hs, hs)?;
        let (i, f, cand, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(cand), g.sigmoid(o));
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    pub fn params(&self) -> [&Param; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Per-style LSTM autoencoder. Encoder and decoder share the embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleAutoencoder {
    pub style: Style,
    /// `[V x h]`
    pub embedding: Param,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    /// `[h x V]`
    pub out_w: Param,
    /// `[V]`
    pub out_b: Param,
}

impl StyleAutoencoder {
    fn init(prefix: &str, style: Style, hidden: usize, vocab: usize, init: &mut Init) -> Self {
        Self {
            style,
            embedding: init.param(format!("{prefix}.embed"), &[vocab, hidden]),
            encoder: LstmCell::init(&format!("{prefix}.enc"), hidden, hidden, init),
            decoder: LstmCell::init(&format!("{prefix}.dec"), hidden, hidden, init),
            out_w: init.param(format!("{prefix}.out.w"), &[hidden, vocab]),
            out_b: init.param(format!("{prefix}.out.b"), &[vocab]),
        }
    }

    /// A copy with the same weights under another style and name prefix.
    pub fn renamed(&self, prefix: &str, style: Style) -> Self {
        let cell = |c: &LstmCell, part: &str| LstmCell {
            w: c.w.renamed(format!("{prefix}.{part}.w")),
            u: c.u.renamed(format!("{prefix}.{part}.u")),
            b: c.b.renamed(format!("{prefix}.{part}.b")),
            hidden: c.hidden,
        };
        Self {
            style,
            embedding: self.embedding.renamed(format!("{prefix}.embed")),
            encoder: cell(&self.encoder, "enc"),
            decoder: cell(&self.decoder, "dec"),
            out_w: self.out_w.renamed(format!("{prefix}.out.w")),
            out_b: self.out_b.renamed(format!("{prefix}.out.b")),
        }
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden
    }

    pub fn vocab_size(&self) -> usize {
        self.out_b.value().len()
    }

    /// Unit-norm latent codes `[B x h]`: the encoder state at each row's true length.
    pub fn encode_graph(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        if batch.lengths.contains(&0) {
            return Err(CaeError::Contract("cannot encode an empty sentence".into()));
        }
        let (bsz, hs) = (batch.size(), self.hidden());
        let emb = g.param(&self.embedding);
        let mut h = g.constant(Tensor::zeros(&[bsz, hs]));
        let mut c = g.constant(Tensor::zeros(&[bsz, hs]));
        let min_len = batch.lengths.iter().copied().min().unwrap_or(0);
        for t in 0..batch.width {
            let x = g.gather(emb, &batch.column(t))?;
            let (h_new, c_new) = self.encoder.step(g, x, h, c)?;
            if t < min_len {
                h = h_new;
                c = c_new;
            } else {
                // rows whose sentence has ended keep their previous state
                let mut mask = Tensor::zeros(&[bsz, hs]);
                for (r, &len) in batch.lengths.iter().enumerate() {
                    if t < len {
                        mask.data_mut()[r * hs..(r + 1) * hs].fill(1.0);
                    }
                }
                let m = g.constant(mask);
                h = blend(g, m, h_new, h)?;
                c = blend(g, m, c_new, c)?;
            }
        }
        g.l2_normalize_rows(h)
    }

    /// Teacher-forced decoder logits, time-major: row `t * B + r` holds step
    /// `t` of batch row `r`. There are `batch.decoder_steps()` steps.
    pub fn decode_graph(&self, g: &mut Graph, z: Var, batch: &Batch) -> Result<Var> {
        let (bsz, hs) = (batch.size(), self.hidden());
        if g.shape(z) != [bsz, hs] {
            return Err(CaeError::dim("decode", g.shape(z), &[bsz, hs]));
        }
        let emb = g.param(&self.embedding);
        let mut h = z;
        let mut c = g.constant(Tensor::zeros(&[bsz, hs]));
        let mut states = Vec::with_capacity(batch.decoder_steps());
        for t in 0..batch.decoder_steps() {
            let x = g.gather(emb, &batch.decoder_inputs(t))?;
            (h, c) = self.decoder.step(g, x, h, c)?;
            states.push(h);
        }
        let all = g.concat_rows(&states)?;
        self.project(g, all)
    }

    /// Output projection from decoder states to vocabulary logits.
    pub fn project(&self, g: &mut Graph, states: Var) -> Result<Var> {
        let w = g.param(&self.out_w);
        let b = g.param(&self.out_b);
        let logits = g.matmul(states, w)?;
        g.add(logits, b)
    }

    /// One decoder step on token ids, used for free-running generation.
    pub fn decoder_step(&self, g: &mut Graph, ids: &[usize], h: Var, c: Var) -> Result<(Var, Var, Var)> {
        let emb = g.param(&self.embedding);
        let x = g.gather(emb, ids)?;
        let (h, c) = self.decoder.step(g, x, h, c)?;
        let logits = self.project(g, h)?;
        Ok((logits, h, c))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.embedding];
        v.extend(self.encoder.params());
        v.extend(self.decoder.params());
        v.extend([&self.out_w, &self.out_b]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.encoder.params_mut());
        v.extend(self.decoder.params_mut());
        v.extend([&mut self.out_w, &mut self.out_b]);
        v
    }
}

/// `mask * new + (1 - mask) * old`
fn blend(g: &mut Graph, mask: Var, new: Var, old: Var) -> Result<Var> {
    let diff = g.sub(new, old)?;
    let gated = g.mul(mask, diff)?;
    g.add(old, gated)
}

/// Two-layer map between latent spaces: tanh hidden layer, linear output,
/// then L2 normalization. With `identity` set the net passes latents through
/// untouched, which is the plain-autoencoder baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferNet {
    pub identity: bool,
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

impl TransferNet {
    fn init(prefix: &str, hidden: usize, init: &mut Init) -> Self {
        Self {
            identity: false,
            w1: init.param(format!("{prefix}.l1.w"), &[hidden, hidden]),
            b1: init.param(format!("{prefix}.l1.b"), &[hidden]),
            w2: init.param(format!("{prefix}.l2.w"), &[hidden, hidden]),
            b2: init.param(format!("{prefix}.l2.b"), &[hidden]),
        }
    }

    /// Adds the identity to both weight matrices and zeroes the biases, so
    /// that the map starts close to `normalize(tanh(z)) ≈ z` for unit `z`.
    pub fn shift_to_near_identity(&mut self) {
        for w in [&mut self.w1, &mut self.w2] {
            let n = w.value().cols();
            let d = w.value_mut().data_mut();
            for i in 0..n {
                d[i * n + i] += 1.0;
            }
        }
        self.b1.value_mut().data_mut().fill(0.0);
        self.b2.value_mut().data_mut().fill(0.0);
    }

    pub fn forward(&self, g: &mut Graph, z: Var) -> Result<Var> {
        if self.identity {
            return Ok(z);
        }
        let (w1, b1, w2, b2) = (
            g.param(&self.w1),
            g.param(&self.b1),
            g.param(&self.w2),
            g.param(&self.b2),
        );
        let a = g.matmul(z, w1)?;
        let a = g.add(a, b1)?;
        let a = g.tanh(a);
        let y = g.matmul(a, w2)?;
        let y = g.add(y, b2)?;
        g.l2_normalize_rows(y)
    }

    pub fn params(&self) -> [&Param; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Two-layer latent classifier: tanh hidden layer, sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

impl Discriminator {
    fn init(prefix: &str, hidden: usize, init: &mut Init) -> Self {
        Self {
            w1: init.param(format!("{prefix}.l1.w"), &[hidden, hidden]),
            b1: init.param(format!("{prefix}.l1.b"), &[hidden]),
            w2: init.param(format!("{prefix}.l2.w"), &[hidden, 1]),
            b2: init.param(format!("{prefix}.l2.b"), &[1]),
        }
    }

    /// Probabilities `[B x 1]` that each row is a real latent of this style.
    pub fn forward(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let (w1, b1, w2, b2) = (
            g.param(&self.w1),
            g.param(&self.b1),
            g.param(&self.w2),
            g.param(&self.b2),
        );
        let a = g.matmul(z, w1)?;
        let a = g.add(a, b1)?;
        let a = g.tanh(a);
        let y = g.matmul(a, w2)?;
        let y = g.add(y, b2)?;
        Ok(g.sigmoid(y))
    }

    pub fn params(&self) -> [&Param; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaeModel {
    pub hidden: usize,
    pub vocab_size: usize,
    pub ae1: StyleAutoencoder,
    pub ae2: StyleAutoencoder,
    pub t12: TransferNet,
    pub t21: TransferNet,
    pub d1: Discriminator,
    pub d2: Discriminator,
}

/// Uniform initialization in `[-1/sqrt(h), 1/sqrt(h)]`, deterministic per seed.
pub fn init_model(config: &TrainConfig, vocab_size: usize, seed: u64) -> Result<CaeModel> {
    let hidden = config.hidden;
    if hidden < 2 {
        return Err(CaeError::Config(format!("hidden must be >= 2, got {hidden}")));
    }
    if vocab_size < 1 {
        return Err(CaeError::Config("vocabulary is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = Init {
        rng: &mut rng,
        range: 1.0 / (hidden as f64).sqrt(),
    };
    Ok(CaeModel {
        hidden,
        vocab_size,
        ae1: StyleAutoencoder::init("ae1", Style::S1, hidden, vocab_size, &mut init),
        ae2: StyleAutoencoder::init("ae2", Style::S2, hidden, vocab_size, &mut init),
        t12: TransferNet::init("t12", hidden, &mut init),
        t21: TransferNet::init("t21", hidden, &mut init),
        d1: Discriminator::init("d1", hidden, &mut init),
        d2: Discriminator::init("d2", hidden, &mut init),
    })
}

impl CaeModel {
    pub fn autoencoder(&self, style: Style) -> &StyleAutoencoder {
        match style {
            Style::S1 => &self.ae1,
            Style::S2 => &self.ae2,
        }
    }

    pub fn transfer_net(&self, direction: Direction) -> &TransferNet {
        match direction {
            Direction::OneToTwo => &self.t12,
            Direction::TwoToOne => &self.t21,
        }
    }

    /// The discriminator that judges latents of `style`.
    pub fn discriminator(&self, style: Style) -> &Discriminator {
        match style {
            Style::S1 => &self.d1,
            Style::S2 => &self.d2,
        }
    }

    /// `direction` then its reverse: a latent of `direction.source()` mapped
    /// back into its own space.
    pub fn cycle_graph(&self, g: &mut Graph, z: Var, direction: Direction) -> Result<Var> {
        let there = self.transfer_net(direction).forward(g, z)?;
        self.transfer_net(direction.reverse()).forward(g, there)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.ae1.params();
        v.extend(self.ae2.params());
        v.extend(self.t12.params());
        v.extend(self.t21.params());
        v.extend(self.d1.params());
        v.extend(self.d2.params());
        v
    }

    pub fn autoencoder_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.ae1.params_mut();
        v.extend(self.ae2.params_mut());
        v
    }

    pub fn transfer_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.t12.params_mut().into();
        v.extend(self.t21.params_mut());
        v
    }

    pub fn discriminator_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.d1.params_mut().into();
        v.extend(self.d2.params_mut());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.ae1.params_mut();
        v.extend(self.ae2.params_mut());
        v.extend(self.t12.params_mut());
        v.extend(self.t21.params_mut());
        v.extend(self.d1.params_mut());
        v.extend(self.d2.params_mut());
        v
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params().into_iter().find(|p| p.name() == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params_mut().into_iter().find(|p| p.name() == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value().len()).sum()
    }
}

/// Unit-norm latents for a batch.
pub fn encode(ae: &StyleAutoencoder, batch: &Batch) -> Result<Tensor> {
    if batch.style != ae.style {
        return Err(CaeError::Contract(format!(
            "batch of style {} given to the {} autoencoder",
            batch.style, ae.style
        )));
    }
    let mut g = Graph::new();
    let z = ae.encode_graph(&mut g, batch)?;
    Ok(g.value(z).clone())
}

/// Teacher-forced logits shaped `[B x steps x V]`.
pub fn decode_teacher_forced(ae: &StyleAutoencoder, z: &Tensor, batch: &Batch) -> Result<Tensor> {
    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let logits = ae.decode_graph(&mut g, zv, batch)?;
    let (bsz, steps, vocab) = (batch.size(), batch.decoder_steps(), ae.vocab_size());
    let time_major = g.value(logits).data();
    let mut out = vec![0.0; bsz * steps * vocab];
    for t in 0..steps {
        for r in 0..bsz {
            let src = &time_major[(t * bsz + r) * vocab..(t * bsz + r + 1) * vocab];
            out[(r * steps + t) * vocab..(r * steps + t + 1) * vocab].copy_from_slice(src);
        }
    }
    Tensor::new(vec![bsz, steps, vocab], out)
}

pub fn transfer(net: &TransferNet, z: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let y = net.forward(&mut g, zv)?;
    Ok(g.value(y).clone())
}

pub fn cycle_map(model: &CaeModel, z: &Tensor, direction: Direction) -> Result<Tensor> {
    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let y = model.cycle_graph(&mut g, zv, direction)?;
    Ok(g.value(y).clone())
}

/// Per-row probabilities `[B]`.
pub fn discriminate(d: &Discriminator, z: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let p = d.forward(&mut g, zv)?;
    let probs = g.value(p).data().to_vec();
    let n = probs.len();
    Tensor::new(vec![n], probs)
}
