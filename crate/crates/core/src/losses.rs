//! Reconstruction, adversarial and latent cycle-consistency objectives.
//!
//! Callers decide where gradients stop: latents handed to the adversarial and
//! cycle terms are expected to be detached from the encoders.

use std::fmt;

use crate::data::Batch;
use crate::error::{CaeError, Result};
use crate::model::{CaeModel, Direction, Discriminator, StyleAutoencoder};
use crate::tensor::{Graph, Tensor, Var};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before `log`.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub recon: f64,
    pub gen_adv_12: f64,
    pub gen_adv_21: f64,
    pub disc_1: f64,
    pub disc_2: f64,
    pub cycle: f64,
    /// Objective of the minimizing players; discriminator terms excluded.
    pub total: f64,
    pub lambdas: (f64, f64, f64),
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.recon,
            self.gen_adv_12,
            self.gen_adv_21,
            self.disc_1,
            self.disc_2,
            self.cycle,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "recon={:?} gen_adv_12={:?} gen_adv_21={:?} disc_1={:?} disc_2={:?} cycle={:?} total={:?} lambda1={:?} lambda2={:?} lambda3={:?}",
            self.recon,
            self.gen_adv_12,
            self.gen_adv_21,
            self.disc_1,
            self.disc_2,
            self.cycle,
            self.total,
            self.lambdas.0,
            self.lambdas.1,
            self.lambdas.2
        )
    }
}

/// Raw sub-objective values before weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub recon: f64,
    pub gen_adv_12: f64,
    pub gen_adv_21: f64,
    pub disc_1: f64,
    pub disc_2: f64,
    pub cycle: f64,
}

/// Masked per-token NLL of one style's teacher-forced reconstruction.
/// Returns `(latent, loss)`; the latent stays attached to the encoder.
pub fn style_reconstruction_graph(g: &mut Graph, ae: &StyleAutoencoder, batch: &Batch) -> Result<(Var, Var)> {
    if batch.style != ae.style {
        return Err(CaeError::Contract(format!(
            "batch of style {} given to the {} autoencoder",
            batch.style, ae.style
        )));
    }
    let z = ae.encode_graph(g, batch)?;
    let logits = ae.decode_graph(g, z, batch)?;
    let (targets, weights) = masked_targets(batch);
    let denom: f64 = weights.iter().sum();
    let loss = g.softmax_cross_entropy_weighted(logits, &targets, &weights, denom)?;
    Ok((z, loss))
}

/// Time-major targets and 0/1 weights matching [`StyleAutoencoder::decode_graph`].
pub fn masked_targets(batch: &Batch) -> (Vec<usize>, Vec<f64>) {
    let mut targets = Vec::with_capacity(batch.decoder_steps() * batch.size());
    let mut weights = Vec::with_capacity(targets.capacity());
    for t in 0..batch.decoder_steps() {
        targets.extend(batch.decoder_targets(t));
        weights.extend(batch.lengths.iter().map(|&len| if t <= len { 1.0 } else { 0.0 }));
    }
    (targets, weights)
}

/// L_R: sum over both styles of the per-token mean reconstruction NLL.
pub fn reconstruction_graph(
    g: &mut Graph,
    model: &CaeModel,
    batch1: &Batch,
    batch2: &Batch,
) -> Result<(Var, Var, Var)> {
    let (z1, l1) = style_reconstruction_graph(g, &model.ae1, batch1)?;
    let (z2, l2) = style_reconstruction_graph(g, &model.ae2, batch2)?;
    let total = g.add(l1, l2)?;
    Ok((z1, z2, total))
}

pub fn reconstruction_loss(model: &CaeModel, batch1: &Batch, batch2: &Batch) -> Result<f64> {
    let mut g = Graph::new();
    let (_, _, loss) = reconstruction_graph(&mut g, model, batch1, batch2)?;
    Ok(g.value(loss).item())
}

fn clamped_log(g: &mut Graph, p: Var) -> Result<Var> {
    let c = g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP);
    g.log(c)
}

/// `-[mean log D(real) + mean log(1 - D(fake))]`.
pub fn discriminator_loss_graph(g: &mut Graph, d: &Discriminator, real: Var, fake: Var) -> Result<Var> {
    let p_real = d.forward(g, real)?;
    let p_fake = d.forward(g, fake)?;
    let log_real = clamped_log(g, p_real)?;
    let not_fake = g.affine(p_fake, -1.0, 1.0);
    let log_not_fake = clamped_log(g, not_fake)?;
    let a = g.mean(log_real);
    let b = g.mean(log_not_fake);
    let s = g.add(a, b)?;
    Ok(g.neg(s))
}

/// Non-saturating generator loss `-mean log D(fake)`.
pub fn generator_loss_graph(g: &mut Graph, d: &Discriminator, fake: Var) -> Result<Var> {
    let p = d.forward(g, fake)?;
    let lp = clamped_log(g, p)?;
    let m = g.mean(lp);
    Ok(g.neg(m))
}

#[derive(Clone, Copy, Debug)]
pub struct AdversarialVars {
    pub gen_12: Var,
    pub gen_21: Var,
    pub disc_1: Var,
    pub disc_2: Var,
}

/// All four adversarial terms on one graph. `z1`, `z2` are real latents of
/// each style; the transferred latents are computed here.
pub fn adversarial_graph(g: &mut Graph, model: &CaeModel, z1: Var, z2: Var) -> Result<AdversarialVars> {
    let fake2 = model.t12.forward(g, z1)?;
    let fake1 = model.t21.forward(g, z2)?;
    Ok(AdversarialVars {
        gen_12: generator_loss_graph(g, &model.d2, fake2)?,
        gen_21: generator_loss_graph(g, &model.d1, fake1)?,
        disc_2: discriminator_loss_graph(g, &model.d2, z2, fake2)?,
        disc_1: discriminator_loss_graph(g, &model.d1, z1, fake1)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversarialValues {
    pub gen_12: f64,
    pub gen_21: f64,
    pub disc_1: f64,
    pub disc_2: f64,
}

pub fn adversarial_losses(model: &CaeModel, z1: &Tensor, z2: &Tensor) -> Result<AdversarialValues> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(z1.clone()), g.constant(z2.clone()));
    let v = adversarial_graph(&mut g, model, a, b)?;
    Ok(AdversarialValues {
        gen_12: g.value(v.gen_12).item(),
        gen_21: g.value(v.gen_21).item(),
        disc_1: g.value(v.disc_1).item(),
        disc_2: g.value(v.disc_2).item(),
    })
}

/// Mean over rows of `|| cycle(z) - z ||_1` for one direction.
pub fn cycle_term_graph(g: &mut Graph, model: &CaeModel, z: Var, direction: Direction) -> Result<Var> {
    let rows = g.shape(z).first().copied().unwrap_or(1).max(1);
    let back = model.cycle_graph(g, z, direction)?;
    let d = g.l1_distance(back, z)?;
    Ok(g.scale(d, 1.0 / rows as f64))
}

/// L_C over both directions.
pub fn cycle_graph(g: &mut Graph, model: &CaeModel, z1: Var, z2: Var) -> Result<Var> {
    let a = cycle_term_graph(g, model, z1, Direction::OneToTwo)?;
    let b = cycle_term_graph(g, model, z2, Direction::TwoToOne)?;
    g.add(a, b)
}

pub fn cycle_loss(model: &CaeModel, z1: &Tensor, z2: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(z1.clone()), g.constant(z2.clone()));
    let l = cycle_graph(&mut g, model, a, b)?;
    Ok(g.value(l).item())
}

/// Weights the components into the minimizing players' objective
/// `l1 * recon + l2 * (gen_12 + gen_21) + l3 * cycle`.
pub fn total_loss(c: LossComponents, lambdas: (f64, f64, f64)) -> Result<LossBreakdown> {
    let (l1, l2, l3) = lambdas;
    let b = LossBreakdown {
        recon: c.recon,
        gen_adv_12: c.gen_adv_12,
        gen_adv_21: c.gen_adv_21,
        disc_1: c.disc_1,
        disc_2: c.disc_2,
        cycle: c.cycle,
        total: l1 * c.recon + l2 * (c.gen_adv_12 + c.gen_adv_21) + l3 * c.cycle,
        lambdas,
    };
    if b.is_finite() {
        Ok(b)
    } else {
        Err(CaeError::Divergence {
            step: 0,
            breakdown: Box::new(b),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::data::{Style, EOS};
    use crate::model::init_model;
    use crate::tensor::Tensor;
    use std::f64::consts::LN_2;

    fn model(hidden: usize, vocab: usize) -> CaeModel {
        let cfg = TrainConfig {
            hidden,
            ..TrainConfig::default()
        };
        init_model(&cfg, vocab, 17).unwrap()
    }

    fn zero_decoder_output(ae: &mut StyleAutoencoder) {
        ae.out_w.value_mut().data_mut().fill(0.0);
        ae.out_b.value_mut().data_mut().fill(0.0);
    }

    fn zero_discriminators(m: &mut CaeModel) {
        for p in m.discriminator_params_mut() {
            p.value_mut().data_mut().fill(0.0);
        }
    }

    #[test]
    fn uniform_logits_give_ln_v_per_style() {
        let mut m = model(4, 10);
        zero_decoder_output(&mut m.ae1);
        zero_decoder_output(&mut m.ae2);
        let b1 = Batch::from_sentences(&[&[4, 5, 6], &[7]], Style::S1, 20).unwrap();
        let b2 = Batch::from_sentences(&[&[8, 9]], Style::S2, 20).unwrap();
        let l = reconstruction_loss(&m, &b1, &b2).unwrap();
        assert!((l - 2.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn perfect_decoder_gives_near_zero_loss() {
        // sentences are a lone eos target; a huge eos bias makes it certain
        let mut m = model(4, 6);
        for ae in [&mut m.ae1, &mut m.ae2] {
            ae.out_w.value_mut().data_mut().fill(0.0);
            let b = ae.out_b.value_mut().data_mut();
            b.fill(0.0);
            b[EOS] = 60.0;
        }
        let mut b1 = Batch::from_sentences(&[&[4]], Style::S1, 20).unwrap();
        let mut b2 = Batch::from_sentences(&[&[4]], Style::S2, 20).unwrap();
        // a gold sequence of eos tokens: every target, including the final one, is eos
        b1.inputs[0] = EOS;
        b2.inputs[0] = EOS;
        let l = reconstruction_loss(&m, &b1, &b2).unwrap();
        assert!(l < 1e-20, "{l}");
    }

    #[test]
    fn masked_mean_matches_per_token_loop() {
        let m = model(5, 9);
        let s1: &[usize] = &[4, 5, 6];
        let s2: &[usize] = &[7];
        let b = Batch::from_sentences(&[s1, s2], Style::S1, 20).unwrap();
        let mut g = Graph::new();
        let (_, l) = style_reconstruction_graph(&mut g, &m.ae1, &b).unwrap();

        // explicit loop: decode logits [B x steps x V], sum NLL over real tokens
        let z = crate::model::encode(&m.ae1, &b).unwrap();
        let logits = crate::model::decode_teacher_forced(&m.ae1, &z, &b).unwrap();
        let (steps, v) = (b.decoder_steps(), 9);
        let mut total = 0.0;
        let mut count = 0;
        for (r, sent) in [s1, s2].iter().enumerate() {
            let gold: Vec<usize> = sent.iter().copied().chain([EOS]).collect();
            for (t, &target) in gold.iter().enumerate() {
                let row = &logits.data()[(r * steps + t) * v..(r * steps + t + 1) * v];
                let max = row.iter().cloned().fold(f64::MIN, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                total += lse - row[target];
                count += 1;
            }
        }
        assert!((g.value(l).item() - total / count as f64).abs() < 1e-12);
    }

    #[test]
    fn padding_content_is_ignored() {
        let m = model(4, 9);
        let mut b = Batch::from_sentences(&[&[4, 5, 6], &[7]], Style::S1, 20).unwrap();
        let before = {
            let mut g = Graph::new();
            let (_, l) = style_reconstruction_graph(&mut g, &m.ae1, &b).unwrap();
            g.value(l).item()
        };
        b.inputs[4] = 8;
        b.inputs[5] = 8;
        let mut g = Graph::new();
        let (_, l) = style_reconstruction_graph(&mut g, &m.ae1, &b).unwrap();
        assert_eq!(g.value(l).item(), before);
    }

    #[test]
    fn coin_flip_discriminators() {
        let mut m = model(4, 8);
        zero_discriminators(&mut m);
        let z = Tensor::new(vec![2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.8]).unwrap();
        let v = adversarial_losses(&m, &z, &z).unwrap();
        assert!((v.disc_1 - 2.0 * LN_2).abs() < 1e-9);
        assert!((v.disc_2 - 2.0 * LN_2).abs() < 1e-9);
        assert!((v.gen_12 - LN_2).abs() < 1e-9);
        assert!((v.gen_21 - LN_2).abs() < 1e-9);
    }

    #[test]
    fn saturated_discriminator_stays_finite() {
        let mut m = model(4, 8);
        zero_discriminators(&mut m);
        m.d2.b2.value_mut().data_mut()[0] = 1e4;
        let z = Tensor::new(vec![1, 4], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let v = adversarial_losses(&m, &z, &z).unwrap();
        assert!(v.disc_2.is_finite() && v.disc_2 > 10.0);
        assert!(v.gen_12.abs() < 1e-6);
    }

    #[test]
    fn cycle_hand_arithmetic() {
        // h = 2, z = (1, 0); forcing both nets to output the constant (0, 1)
        let mut m = model(2, 6);
        for net in [&mut m.t12, &mut m.t21] {
            net.w2.value_mut().data_mut().fill(0.0);
            net.b2.value_mut().data_mut().copy_from_slice(&[0.0, 1.0]);
        }
        let z = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let zero = Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
        // first direction contributes 2, the second (input already (0,1)) 0
        assert!((cycle_loss(&m, &z, &zero).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_is_zero_for_identity_nets() {
        let mut m = model(3, 6);
        m.t12.identity = true;
        m.t21.identity = true;
        let b = Batch::from_sentences(&[&[4, 5], &[5]], Style::S1, 20).unwrap();
        let z = crate::model::encode(&m.ae1, &b).unwrap();
        assert_eq!(cycle_loss(&m, &z, &z).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_weights() {
        let c = LossComponents {
            recon: 2.0,
            gen_adv_12: 0.5,
            gen_adv_21: 0.25,
            disc_1: 9.0,
            disc_2: 9.0,
            cycle: 3.0,
        };
        let b = total_loss(c, (0.1, 1.0, 1.0)).unwrap();
        assert!((b.total - (0.2 + 0.75 + 3.0)).abs() < 1e-15);
        let b0 = total_loss(c, (0.1, 0.0, 0.0)).unwrap();
        assert_eq!(b0.total, 0.1 * 2.0);
        let single = total_loss(c, (0.1, 1.0, 1.0)).unwrap().total;
        let double = total_loss(c, (0.1, 1.0, 2.0)).unwrap().total;
        assert_eq!(double - single, 1.0 * 3.0);
        let bad = LossComponents { cycle: f64::NAN, ..c };
        assert!(matches!(
            total_loss(bad, (0.1, 1.0, 1.0)),
            Err(CaeError::Divergence { .. })
        ));
    }
}
