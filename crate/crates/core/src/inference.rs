//! Test-time transfer: encode with the source autoencoder, map the latent
//! with the transfer net, then decode greedily with the target decoder.

use std::collections::BTreeSet;

use crate::data::{Batch, Style, BOS, EOS, PAD};
use crate::error::{CaeError, Result};
use crate::model::{CaeModel, Direction, StyleAutoencoder};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct TransferResult {
    pub source_tokens: Vec<usize>,
    /// Generated ids; ends with `EOS` unless `max_len` was reached first.
    pub transferred_tokens: Vec<usize>,
    pub direction: Direction,
    /// `|| cycle_map(z) - z ||_1` for the source latent.
    pub latent_cycle_residual: f64,
}

impl TransferResult {
    /// The generated sentence without its terminal `EOS`.
    pub fn content(&self) -> &[usize] {
        strip_eos(&self.transferred_tokens)
    }
}

pub fn strip_eos(tokens: &[usize]) -> &[usize] {
    match tokens.split_last() {
        Some((&EOS, rest)) => rest,
        _ => tokens,
    }
}

/// Argmax over the ids a decoder may emit: `PAD` and `BOS` are never produced.
/// Ties go to the lowest id.
fn pick(row: &[f64]) -> usize {
    let mut best = EOS;
    for (j, &v) in row.iter().enumerate().skip(EOS + 1) {
        if v > row[best] {
            best = j;
        }
    }
    debug_assert!(best != PAD && best != BOS);
    best
}

fn decode_rows(g: &mut Graph, ae: &StyleAutoencoder, z: Var, max_len: usize) -> Result<Vec<Vec<usize>>> {
    let shape = g.shape(z).to_vec();
    if shape.len() != 2 || shape[1] != ae.hidden() {
        return Err(CaeError::dim(
            "greedy_decode",
            &shape,
            &[shape.first().copied().unwrap_or(1), ae.hidden()],
        ));
    }
    let rows = shape[0];
    let vocab = ae.vocab_size();
    let mut out = vec![Vec::new(); rows];
    let mut done = vec![false; rows];
    let mut h = z;
    let mut c = g.constant(Tensor::zeros(&[rows, ae.hidden()]));
    let mut prev = vec![BOS; rows];
    for _ in 0..max_len {
        let (logits, h2, c2) = ae.decoder_step(g, &prev, h, c)?;
        (h, c) = (h2, c2);
        let data = g.value(logits).data();
        for r in 0..rows {
            if done[r] {
                continue;
            }
            let tok = pick(&data[r * vocab..(r + 1) * vocab]);
            out[r].push(tok);
            prev[r] = tok;
            done[r] = tok == EOS;
        }
        if done.iter().all(|&d| d) {
            break;
        }
    }
    Ok(out)
}

/// Greedy decoding from one latent `[h]` (or `[1 x h]`). Stops after `EOS` or
/// `max_len` generated tokens, whichever comes first.
pub fn greedy_decode(ae: &StyleAutoencoder, z: &Tensor, max_len: usize) -> Result<Vec<usize>> {
    let z = z.clone().reshape(vec![1, z.len()])?;
    Ok(greedy_decode_batch(ae, &z, max_len)?.pop().unwrap_or_default())
}

/// Row-wise [`greedy_decode`] over `[B x h]` latents.
pub fn greedy_decode_batch(ae: &StyleAutoencoder, z: &Tensor, max_len: usize) -> Result<Vec<Vec<usize>>> {
    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    decode_rows(&mut g, ae, zv, max_len)
}

/// Per-row `|| cycle_map(z) - z ||_1`.
pub fn cycle_residuals(model: &CaeModel, z: &Tensor, direction: Direction) -> Result<Vec<f64>> {
    let back = crate::model::cycle_map(model, z, direction)?;
    Ok((0..z.rows())
        .map(|r| back.row(r).iter().zip(z.row(r)).map(|(a, b)| (a - b).abs()).sum())
        .collect())
}

/// Encodes, transfers and decodes a batch of sentences, returning the
/// generated ids and the names of every parameter the pipeline read.
pub fn transfer_traced(
    model: &CaeModel,
    sentences: &[&[usize]],
    direction: Direction,
    max_len: usize,
) -> Result<(Vec<Vec<usize>>, Tensor, BTreeSet<String>)> {
    if let Some(i) = sentences.iter().position(|s| s.is_empty()) {
        return Err(CaeError::Contract(format!("sentence {i} is empty")));
    }
    let source = direction.source();
    let batch = Batch::from_sentences(sentences, source, max_len.max(1))?;
    let mut g = Graph::new();
    let z = model.autoencoder(source).encode_graph(&mut g, &batch)?;
    let moved = model.transfer_net(direction).forward(&mut g, z)?;
    let out = decode_rows(&mut g, model.autoencoder(direction.target()), moved, max_len)?;
    let touched = g.bound_params().map(str::to_string).collect();
    Ok((out, g.value(z).clone(), touched))
}

/// Transfers a batch of sentences; results are in input order.
pub fn transfer_batch(
    model: &CaeModel,
    sentences: &[&[usize]],
    direction: Direction,
    max_len: usize,
) -> Result<Vec<TransferResult>> {
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let (outputs, z, _) = transfer_traced(model, sentences, direction, max_len)?;
    let residuals = cycle_residuals(model, &z, direction)?;
    Ok(sentences
        .iter()
        .zip(outputs)
        .zip(residuals)
        .map(|((src, out), res)| TransferResult {
            source_tokens: src.to_vec(),
            transferred_tokens: out,
            direction,
            latent_cycle_residual: res,
        })
        .collect())
}

pub fn transfer_text(
    model: &CaeModel,
    sentence: &[usize],
    direction: Direction,
    max_len: usize,
) -> Result<TransferResult> {
    Ok(transfer_batch(model, &[sentence], direction, max_len)?.remove(0))
}

/// Transfers a corpus in chunks of `batch_size`, preserving order.
pub fn transfer_all(
    model: &CaeModel,
    sentences: &[Vec<usize>],
    direction: Direction,
    max_len: usize,
    batch_size: usize,
) -> Result<Vec<TransferResult>> {
    let mut out = Vec::with_capacity(sentences.len());
    for chunk in sentences.chunks(batch_size.max(1)) {
        let refs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
        out.extend(transfer_batch(model, &refs, direction, max_len)?);
    }
    Ok(out)
}

/// Greedy reconstruction of sentences through their own autoencoder.
pub fn reconstruct_all(
    model: &CaeModel,
    sentences: &[Vec<usize>],
    style: Style,
    max_len: usize,
    batch_size: usize,
) -> Result<Vec<Vec<usize>>> {
    let ae = model.autoencoder(style);
    let mut out = Vec::with_capacity(sentences.len());
    for chunk in sentences.chunks(batch_size.max(1)) {
        let refs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
        let batch = Batch::from_sentences(&refs, style, max_len.max(1))?;
        let z = crate::model::encode(ae, &batch)?;
        out.extend(greedy_decode_batch(ae, &z, max_len)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::model::init_model;

    fn model(hidden: usize, vocab: usize, seed: u64) -> CaeModel {
        let cfg = TrainConfig {
            hidden,
            ..TrainConfig::default()
        };
        init_model(&cfg, vocab, seed).unwrap()
    }

    fn unit(h: usize) -> Tensor {
        let mut z = Tensor::zeros(&[1, h]);
        z.data_mut()[0] = 1.0;
        z
    }

    #[test]
    fn eos_peaked_decoder_stops_immediately() {
        let mut m = model(4, 7, 1);
        m.ae2.out_w.value_mut().data_mut().fill(0.0);
        m.ae2.out_b.value_mut().data_mut()[EOS] = 5.0;
        let out = greedy_decode(&m.ae2, &unit(4), 20).unwrap();
        assert_eq!(out, vec![EOS]);
        assert!(strip_eos(&out).is_empty());
    }

    #[test]
    fn ties_and_reserved_ids() {
        assert_eq!(pick(&[9.0, 9.0, 1.0, 1.0, 0.5]), EOS);
        assert_eq!(pick(&[9.0, 9.0, 1.0, 1.5, 1.5]), 3);
        assert_eq!(pick(&[0.0, 0.0, 0.0, 0.0]), EOS);
        assert_eq!(pick(&[0.0, 0.0, 0.0, 2.0, 2.0]), 3);
    }

    #[test]
    fn length_cap_without_eos() {
        let mut m = model(4, 7, 2);
        m.ae1.out_w.value_mut().data_mut().fill(0.0);
        m.ae1.out_b.value_mut().data_mut()[5] = 3.0;
        let out = greedy_decode(&m.ae1, &unit(4), 6).unwrap();
        assert_eq!(out, vec![5; 6]);
    }

    #[test]
    fn batch_decoding_matches_single_rows() {
        let m = model(5, 9, 3);
        let b = Batch::from_sentences(&[&[4, 5, 6], &[7], &[8, 8]], Style::S1, 20).unwrap();
        let z = crate::model::encode(&m.ae1, &b).unwrap();
        let all = greedy_decode_batch(&m.ae1, &z, 8).unwrap();
        for (r, seq) in all.iter().enumerate() {
            let single = greedy_decode(&m.ae1, &Tensor::new(vec![5], z.row(r).to_vec()).unwrap(), 8).unwrap();
            assert_eq!(seq, &single);
        }
    }

    #[test]
    fn empty_sentence_is_a_contract_error() {
        let m = model(4, 8, 0);
        assert!(matches!(
            transfer_text(&m, &[], Direction::OneToTwo, 20),
            Err(CaeError::Contract(_))
        ));
    }
}
