use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cae_core::checkpoint::{decode_checkpoint, encode_checkpoint};
use cae_core::config::TrainConfig;
use cae_core::data::{make_batches, Batch, Corpus, Style, Vocabulary, EOS, NUM_SPECIALS};
use cae_core::inference::{greedy_decode, transfer_traced};
use cae_core::model::{decode_teacher_forced, encode, init_model, CaeModel, Direction};
use cae_core::tensor::{argmax, Tensor};

fn model(hidden: usize, vocab: usize, seed: u64) -> CaeModel {
    let cfg = TrainConfig {
        hidden,
        ..TrainConfig::default()
    };
    init_model(&cfg, vocab, seed).unwrap()
}

#[test]
fn decoder_logits_ignore_future_gold_tokens() {
    let m = model(6, 12, 4);
    let gold = [4usize, 9, 5, 11, 7, 6];
    let z = encode(&m.ae1, &Batch::from_sentences(&[&gold], Style::S1, 20).unwrap()).unwrap();
    let base = decode_teacher_forced(&m.ae1, &z, &Batch::from_sentences(&[&gold], Style::S1, 20).unwrap()).unwrap();
    let vocab = 12;
    for t in 0..gold.len() {
        let mut changed = gold;
        for (k, tok) in changed.iter_mut().enumerate().skip(t) {
            *tok = if *tok == 4 + k % 3 { 10 } else { 4 + k % 3 };
        }
        let other =
            decode_teacher_forced(&m.ae1, &z, &Batch::from_sentences(&[&changed], Style::S1, 20).unwrap()).unwrap();
        // row s is the step that predicts token s from tokens < s
        for s in 0..=t {
            assert_eq!(base.row(s), other.row(s), "step {s} saw a change at {t}");
        }
        assert_ne!(base.row(t + 1)[..vocab], other.row(t + 1)[..vocab]);
    }
}

fn names(prefixes: &[&str], m: &CaeModel) -> BTreeSet<String> {
    m.params()
        .iter()
        .map(|p| p.name().to_string())
        .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
        .collect()
}

#[test]
fn transfer_touches_source_encoder_transfer_net_and_target_decoder() {
    let m = model(4, 10, 1);
    let (_, _, touched) = transfer_traced(&m, &[&[4, 5, 6], &[7]], Direction::OneToTwo, 5).unwrap();
    assert_eq!(
        touched,
        names(
            &["ae1.embed", "ae1.enc.", "t12.", "ae2.embed", "ae2.dec.", "ae2.out."],
            &m
        )
    );
    let (_, _, touched) = transfer_traced(&m, &[&[4, 5]], Direction::TwoToOne, 5).unwrap();
    assert_eq!(
        touched,
        names(
            &["ae2.embed", "ae2.enc.", "t21.", "ae1.embed", "ae1.dec.", "ae1.out."],
            &m
        )
    );
}

/// Teacher-forced logits for `prefix`, one row per step `0..=prefix.len()`.
fn forced_rows(m: &CaeModel, z: &Tensor, prefix: &[usize]) -> Vec<Vec<f64>> {
    let probe: Vec<usize> = if prefix.is_empty() {
        vec![NUM_SPECIALS]
    } else {
        prefix.to_vec()
    };
    let logits = decode_teacher_forced(&m.ae2, z, &Batch::from_sentences(&[&probe], Style::S2, 20).unwrap()).unwrap();
    (0..=prefix.len()).map(|s| logits.row(s).to_vec()).collect()
}

fn emitted(row: &[f64]) -> usize {
    // pad and bos are never produced; ties go to the lowest id
    EOS + argmax(&row[EOS..])
}

#[test]
fn greedy_path_matches_enumeration_oracle() {
    let vocab = 5;
    let max_len = 3;
    for seed in 0..20 {
        let mut m = model(4, vocab, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in m.ae2.out_b.value_mut().data_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
        let z = encode(&m.ae2, &Batch::from_sentences(&[&[3, 4]], Style::S2, 20).unwrap()).unwrap();
        let emit = EOS..vocab;
        let mut candidates: Vec<Vec<usize>> = vec![vec![]];
        let mut complete = Vec::new();
        for _ in 0..max_len {
            let mut next = Vec::new();
            for c in &candidates {
                for t in emit.clone() {
                    let mut s = c.clone();
                    s.push(t);
                    if t == EOS || s.len() == max_len {
                        complete.push(s);
                    } else {
                        next.push(s);
                    }
                }
            }
            candidates = next;
        }
        let greedy: Vec<&Vec<usize>> = complete
            .iter()
            .filter(|seq| {
                let content: Vec<usize> = seq.iter().copied().filter(|&t| t != EOS).collect();
                let rows = forced_rows(&m, &z, &content);
                seq.iter().enumerate().all(|(s, &tok)| emitted(&rows[s]) == tok)
            })
            .collect();
        assert_eq!(greedy.len(), 1, "seed {seed}");
        assert_eq!(&greedy_decode(&m.ae2, &z, max_len).unwrap(), greedy[0], "seed {seed}");
    }
}

#[test]
fn checkpoint_round_trip_preserves_transfer() {
    let m = model(5, 9, 2);
    let vocab = Vocabulary::build(["a b c d e"].iter().map(|s| s.split_whitespace()), 100).unwrap();
    let back = decode_checkpoint(&encode_checkpoint(&m, &TrainConfig::default(), &vocab))
        .unwrap()
        .model;
    let a = transfer_traced(&m, &[&[4, 5, 6]], Direction::OneToTwo, 6).unwrap();
    let b = transfer_traced(&back, &[&[4, 5, 6]], Direction::OneToTwo, 6).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn vocabulary_keeps_the_top_k_of_an_independent_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lines: Vec<String> = (0..400)
        .map(|_| {
            (0..rng.gen_range(1..9))
                .map(|_| {
                    // Zipf-like rank
                    let u: f64 = rng.gen_range(0.0..1.0);
                    format!("w{}", (1.0 / (u + 0.02)) as usize)
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let max_size = 20;
    let vocab = Vocabulary::build(lines.iter().map(|l| l.split_whitespace()), max_size).unwrap();

    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0;
    for tok in lines.iter().flat_map(|l| l.split_whitespace()) {
        let e = counts.entry(tok).or_insert((0, order));
        e.0 += 1;
        order += 1;
    }
    let mut ranked: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let expected: BTreeSet<&str> = ranked.iter().take(max_size).map(|r| r.0).collect();
    let kept: BTreeSet<&str> = vocab.tokens()[NUM_SPECIALS..].iter().map(String::as_str).collect();
    assert_eq!(kept, expected);
}

proptest! {
    #[test]
    fn encode_decode_round_trip(sentences in prop::collection::vec(prop::collection::vec("[a-f]{1,3}", 1..6), 1..12)) {
        let lines: Vec<String> = sentences.iter().map(|s| s.join(" ")).collect();
        let vocab = Vocabulary::build(lines.iter().map(|l| l.split_whitespace()), 10_000).unwrap();
        for l in &lines {
            prop_assert_eq!(&vocab.decode(&vocab.encode(l).unwrap()), l);
        }
    }

    #[test]
    fn batches_cover_the_corpus_exactly_once(
        sentences in prop::collection::vec(prop::collection::vec(4usize..20, 1..7), 1..40),
        batch_size in 1usize..9,
        seed in any::<u64>(),
    ) {
        let corpus = Corpus::new(Style::S1, sentences.clone(), 20).unwrap();
        let batches = make_batches(&corpus, batch_size, 20, seed).unwrap();
        let mut seen: Vec<Vec<usize>> = batches.iter().flat_map(|b| (0..b.size()).map(move |r| b.sentence(r).to_vec())).collect();
        let mut ids: Vec<usize> = batches.iter().flat_map(|b| b.sentence_ids.clone()).collect();
        let mut expected = sentences;
        seen.sort();
        expected.sort();
        ids.sort();
        prop_assert_eq!(seen, expected);
        prop_assert_eq!(ids, (0..corpus.len()).collect::<Vec<_>>());
    }
}
