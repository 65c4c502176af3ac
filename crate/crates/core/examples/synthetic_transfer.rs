//! Trains on the built-in two-style toy grammar and prints transfer quality.
//!
//! `cargo run --release -p cae-core --example synthetic_transfer -- [key=value ...]`
//! accepts any training config key, e.g. `epochs=5 no_cycle=true`.

use std::time::Instant;

use cae_core::data::split_corpus;
use cae_core::evaluation::corpus_bleu;
use cae_core::inference::{reconstruct_all, strip_eos, transfer_all};
use cae_core::synthetic::{generate, has_marker};
use cae_core::trainer::{train_observed, TrainEvent};
use cae_core::{Corpus, Direction, Style, TrainConfig, TrainData, Vocabulary};

fn main() -> cae_core::Result<()> {
    let mut config = TrainConfig::synthetic();
    let mut per_style = 5000;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        if k == "sentences" {
            per_style = v.parse().expect("count");
        } else {
            config.set(k, v)?;
        }
    }
    let lines1 = generate(Style::S1, per_style, config.seed);
    let lines2 = generate(Style::S2, per_style, config.seed);
    let vocab = Vocabulary::build(
        lines1.iter().chain(&lines2).map(|l| l.split_whitespace()),
        config.vocab_max_size,
    )?;
    let (c1, _) = Corpus::from_lines(Style::S1, lines1.iter().map(String::as_str), &vocab, false);
    let (c2, _) = Corpus::from_lines(Style::S2, lines2.iter().map(String::as_str), &vocab, false);
    let [train1, valid1, test1] = split_corpus(&c1, 0.8, 0.1, config.seed)?;
    let [train2, valid2, test2] = split_corpus(&c2, 0.8, 0.1, config.seed)?;
    let data = TrainData {
        train1,
        train2,
        valid1,
        valid2,
    };

    let started = Instant::now();
    let outcome = train_observed(&data, &vocab, &config, |e| match e {
        TrainEvent::Warmup { epoch, recon } => eprintln!("warm-up {epoch} recon {recon:.4}"),
        TrainEvent::Epoch(r) => eprintln!("epoch {} valid_recon {:.4} ({:.1}s)", r.epoch, r.valid_recon, r.seconds),
        TrainEvent::Step { step, breakdown, .. } if step % 100 == 0 => eprintln!("step {step} {breakdown}"),
        _ => {}
    })?;
    eprintln!("trained in {:.1}s", started.elapsed().as_secs_f64());

    let mut identity = outcome.model.clone();
    identity.t12.identity = true;
    identity.t21.identity = true;
    for (label, model) in [("trained", &outcome.model), ("identity", &identity)] {
        println!("== {label}");
        for (test, dir) in [(&test1, Direction::OneToTwo), (&test2, Direction::TwoToOne)] {
            let recon = reconstruct_all(model, &test.sentences, test.style, config.max_len, 64)?;
            let exact = recon
                .iter()
                .zip(&test.sentences)
                .filter(|(r, s)| strip_eos(r) == s.as_slice())
                .count();
            let results = transfer_all(model, &test.sentences, dir, config.max_len, 64)?;
            let hits = results
                .iter()
                .filter(|r| {
                    let text = vocab.decode(r.content());
                    let toks: Vec<&str> = text.split_whitespace().collect();
                    has_marker(&toks, dir.target()) && !has_marker(&toks, dir.source())
                })
                .count();
            let bleu = corpus_bleu(results.iter().map(|r| (r.content().to_vec(), r.source_tokens.clone())));
            println!(
                "{dir}: recon_exact={:.3} marker_rate={:.3} bleu={:.2}",
                exact as f64 / test.len() as f64,
                hits as f64 / test.len() as f64,
                bleu
            );
            for r in results.iter().take(5) {
                println!("  {} => {}", vocab.decode(&r.source_tokens), vocab.decode(r.content()));
            }
        }
    }
    Ok(())
}
