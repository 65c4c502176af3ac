//! BLEU-4 with uniform weights and a brevity penalty.
//!
//! Sentence-level scores add one to the numerator and denominator of the
//! 2..4-gram precisions so short outputs are not zeroed by a single missing
//! 4-gram. Corpus-level scores pool clipped counts and are unsmoothed.

use std::collections::HashMap;
use std::hash::Hash;

pub const MAX_ORDER: usize = 4;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate's n-gram count.
pub fn modified_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, (candidate.len() + 1).saturating_sub(n))
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

/// Smoothed sentence BLEU in `[0, 100]`. An empty candidate scores 0.
pub fn sentence_bleu<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        if candidate.is_empty() {
            log::debug!("empty candidate scored as BLEU 0");
        }
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let (m, c) = modified_precision(candidate, reference, n);
        let (m, c) = if n == 1 {
            (m as f64, c as f64)
        } else {
            (m as f64 + 1.0, c as f64 + 1.0)
        };
        if m == 0.0 {
            return 0.0;
        }
        log_sum += (m / c).ln();
    }
    100.0 * brevity_penalty(candidate.len(), reference.len()) * (log_sum / MAX_ORDER as f64).exp()
}

/// Corpus BLEU over aligned `(candidate, reference)` pairs, in `[0, 100]`.
pub fn corpus_bleu<T: Eq + Hash, C: AsRef<[T]>, R: AsRef<[T]>>(pairs: impl IntoIterator<Item = (C, R)>) -> f64 {
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut cand_len, mut ref_len) = (0, 0);
    for (c, r) in pairs {
        let (c, r) = (c.as_ref(), r.as_ref());
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let (m, t) = modified_precision(c, r, n);
            matches[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    if cand_len == 0 || matches.contains(&0) {
        return 0.0;
    }
    let log_sum: f64 = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum();
    100.0 * brevity_penalty(cand_len, ref_len) * (log_sum / MAX_ORDER as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn clipped_unigram_hand_count() {
        assert_eq!(
            modified_precision(&w("the the the cat"), &w("the cat sat down"), 1),
            (2, 4)
        );
    }

    #[test]
    fn identity_and_disjoint() {
        for s in ["a", "a b", "a b c d e f"] {
            assert_eq!(sentence_bleu(&w(s), &w(s)), 100.0);
        }
        let long = w("a b c d e f");
        assert_eq!(corpus_bleu([(&long, &long), (&long, &long)]), 100.0);
        assert_eq!(sentence_bleu(&w("x y z"), &w("a b c")), 0.0);
        assert_eq!(corpus_bleu([(w("x y z"), w("a b c"))]), 0.0);
        assert_eq!(sentence_bleu::<&str>(&[], &w("a")), 0.0);
    }

    #[test]
    fn smoothed_sentence_value() {
        // one substitution at the end of five tokens
        let (c, r) = (w("a b c d x"), w("a b c d e"));
        let expected = 100.0 * ((4.0 / 5.0) * (4.0 / 5.0) * (3.0 / 4.0) * (2.0 / 3.0) as f64).powf(0.25);
        assert!((sentence_bleu(&c, &r) - expected).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_applies() {
        let (c, r) = (w("a b c d"), w("a b c d e f"));
        let expected = 100.0 * (1.0 - 6.0 / 4.0f64).exp();
        assert!((sentence_bleu(&c, &r) - expected).abs() < 1e-12);
    }
}
