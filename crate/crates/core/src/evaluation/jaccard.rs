//! Word-set Jaccard distance and nearest-neighbour lookup over a corpus.

use std::collections::HashMap;

use crate::error::{CaeError, Result};

fn token_set(tokens: &[usize]) -> Vec<usize> {
    let mut s = tokens.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

fn distance_from_counts(inter: usize, a: usize, b: usize) -> f64 {
    let union = a + b - inter;
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

/// `1 - |A ∩ B| / |A ∪ B|` over token sets; two empty sentences are at distance 0.
pub fn jaccard_distance(a: &[usize], b: &[usize]) -> f64 {
    let (a, b) = (token_set(a), token_set(b));
    let inter = a.iter().filter(|t| b.binary_search(t).is_ok()).count();
    distance_from_counts(inter, a.len(), b.len())
}

/// Inverted index for repeated nearest-neighbour queries against one corpus.
#[derive(Clone, Debug)]
pub struct JaccardIndex {
    set_sizes: Vec<usize>,
    postings: HashMap<usize, Vec<usize>>,
    first_empty: Option<usize>,
}

impl JaccardIndex {
    pub fn new(corpus: &[Vec<usize>]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(CaeError::Contract("nearest neighbour in an empty corpus".into()));
        }
        let mut postings: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut set_sizes = Vec::with_capacity(corpus.len());
        for (i, s) in corpus.iter().enumerate() {
            let set = token_set(s);
            for &t in &set {
                postings.entry(t).or_default().push(i);
            }
            set_sizes.push(set.len());
        }
        let first_empty = set_sizes.iter().position(|&n| n == 0);
        Ok(Self {
            set_sizes,
            postings,
            first_empty,
        })
    }

    pub fn len(&self) -> usize {
        self.set_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set_sizes.is_empty()
    }

    /// Index and distance of the closest corpus sentence. Ties go to the
    /// earliest sentence.
    pub fn nearest(&self, sentence: &[usize]) -> (usize, f64) {
        let query = token_set(sentence);
        if query.is_empty() {
            return match self.first_empty {
                Some(i) => (i, 0.0),
                None => (0, 1.0),
            };
        }
        let mut inter: HashMap<usize, usize> = HashMap::new();
        for t in &query {
            for &doc in self.postings.get(t).map(Vec::as_slice).unwrap_or_default() {
                *inter.entry(doc).or_default() += 1;
            }
        }
        // sentences sharing no token sit at distance 1, so the first one wins
        // unless an overlapping sentence is strictly closer
        let mut best = (0, 1.0);
        for (&doc, &n) in &inter {
            let d = distance_from_counts(n, query.len(), self.set_sizes[doc]);
            if d < best.1 || (d == best.1 && doc < best.0) {
                best = (doc, d);
            }
        }
        best
    }
}

/// One-off [`JaccardIndex::nearest`].
pub fn nearest_neighbor_jaccard(sentence: &[usize], corpus: &[Vec<usize>]) -> Result<(usize, f64)> {
    Ok(JaccardIndex::new(corpus)?.nearest(sentence))
}
