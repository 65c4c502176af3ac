//! Corpora, vocabulary and batching for two non-parallel styled corpora.
//!
//! Corpus files are UTF-8, one whitespace-tokenized sentence per line. The
//! vocabulary file lists one token per line in id order, specials first.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{CaeError, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
pub const NUM_SPECIALS: usize = SPECIAL_TOKENS.len();

pub const DEFAULT_MAX_LEN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Style {
    S1,
    S2,
}

impl Style {
    pub fn other(self) -> Style {
        match self {
            Style::S1 => Style::S2,
            Style::S2 => Style::S1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Style::S1 => 0,
            Style::S2 => 1,
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::S1 => "s1",
            Style::S2 => "s2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    max_size: usize,
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent tokens. Equal counts are ordered by
    /// first occurrence so builds are reproducible.
    pub fn build<'a, I, S>(sentences: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        if max_size < 1 {
            return Err(CaeError::Config("vocabulary max_size must be at least 1".into()));
        }
        // token -> (count, first occurrence)
        let mut counts: HashMap<&'a str, (usize, usize)> = HashMap::new();
        let mut seen = 0;
        for sentence in sentences {
            for tok in sentence {
                if SPECIAL_TOKENS.contains(&tok) {
                    continue;
                }
                let entry = counts.entry(tok).or_insert((0, seen));
                entry.0 += 1;
                seen += 1;
            }
        }
        let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(t, (c, first))| (t, c, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(max_size);

        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _, _)| t.to_string()))
            .collect();
        Ok(Self::from_tokens(tokens, max_size))
    }

    fn from_tokens(id_to_token: Vec<String>, max_size: usize) -> Self {
        let token_to_id = id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            token_to_id,
            id_to_token,
            max_size,
        }
    }

    /// Builds from corpus files (one sentence per line).
    pub fn from_files<P: AsRef<Path>>(files: &[P], max_size: usize, lowercase: bool) -> Result<Self> {
        let mut texts = Vec::with_capacity(files.len());
        for f in files {
            let text = fs::read_to_string(f).map_err(|e| CaeError::io(f.as_ref(), e))?;
            texts.push(if lowercase { text.to_lowercase() } else { text });
        }
        Self::build(
            texts.iter().flat_map(|t| t.lines()).map(str::split_whitespace),
            max_size,
        )
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Id of `token`, or [`UNK`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Whitespace-splits and maps to ids. `None` for a line with no tokens.
    pub fn encode(&self, text: &str) -> Option<Vec<usize>> {
        let ids: Vec<usize> = text.split_whitespace().map(|t| self.id(t)).collect();
        (!ids.is_empty()).then_some(ids)
    }

    /// Joins tokens with single spaces, dropping pad/bos/eos.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD | BOS | EOS))
            .map(|&id| self.token(id).unwrap_or(SPECIAL_TOKENS[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.id_to_token {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < NUM_SPECIALS || tokens[..NUM_SPECIALS] != SPECIAL_TOKENS {
            return Err(CaeError::Parse {
                what: "vocabulary",
                detail: "file must start with the four special tokens".into(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = tokens.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(CaeError::Parse {
                what: "vocabulary",
                detail: format!("duplicate token {dup:?}"),
            });
        }
        let max_size = tokens.len() - NUM_SPECIALS;
        Ok(Self::from_tokens(tokens, max_size.max(1)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| CaeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
        Self::from_text(&text)
    }

    /// SHA-256 of the serialized vocabulary.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

/// A styled set of token-id sentences, without bos/eos.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub style: Style,
    pub sentences: Vec<Vec<usize>>,
    pub source_path: Option<PathBuf>,
}

impl Corpus {
    pub fn new(style: Style, sentences: Vec<Vec<usize>>, vocab_size: usize) -> Result<Self> {
        for (i, s) in sentences.iter().enumerate() {
            if s.is_empty() {
                return Err(CaeError::Contract(format!("sentence {i} is empty")));
            }
            if let Some(&bad) = s.iter().find(|&&id| id >= vocab_size) {
                return Err(CaeError::Index {
                    index: bad,
                    bound: vocab_size,
                });
            }
        }
        Ok(Self {
            style,
            sentences,
            source_path: None,
        })
    }

    /// Encodes `lines`, skipping blank ones. Returns the corpus and the number
    /// of skipped lines.
    pub fn from_lines<'a>(
        style: Style,
        lines: impl IntoIterator<Item = &'a str>,
        vocab: &Vocabulary,
        lowercase: bool,
    ) -> (Self, usize) {
        let mut skipped = 0;
        let mut sentences = Vec::new();
        for line in lines {
            let encoded = if lowercase {
                vocab.encode(&line.to_lowercase())
            } else {
                vocab.encode(line)
            };
            match encoded {
                Some(ids) => sentences.push(ids),
                None => skipped += 1,
            }
        }
        let corpus = Self {
            style,
            sentences,
            source_path: None,
        };
        (corpus, skipped)
    }

    pub fn read(path: &Path, style: Style, vocab: &Vocabulary, lowercase: bool) -> Result<(Self, usize)> {
        let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
        let (mut corpus, skipped) = Self::from_lines(style, text.lines(), vocab, lowercase);
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} empty lines", path.display());
        }
        corpus.source_path = Some(path.to_path_buf());
        Ok((corpus, skipped))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            style: self.style,
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
            source_path: self.source_path.clone(),
        }
    }
}

/// Seeded train/valid/test partition. Fractions are of the whole corpus; the
/// test part receives the remainder.
pub fn split_corpus(corpus: &Corpus, train_frac: f64, valid_frac: f64, seed: u64) -> Result<[Corpus; 3]> {
    if !(0.0..=1.0).contains(&train_frac) || !(0.0..=1.0).contains(&valid_frac) || train_frac + valid_frac > 1.0 {
        return Err(CaeError::Config(format!(
            "invalid split fractions {train_frac}/{valid_frac}"
        )));
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_frac).round() as usize;
    let n_valid = ((n as f64 * valid_frac).round() as usize).min(n - n_train);
    Ok([
        corpus.subset(&order[..n_train]),
        corpus.subset(&order[n_train..n_train + n_valid]),
        corpus.subset(&order[n_train + n_valid..]),
    ])
}

/// Padded batch of sentences. `inputs` is row-major `[batch x width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<usize>,
    pub lengths: Vec<usize>,
    pub width: usize,
    pub style: Style,
    /// Positions of the rows in the source corpus.
    pub sentence_ids: Vec<usize>,
}

impl Batch {
    /// Pads `sentences` after truncating each to `max_len`.
    pub fn from_sentences(sentences: &[&[usize]], style: Style, max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(CaeError::Config("max_len must be at least 1".into()));
        }
        if sentences.is_empty() {
            return Err(CaeError::Contract("batch needs at least one sentence".into()));
        }
        let lengths: Vec<usize> = sentences.iter().map(|s| s.len().min(max_len)).collect();
        if lengths.contains(&0) {
            return Err(CaeError::Contract("batch contains an empty sentence".into()));
        }
        let width = *lengths.iter().max().expect("non-empty");
        let mut inputs = vec![PAD; sentences.len() * width];
        for (r, (s, &len)) in sentences.iter().zip(&lengths).enumerate() {
            inputs[r * width..r * width + len].copy_from_slice(&s[..len]);
        }
        Ok(Self {
            inputs,
            lengths,
            width,
            style,
            sentence_ids: (0..sentences.len()).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn token(&self, row: usize, t: usize) -> usize {
        self.inputs[row * self.width + t]
    }

    pub fn sentence(&self, row: usize) -> &[usize] {
        &self.inputs[row * self.width..row * self.width + self.lengths[row]]
    }

    /// Column `t` of the input matrix.
    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.size()).map(|r| self.token(r, t)).collect()
    }

    /// Decoder unroll length: every row gets its tokens plus a trailing eos.
    pub fn decoder_steps(&self) -> usize {
        self.width + 1
    }

    /// Decoder input ids at step `t`: bos first, then the gold tokens.
    pub fn decoder_inputs(&self, t: usize) -> Vec<usize> {
        (0..self.size())
            .map(|r| {
                if t == 0 {
                    BOS
                } else if t <= self.lengths[r] {
                    self.token(r, t - 1)
                } else {
                    PAD
                }
            })
            .collect()
    }

    /// Decoder targets at step `t`: the gold token, eos at the true length,
    /// pad afterwards.
    pub fn decoder_targets(&self, t: usize) -> Vec<usize> {
        (0..self.size())
            .map(|r| match t.cmp(&self.lengths[r]) {
                std::cmp::Ordering::Less => self.token(r, t),
                std::cmp::Ordering::Equal => EOS,
                std::cmp::Ordering::Greater => PAD,
            })
            .collect()
    }
}

/// One epoch of batches in a seeded order. Every sentence appears exactly once.
pub fn make_batches(corpus: &Corpus, batch_size: usize, max_len: usize, shuffle_seed: u64) -> Result<Vec<Batch>> {
    if batch_size < 1 {
        return Err(CaeError::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let sents: Vec<&[usize]> = chunk.iter().map(|&i| corpus.sentences[i].as_slice()).collect();
            let mut b = Batch::from_sentences(&sents, corpus.style, max_len)?;
            b.sentence_ids = chunk.to_vec();
            Ok(b)
        })
        .collect()
}

/// Batches in corpus order, for evaluation passes.
pub fn sequential_batches(corpus: &Corpus, batch_size: usize, max_len: usize) -> Result<Vec<Batch>> {
    if batch_size < 1 {
        return Err(CaeError::Config("batch_size must be at least 1".into()));
    }
    let idx: Vec<usize> = (0..corpus.len()).collect();
    idx.chunks(batch_size)
        .map(|chunk| {
            let sents: Vec<&[usize]> = chunk.iter().map(|&i| corpus.sentences[i].as_slice()).collect();
            let mut b = Batch::from_sentences(&sents, corpus.style, max_len)?;
            b.sentence_ids = chunk.to_vec();
            Ok(b)
        })
        .collect()
}
