//! Automatic metrics: transfer rate, BLEU, perplexity, reverse perplexity,
//! and Jaccard nearest neighbours.

pub mod bleu;
pub mod classifier;
pub mod jaccard;
pub mod lm;
pub mod report;

pub use bleu::{corpus_bleu, modified_precision, sentence_bleu};
pub use classifier::{train_classifier, transfer_rate, ClassifierConfig, StyleClassifier};
pub use jaccard::{jaccard_distance, nearest_neighbor_jaccard, JaccardIndex};
pub use lm::{perplexity, reverse_perplexity, train_lm, LanguageModel, LmConfig, RPPL_MIN_SENTENCES};
pub use report::{build_report, top_trigram_share, EvalReport, SentenceRecord};
