//! Two-style toy corpora from one template grammar.
//!
//! Every sentence is built from shared content slots (subject, verb, object,
//! place, optional time) plus exactly one marker word at either end. The two styles draw their
//! markers from disjoint sets and share everything else, so style is fully
//! determined by the marker and content is fully determined by the rest.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Style;

pub const SUBJECTS: &[&str] = &[
    "waiter", "chef", "manager", "owner", "cashier", "host", "barista", "cook", "driver", "staff",
];
pub const VERBS: &[&str] = &[
    "served",
    "cooked",
    "brought",
    "packed",
    "poured",
    "sliced",
    "grilled",
    "delivered",
    "plated",
    "baked",
];
pub const OBJECTS: &[&str] = &[
    "pasta", "soup", "steak", "salad", "pizza", "coffee", "burger", "bread", "noodles", "tacos",
];
pub const PLACES: &[&str] = &[
    "downtown", "upstairs", "outside", "nearby", "inside", "uptown", "indoors", "overseas",
];
pub const TIMES: &[&str] = &[
    "tonight",
    "today",
    "yesterday",
    "early",
    "late",
    "again",
    "twice",
    "weekly",
];
pub const MARKERS_1: &[&str] = &["wonderful", "delicious", "fantastic", "lovely", "excellent", "amazing"];
pub const MARKERS_2: &[&str] = &["terrible", "awful", "disgusting", "horrible", "bland", "dreadful"];

pub fn markers(style: Style) -> &'static [&'static str] {
    match style {
        Style::S1 => MARKERS_1,
        Style::S2 => MARKERS_2,
    }
}

/// The style-neutral part of a sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Content {
    pub subject: usize,
    pub verb: usize,
    pub object: usize,
    pub place: usize,
    pub time: Option<usize>,
    /// Marker first instead of last.
    pub marker_first: bool,
}

/// Zipf-like rank sampler: word `i` has weight `1 / (i + 1)`.
fn zipf(rng: &mut impl Rng, n: usize) -> usize {
    let total: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
    let mut u = rng.gen::<f64>() * total;
    for i in 0..n {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return i;
        }
    }
    n - 1
}

impl Content {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let subject = zipf(rng, SUBJECTS.len());
        // verbs and objects lean on the subject so slots are correlated
        let verb = (subject + zipf(rng, VERBS.len())) % VERBS.len();
        let object = (verb * 3 + zipf(rng, OBJECTS.len())) % OBJECTS.len();
        Self {
            subject,
            verb,
            object,
            place: zipf(rng, PLACES.len()),
            time: rng.gen_bool(0.5).then(|| zipf(rng, TIMES.len())),
            marker_first: rng.gen_bool(0.25),
        }
    }

    /// Renders with the given marker word.
    pub fn render(&self, marker: &str) -> String {
        let mut words = Vec::with_capacity(6);
        if self.marker_first {
            words.push(marker);
        }
        words.extend([
            SUBJECTS[self.subject],
            VERBS[self.verb],
            OBJECTS[self.object],
            PLACES[self.place],
        ]);
        if let Some(t) = self.time {
            words.push(TIMES[t]);
        }
        if !self.marker_first {
            words.push(marker);
        }
        words.join(" ")
    }
}

/// `n` sentences of `style`, deterministic per seed.
pub fn generate(style: Style, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (style.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let set = markers(style);
    (0..n)
        .map(|_| {
            let content = Content::sample(&mut rng);
            let marker = set.choose(&mut rng).expect("non-empty marker set");
            content.render(marker)
        })
        .collect()
}

/// Whether `tokens` contain a marker word of `style`.
pub fn has_marker(tokens: &[&str], style: Style) -> bool {
    tokens.iter().any(|t| markers(style).contains(t))
}
