//! Synthetic two-class sentence corpus.
//!
//! Both classes draw tokens uniformly from their own vocabulary, 30% of which
//! is shared with the other class. With probability `marker_prob` a sentence
//! also carries one class-exclusive marker token.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledText};

const LEXICON_SEED: u64 = 0x1e81c0;
const SHARED_WORDS: usize = 600;
const EXCLUSIVE_WORDS: usize = 1400;
const MARKERS_PER_CLASS: usize = 5;

static LEXICON: LazyLock<Lexicon> = LazyLock::new(Lexicon::build);

/// The fixed word lists every corpus and scene draws from.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub shared: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub positive_markers: Vec<String>,
    pub negative_markers: Vec<String>,
}

impl Lexicon {
    pub fn standard() -> &'static Lexicon {
        &LEXICON
    }

    fn build() -> Self {
        const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
        let mut seen = BTreeSet::new();
        let mut words = Vec::new();
        let total = SHARED_WORDS + 2 * EXCLUSIVE_WORDS + 2 * MARKERS_PER_CLASS;
        while words.len() < total {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(*CONSONANTS.choose(&mut rng).unwrap() as char);
                w.push(*VOWELS.choose(&mut rng).unwrap() as char);
            }
            if rng.gen_bool(0.3) {
                w.push(*CONSONANTS.choose(&mut rng).unwrap() as char);
            }
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let mut it = words.into_iter();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<_>>();
        Self {
            shared: take(SHARED_WORDS),
            positive: take(EXCLUSIVE_WORDS),
            negative: take(EXCLUSIVE_WORDS),
            positive_markers: take(MARKERS_PER_CLASS),
            negative_markers: take(MARKERS_PER_CLASS),
        }
    }

    fn class_words(&self, label: Label) -> (&[String], &[String]) {
        match label {
            Label::Positive => (&self.positive, &self.positive_markers),
            Label::Negative => (&self.negative, &self.negative_markers),
        }
    }

    /// Fraction of a class vocabulary that is shared with the other class.
    pub fn shared_fraction(&self) -> f64 {
        self.shared.len() as f64 / (self.shared.len() + self.positive.len()) as f64
    }

    /// One sentence of `label` with a length drawn from `lengths`.
    pub fn sentence(
        &self,
        rng: &mut impl Rng,
        label: Label,
        lengths: std::ops::RangeInclusive<usize>,
        marker_prob: f64,
    ) -> String {
        let (exclusive, markers) = self.class_words(label);
        let vocab_len = self.shared.len() + exclusive.len();
        let len = rng.gen_range(lengths);
        let mut tokens: Vec<&str> = (0..len)
            .map(|_| {
                let i = rng.gen_range(0..vocab_len);
                if i < self.shared.len() {
                    self.shared[i].as_str()
                } else {
                    exclusive[i - self.shared.len()].as_str()
                }
            })
            .collect();
        if rng.gen_bool(marker_prob) {
            let at = rng.gen_range(0..len);
            tokens[at] = markers.choose(rng).unwrap();
        }
        tokens.join(" ")
    }

    /// Accuracy of the Bayes-optimal classifier under `params`. Only
    /// marker-free sentences built entirely from shared words are ambiguous,
    /// and those are a coin flip at equal priors.
    pub fn bayes_accuracy(&self, params: &CorpusParams) -> f64 {
        let q = self.shared_fraction();
        let lengths = params.min_len..=params.max_len;
        let count = lengths.clone().count() as f64;
        let all_shared: f64 = lengths.map(|l| q.powi(l as i32)).sum::<f64>() / count;
        1.0 - 0.5 * (1.0 - params.marker_prob) * all_shared
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Test sentences per class.
    pub n_test: usize,
    pub marker_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            n_pos: 1652,
            n_neg: 15184,
            n_test: 187,
            marker_prob: 0.6,
            min_len: 5,
            max_len: 20,
        }
    }
}

impl CorpusParams {
    /// A corpus where every sentence carries a marker, so the classes are
    /// linearly separable.
    pub fn separable() -> Self {
        Self {
            marker_prob: 1.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub params: CorpusParams,
    pub train_pos: Vec<String>,
    pub train_neg: Vec<String>,
    /// `n_test` sentences of each class, alternating positive and negative.
    pub test: Vec<LabeledText>,
}

pub fn synth_corpus(seed: u64, n_pos: usize, n_neg: usize, n_test: usize) -> Corpus {
    synth_corpus_with(
        seed,
        &CorpusParams {
            n_pos,
            n_neg,
            n_test,
            ..CorpusParams::default()
        },
    )
}

pub fn synth_corpus_with(seed: u64, params: &CorpusParams) -> Corpus {
    let lex = Lexicon::standard();
    let lengths = params.min_len..=params.max_len;
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_7e57);
    let gen = |rng: &mut ChaCha8Rng, label, n| {
        (0..n)
            .map(|_| lex.sentence(rng, label, lengths.clone(), params.marker_prob))
            .collect::<Vec<_>>()
    };
    let train_pos = gen(&mut train_rng, Label::Positive, params.n_pos);
    let train_neg = gen(&mut train_rng, Label::Negative, params.n_neg);
    let test_pos = gen(&mut test_rng, Label::Positive, params.n_test);
    let test_neg = gen(&mut test_rng, Label::Negative, params.n_test);
    let test = test_pos
        .into_iter()
        .zip(test_neg)
        .flat_map(|(p, n)| [LabeledText::new(p, Label::Positive), LabeledText::new(n, Label::Negative)])
        .collect();
    Corpus {
        params: params.clone(),
        train_pos,
        train_neg,
        test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::tokenize;

    #[test]
    fn lexicon_partitions_are_disjoint() {
        let lex = Lexicon::standard();
        let mut all = BTreeSet::new();
        for list in [&lex.shared, &lex.positive, &lex.negative, &lex.positive_markers, &lex.negative_markers] {
            for w in list {
                assert!(all.insert(w.clone()), "{w} repeated");
            }
        }
        assert!((lex.shared_fraction() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(synth_corpus(5, 20, 30, 10), synth_corpus(5, 20, 30, 10));
        assert_ne!(synth_corpus(5, 20, 30, 10), synth_corpus(6, 20, 30, 10));
    }

    #[test]
    fn sentence_lengths_and_sizes() {
        let c = synth_corpus(1, 50, 60, 7);
        assert_eq!((c.train_pos.len(), c.train_neg.len(), c.test.len()), (50, 60, 14));
        for s in c.train_pos.iter().chain(&c.train_neg) {
            let n = tokenize(s).len();
            assert!((5..=20).contains(&n), "{s}");
        }
    }

    #[test]
    fn separable_variant_always_has_a_marker() {
        let lex = Lexicon::standard();
        let c = synth_corpus_with(2, &CorpusParams { n_pos: 200, n_neg: 200, n_test: 10, ..CorpusParams::separable() });
        for s in &c.train_pos {
            assert!(tokenize(s).iter().any(|t| lex.positive_markers.contains(t)));
        }
        for s in &c.train_neg {
            assert!(tokenize(s).iter().any(|t| lex.negative_markers.contains(t)));
        }
    }

    #[test]
    fn bayes_accuracy_below_one_by_default() {
        // Closed form: 1 - 0.5 * 0.4 * mean_{L=5..20} 0.3^L.
        let lex = Lexicon::standard();
        let expected = 1.0 - 0.2 * (5..=20).map(|l| 0.3f64.powi(l)).sum::<f64>() / 16.0;
        let got = lex.bayes_accuracy(&CorpusParams::default());
        assert!((got - expected).abs() < 1e-15);
        assert!(got < 1.0);
        assert_eq!(lex.bayes_accuracy(&CorpusParams::separable()), 1.0);
    }

    #[test]
    fn markers_absent_in_about_forty_percent() {
        let lex = Lexicon::standard();
        let c = synth_corpus(3, 4000, 1, 1);
        let without = c
            .train_pos
            .iter()
            .filter(|s| !tokenize(s).iter().any(|t| lex.positive_markers.contains(t)))
            .count() as f64
            / 4000.0;
        assert!((without - 0.4).abs() < 0.03, "{without}");
    }
}
