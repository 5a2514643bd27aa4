//! Informants and the languages they judge.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Label;
use crate::phonology::{
    active_set, sample_word_of_length, FeatureId, FeatureSpec, FeatureValue, Polarity, TrigramConstraint, WordForm,
    CONSTRAINT_COUNT, MAX_SYLLABLES, MIN_SYLLABLES,
};

/// A black-box judge of word forms.
pub trait Informant {
    fn judge(&self, word: &WordForm) -> Label;
}

/// Rejects a word iff two adjacent vowels are both specified for ATR and disagree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AtrInformant;

impl Informant for AtrInformant {
    fn judge(&self, word: &WordForm) -> Label {
        atr_judge(word)
    }
}

pub fn atr_judge(word: &WordForm) -> Label {
    let clash = word.syllables().windows(2).any(|pair| {
        let a = pair[0].nucleus.segment().value(FeatureId::Atr);
        let b = pair[1].nucleus.segment().value(FeatureId::Atr);
        a != FeatureValue::Unspecified && b != FeatureValue::Unspecified && a != b
    });
    Label::from_bool(!clash)
}

/// Accepts a word iff none of its active constraints is penalized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintInformant {
    penalized: [bool; CONSTRAINT_COUNT],
}

impl ConstraintInformant {
    pub fn new<I: IntoIterator<Item = usize>>(penalized: I) -> Self {
        let mut mask = [false; CONSTRAINT_COUNT];
        for j in penalized {
            mask[j] = true;
        }
        ConstraintInformant { penalized: mask }
    }

    pub fn penalized(&self) -> impl Iterator<Item = usize> + '_ {
        self.penalized.iter().enumerate().filter(|(_, p)| **p).map(|(j, _)| j)
    }
}

impl Informant for ConstraintInformant {
    fn judge(&self, word: &WordForm) -> Label {
        Label::from_bool(active_set(word).iter().all(|j| !self.penalized[j]))
    }
}

/// The ATR harmony grammar as penalized trigrams: an ATR disagreement in the
/// first two slots followed by anything.
pub fn atr_theta_star() -> BTreeSet<usize> {
    let plus = FeatureSpec::new(FeatureId::Atr, Polarity::Plus);
    let minus = FeatureSpec::new(FeatureId::Atr, Polarity::Minus);
    FeatureSpec::ALL
        .iter()
        .flat_map(|&third| {
            [TrigramConstraint::new([plus, minus, third]), TrigramConstraint::new([minus, plus, third])]
        })
        .map(|c| c.index())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageKind {
    Atr,
    Generated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub kind: LanguageKind,
    pub lexicon_size: usize,
    pub test_size: usize,
    pub length_lambda: f64,
    pub length_bounds: (usize, usize),
}

pub const PENALIZED_PER_LANGUAGE: usize = 16;
pub const ATR_LEXICON_SIZE: usize = 157;
pub const ATR_TEST_SIZE: usize = 1010;
/// Lexicon and test size for generated languages; a multiple of eight so the
/// test set splits evenly over four lengths and two labels.
pub const GENERATED_SET_SIZE: usize = 160;
const DRAW_BUDGET: usize = 1_000_000;
const LANGUAGE_ATTEMPTS: usize = 1_000;

impl LanguageSpec {
    pub fn atr() -> Self {
        LanguageSpec {
            kind: LanguageKind::Atr,
            lexicon_size: ATR_LEXICON_SIZE,
            test_size: ATR_TEST_SIZE,
            length_lambda: 2.0,
            length_bounds: (MIN_SYLLABLES, MAX_SYLLABLES),
        }
    }

    pub fn generated() -> Self {
        LanguageSpec {
            kind: LanguageKind::Generated,
            lexicon_size: GENERATED_SET_SIZE,
            test_size: GENERATED_SET_SIZE,
            ..Self::atr()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub word: WordForm,
    pub label: Label,
}

/// A complete language: its grammar, a lexicon of acceptable words and a
/// labelled test set disjoint from the lexicon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Language {
    pub spec: LanguageSpec,
    pub penalized_indices: Vec<usize>,
    pub lexicon: Vec<WordForm>,
    pub eval: Vec<EvalItem>,
}

/// The judge for a language.
#[derive(Clone, Debug)]
pub enum LanguageInformant {
    Atr(AtrInformant),
    Constraint(ConstraintInformant),
}

impl Informant for LanguageInformant {
    fn judge(&self, word: &WordForm) -> Label {
        match self {
            LanguageInformant::Atr(i) => i.judge(word),
            LanguageInformant::Constraint(i) => i.judge(word),
        }
    }
}

impl Language {
    pub fn informant(&self) -> LanguageInformant {
        match self.spec.kind {
            LanguageKind::Atr => LanguageInformant::Atr(AtrInformant),
            LanguageKind::Generated => {
                LanguageInformant::Constraint(ConstraintInformant::new(self.penalized_indices.iter().copied()))
            }
        }
    }

    pub fn eval_words(&self) -> BTreeSet<WordForm> {
        self.eval.iter().map(|e| e.word.clone()).collect()
    }
}

/// 16 distinct constraint indices, uniformly without replacement.
pub fn gen_penalized<R: Rng + ?Sized>(rng: &mut R) -> Vec<usize> {
    let mut v = index::sample(rng, CONSTRAINT_COUNT, PENALIZED_PER_LANGUAGE).into_vec();
    v.sort_unstable();
    v
}

fn sample_length<R: Rng + ?Sized>(rng: &mut R, spec: &LanguageSpec) -> usize {
    let poisson = Poisson::new(spec.length_lambda).expect("positive rate");
    let (lo, hi) = spec.length_bounds;
    loop {
        let n = poisson.sample(rng) as usize;
        if (lo..=hi).contains(&n) {
            return n;
        }
    }
}

/// `spec.lexicon_size` distinct accepted words with truncated-Poisson lengths.
pub fn build_lexicon<R: Rng + ?Sized, I: Informant + ?Sized>(
    rng: &mut R,
    informant: &I,
    spec: &LanguageSpec,
) -> Result<Vec<WordForm>> {
    let mut seen = BTreeSet::new();
    let mut lexicon = Vec::with_capacity(spec.lexicon_size);
    for _ in 0..DRAW_BUDGET {
        if lexicon.len() == spec.lexicon_size {
            return Ok(lexicon);
        }
        let len = sample_length(rng, spec);
        let word = sample_word_of_length(rng, len);
        if seen.contains(&word) || !informant.judge(&word).is_acceptable() {
            continue;
        }
        seen.insert(word.clone());
        lexicon.push(word);
    }
    if lexicon.len() == spec.lexicon_size {
        Ok(lexicon)
    } else {
        Err(Error::Quota { what: "lexicon", draws: DRAW_BUDGET })
    }
}

/// Splits `total` as evenly as possible over `parts`, larger shares first.
fn even_split(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

/// The labelled test set.
///
/// ATR: uniform random words stratified evenly over lengths, labels as they
/// fall. Generated: also an exact half/half split of labels within each length.
pub fn build_eval_set<R: Rng + ?Sized, I: Informant + ?Sized>(
    rng: &mut R,
    informant: &I,
    spec: &LanguageSpec,
    lexicon: &[WordForm],
) -> Result<Vec<EvalItem>> {
    let (lo, hi) = spec.length_bounds;
    let lengths: Vec<usize> = (lo..=hi).collect();
    let per_length = even_split(spec.test_size, lengths.len());
    let mut taken: BTreeSet<WordForm> = lexicon.iter().cloned().collect();
    let mut items = Vec::with_capacity(spec.test_size);
    let mut draws = 0usize;
    for (&len, &quota) in lengths.iter().zip(&per_length) {
        // (acceptable quota, unacceptable quota); None means unconstrained.
        let mut label_quota = match spec.kind {
            LanguageKind::Atr => None,
            LanguageKind::Generated => Some((quota / 2, quota - quota / 2)),
        };
        let mut filled = 0;
        while filled < quota {
            draws += 1;
            if draws > DRAW_BUDGET {
                return Err(Error::Quota { what: "evaluation set", draws: DRAW_BUDGET });
            }
            let word = sample_word_of_length(rng, len);
            if taken.contains(&word) {
                continue;
            }
            let label = informant.judge(&word);
            if let Some((pos, neg)) = label_quota.as_mut() {
                let slot = if label.is_acceptable() { pos } else { neg };
                if *slot == 0 {
                    continue;
                }
                *slot -= 1;
            }
            taken.insert(word.clone());
            items.push(EvalItem { word, label });
            filled += 1;
        }
    }
    Ok(items)
}

pub fn build_atr_language<R: Rng + ?Sized>(rng: &mut R) -> Result<Language> {
    let spec = LanguageSpec::atr();
    let lexicon = build_lexicon(rng, &AtrInformant, &spec)?;
    let eval = build_eval_set(rng, &AtrInformant, &spec, &lexicon)?;
    Ok(Language { spec, penalized_indices: atr_theta_star().into_iter().collect(), lexicon, eval })
}

/// Samples penalized sets until one yields viable lexicon and test quotas.
pub fn gen_language<R: Rng + ?Sized>(rng: &mut R) -> Result<Language> {
    let spec = LanguageSpec::generated();
    for attempt in 0..LANGUAGE_ATTEMPTS {
        let penalized = gen_penalized(rng);
        let informant = ConstraintInformant::new(penalized.iter().copied());
        let built = build_lexicon(rng, &informant, &spec)
            .and_then(|lexicon| build_eval_set(rng, &informant, &spec, &lexicon).map(|eval| (lexicon, eval)));
        match built {
            Ok((lexicon, eval)) => {
                return Ok(Language { spec, penalized_indices: penalized, lexicon, eval });
            }
            Err(Error::Quota { what, .. }) => {
                log::debug!("generated language attempt {attempt} failed its {what} quota; resampling");
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::LanguageGeneration { attempts: LANGUAGE_ATTEMPTS })
}
