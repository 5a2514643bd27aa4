//! Segments, features, word forms and the feature-trigram constraint space.
//!
//! Words are sequences of CV syllables over a fixed inventory of four
//! consonants and five vowels. Constraints are evaluated on the vowel tier,
//! padded on both sides with a boundary segment `#`, by sliding a window of
//! three tier positions across it.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Phonological features known to the grammar. `Wb` is the word-boundary feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureId {
    High,
    Low,
    Atr,
    Wb,
}

impl FeatureId {
    pub const ALL: [FeatureId; 4] = [FeatureId::High, FeatureId::Low, FeatureId::Atr, FeatureId::Wb];

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::High => "high",
            FeatureId::Low => "low",
            FeatureId::Atr => "atr",
            FeatureId::Wb => "wb",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureValue {
    Plus,
    Minus,
    Unspecified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Plus,
    Minus,
}

impl Polarity {
    fn value(self) -> FeatureValue {
        match self {
            Polarity::Plus => FeatureValue::Plus,
            Polarity::Minus => FeatureValue::Minus,
        }
    }

    fn sign(self) -> char {
        match self {
            Polarity::Plus => '+',
            Polarity::Minus => '-',
        }
    }
}

/// A segment with a value for every feature.
#[derive(Debug, PartialEq, Eq)]
pub struct Segment {
    pub symbol: &'static str,
    values: [FeatureValue; 4],
}

impl Segment {
    pub fn value(&self, feature: FeatureId) -> FeatureValue {
        self.values[feature.slot()]
    }
}

use FeatureValue::{Minus as M, Plus as P, Unspecified as U};

const fn consonant(symbol: &'static str) -> Segment {
    Segment { symbol, values: [U, U, U, M] }
}

pub static CONSONANT_SEGMENTS: [Segment; 4] = [consonant("p"), consonant("t"), consonant("k"), consonant("q")];

// [high, low, atr, wb]
pub static VOWEL_SEGMENTS: [Segment; 5] = [
    Segment { symbol: "i", values: [P, M, P, M] },
    Segment { symbol: "ɪ", values: [P, M, M, M] },
    Segment { symbol: "e", values: [M, M, P, M] },
    Segment { symbol: "ɛ", values: [M, M, M, M] },
    Segment { symbol: "a", values: [M, P, U, M] },
];

pub static BOUNDARY: Segment = Segment { symbol: "#", values: [U, U, U, P] };

/// The fixed segment inventory. Ordering of consonants and vowels is
/// significant: it defines syllable codes used by the samplers.
#[derive(Debug)]
pub struct SegmentInventory {
    pub consonants: &'static [Segment; 4],
    pub vowels: &'static [Segment; 5],
    pub boundary: &'static Segment,
}

pub static INVENTORY: SegmentInventory = SegmentInventory {
    consonants: &CONSONANT_SEGMENTS,
    vowels: &VOWEL_SEGMENTS,
    boundary: &BOUNDARY,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Consonant {
    P,
    T,
    K,
    Q,
}

impl Consonant {
    pub const ALL: [Consonant; 4] = [Consonant::P, Consonant::T, Consonant::K, Consonant::Q];

    pub fn segment(self) -> &'static Segment {
        &CONSONANT_SEGMENTS[self as usize]
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            'p' => Some(Consonant::P),
            't' => Some(Consonant::T),
            'k' => Some(Consonant::K),
            'q' => Some(Consonant::Q),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vowel {
    /// i
    I,
    /// ɪ
    LaxI,
    /// e
    E,
    /// ɛ
    LaxE,
    /// a
    A,
}

impl Vowel {
    pub const ALL: [Vowel; 5] = [Vowel::I, Vowel::LaxI, Vowel::E, Vowel::LaxE, Vowel::A];

    pub fn segment(self) -> &'static Segment {
        &VOWEL_SEGMENTS[self as usize]
    }

    /// Accepts the IPA symbol or the ASCII stand-ins `I` (ɪ) and `E` (ɛ).
    fn from_char(c: char) -> Option<Self> {
        match c {
            'i' => Some(Vowel::I),
            'ɪ' | 'I' => Some(Vowel::LaxI),
            'e' => Some(Vowel::E),
            'ɛ' | 'E' => Some(Vowel::LaxE),
            'a' => Some(Vowel::A),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Syllable {
    pub onset: Consonant,
    pub nucleus: Vowel,
}

impl Syllable {
    pub const COUNT: usize = 20;

    /// Syllable with code `onset * 5 + nucleus`.
    pub fn from_code(code: usize) -> Self {
        assert!(code < Self::COUNT, "syllable code out of range");
        Syllable { onset: Consonant::ALL[code / 5], nucleus: Vowel::ALL[code % 5] }
    }

    pub fn code(self) -> usize {
        self.onset as usize * 5 + self.nucleus as usize
    }

    pub fn all() -> impl Iterator<Item = Syllable> {
        (0..Self::COUNT).map(Syllable::from_code)
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.onset.segment().symbol)?;
        f.write_str(self.nucleus.segment().symbol)
    }
}

/// A non-empty sequence of CV syllables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordForm {
    syllables: Vec<Syllable>,
}

impl WordForm {
    pub fn new(syllables: Vec<Syllable>) -> Result<Self> {
        if syllables.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(WordForm { syllables })
    }

    pub fn syllables(&self) -> &[Syllable] {
        &self.syllables
    }

    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn reversed(&self) -> WordForm {
        let mut syllables = self.syllables.clone();
        syllables.reverse();
        WordForm { syllables }
    }

    /// Copy of the word with `syllable` inserted before position `at`.
    pub fn with_inserted(&self, at: usize, syllable: Syllable) -> WordForm {
        let mut syllables = self.syllables.clone();
        syllables.insert(at, syllable);
        WordForm { syllables }
    }

    /// All words of exactly `len` syllables, in syllable-code order.
    pub fn enumerate(len: usize) -> impl Iterator<Item = WordForm> {
        let total = Syllable::COUNT.pow(len as u32);
        (0..total).map(move |mut n| {
            let mut syllables = alloc::vec![Syllable::from_code(0); len];
            for slot in syllables.iter_mut().rev() {
                *slot = Syllable::from_code(n % Syllable::COUNT);
                n /= Syllable::COUNT;
            }
            WordForm { syllables }
        })
    }
}

impl fmt::Display for WordForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.syllables {
            fmt::Display::fmt(s, f)?;
        }
        Ok(())
    }
}

impl FromStr for WordForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut syllables = Vec::new();
        let mut chars = s.chars().filter(|c| *c != '.');
        while let Some(c) = chars.next() {
            let onset = Consonant::from_char(c).ok_or_else(|| Error::ParseWord(String::from(s)))?;
            let nucleus = chars
                .next()
                .and_then(Vowel::from_char)
                .ok_or_else(|| Error::ParseWord(String::from(s)))?;
            syllables.push(Syllable { onset, nucleus });
        }
        if syllables.is_empty() {
            return Err(Error::ParseWord(String::from(s)));
        }
        Ok(WordForm { syllables })
    }
}

impl Serialize for WordForm {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WordForm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The vowel tier `[#, v1, ..., vn, #]`.
pub fn vowel_tier(word: &WordForm) -> Vec<&'static Segment> {
    let mut tier = Vec::with_capacity(word.len() + 2);
    tier.push(&BOUNDARY);
    tier.extend(word.syllables.iter().map(|s| s.nucleus.segment()));
    tier.push(&BOUNDARY);
    tier
}

/// A single feature specification usable as a constraint slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureSpec {
    pub feature: FeatureId,
    pub polarity: Polarity,
}

impl FeatureSpec {
    /// All eight specs in code order: high+, high-, low+, low-, atr+, atr-, wb+, wb-.
    pub const ALL: [FeatureSpec; 8] = {
        let mut all = [FeatureSpec { feature: FeatureId::High, polarity: Polarity::Plus }; 8];
        let mut i = 0;
        while i < 8 {
            all[i] = FeatureSpec {
                feature: FeatureId::ALL[i / 2],
                polarity: if i % 2 == 0 { Polarity::Plus } else { Polarity::Minus },
            };
            i += 1;
        }
        all
    };

    pub const fn new(feature: FeatureId, polarity: Polarity) -> Self {
        FeatureSpec { feature, polarity }
    }

    pub fn code(self) -> usize {
        self.feature.slot() * 2 + matches!(self.polarity, Polarity::Minus) as usize
    }

    pub fn from_code(code: usize) -> Self {
        Self::ALL[code]
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}{}]", self.polarity.sign(), self.feature.name())
    }
}

/// True iff the segment carries exactly the spec's value. Unspecified matches nothing.
pub fn matches(spec: FeatureSpec, seg: &Segment) -> bool {
    seg.value(spec.feature) == spec.polarity.value()
}

/// Bitmask over spec codes matched by `seg`.
fn spec_mask(seg: &Segment) -> u8 {
    FeatureSpec::ALL
        .iter()
        .enumerate()
        .filter(|(_, spec)| matches(**spec, seg))
        .fold(0u8, |mask, (code, _)| mask | (1 << code))
}

pub const CONSTRAINT_COUNT: usize = 512;

/// An ordered triple of feature specs over three adjacent tier positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrigramConstraint {
    pub slots: [FeatureSpec; 3],
}

impl TrigramConstraint {
    pub fn new(slots: [FeatureSpec; 3]) -> Self {
        TrigramConstraint { slots }
    }

    /// Base-8 positional code of the three slots.
    pub fn index(&self) -> usize {
        64 * self.slots[0].code() + 8 * self.slots[1].code() + self.slots[2].code()
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= CONSTRAINT_COUNT {
            return Err(Error::ConstraintIndex(index));
        }
        Ok(TrigramConstraint {
            slots: [
                FeatureSpec::from_code(index / 64),
                FeatureSpec::from_code((index / 8) % 8),
                FeatureSpec::from_code(index % 8),
            ],
        })
    }

    pub fn matches_window(&self, window: &[&Segment]) -> bool {
        window.len() == 3 && self.slots.iter().zip(window).all(|(spec, seg)| matches(*spec, seg))
    }
}

impl fmt::Display for TrigramConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.slots {
            fmt::Display::fmt(s, f)?;
        }
        Ok(())
    }
}

impl FromStr for TrigramConstraint {
    type Err = Error;

    /// Parses `[+high][-atr][+wb]`; the feature name is case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ParseConstraint(String::from(s));
        let mut slots = [FeatureSpec::ALL[0]; 3];
        let mut rest = s.trim();
        for slot in slots.iter_mut() {
            let inner = rest.strip_prefix('[').ok_or_else(bad)?;
            let end = inner.find(']').ok_or_else(bad)?;
            let body = &inner[..end];
            rest = &inner[end + 1..];
            let mut chars = body.chars();
            let polarity = match chars.next() {
                Some('+') => Polarity::Plus,
                Some('-') | Some('−') => Polarity::Minus,
                _ => return Err(bad()),
            };
            let name = chars.as_str();
            let feature = FeatureId::ALL
                .into_iter()
                .find(|f| f.name().eq_ignore_ascii_case(name))
                .ok_or_else(bad)?;
            *slot = FeatureSpec { feature, polarity };
        }
        if !rest.is_empty() {
            return Err(bad());
        }
        Ok(TrigramConstraint { slots })
    }
}

/// All 512 constraints, indexed without gaps.
#[derive(Clone, Debug)]
pub struct ConstraintSpace {
    all: Vec<TrigramConstraint>,
}

impl ConstraintSpace {
    pub fn new() -> Self {
        let all = (0..CONSTRAINT_COUNT)
            .map(|i| TrigramConstraint::from_index(i).expect("index in range"))
            .collect();
        ConstraintSpace { all }
    }

    pub fn all(&self) -> &[TrigramConstraint] {
        &self.all
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&TrigramConstraint> {
        self.all.get(index)
    }
}

impl Default for ConstraintSpace {
    fn default() -> Self {
        Self::new()
    }
}

/// Sorted, de-duplicated constraint indices active for a word.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActiveSet(Vec<u16>);

impl ActiveSet {
    pub fn empty() -> Self {
        ActiveSet(Vec::new())
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut v: Vec<u16> = indices.into_iter().map(|i| i as u16).collect();
        v.sort_unstable();
        v.dedup();
        ActiveSet(v)
    }

    pub fn indices(&self) -> &[u16] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&i| i as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&(index as u16)).is_ok()
    }

    pub fn is_disjoint(&self, other: &ActiveSet) -> bool {
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                core::cmp::Ordering::Less => {
                    a.next();
                }
                core::cmp::Ordering::Greater => {
                    b.next();
                }
                core::cmp::Ordering::Equal => return false,
            }
        }
        true
    }
}

/// φ(x): every constraint matched by some window of three consecutive tier positions.
///
/// The space is always the full 512-constraint space; the argument is kept so
/// callers can be explicit about which space the indices refer to.
pub fn active_constraints(word: &WordForm, _space: &ConstraintSpace) -> ActiveSet {
    active_set(word)
}

pub fn active_set(word: &WordForm) -> ActiveSet {
    let masks: Vec<u8> = vowel_tier(word).into_iter().map(spec_mask).collect();
    let mut hit = [false; CONSTRAINT_COUNT];
    for w in masks.windows(3) {
        for a in bits(w[0]) {
            for b in bits(w[1]) {
                for c in bits(w[2]) {
                    hit[64 * a + 8 * b + c] = true;
                }
            }
        }
    }
    ActiveSet(hit.iter().enumerate().filter(|(_, h)| **h).map(|(i, _)| i as u16).collect())
}

fn bits(mask: u8) -> impl Iterator<Item = usize> {
    (0..8).filter(move |b| mask & (1 << b) != 0)
}

pub const MIN_SYLLABLES: usize = 2;
pub const MAX_SYLLABLES: usize = 5;

/// Uniform length in `[min_syll, max_syll]`, then uniform syllables with replacement.
pub fn sample_candidate<R: Rng + ?Sized>(rng: &mut R, min_syll: usize, max_syll: usize) -> WordForm {
    assert!(1 <= min_syll && min_syll <= max_syll, "invalid syllable bounds");
    let len = rng.random_range(min_syll..=max_syll);
    sample_word_of_length(rng, len)
}

pub fn sample_word_of_length<R: Rng + ?Sized>(rng: &mut R, len: usize) -> WordForm {
    let syllables = (0..len).map(|_| Syllable::from_code(rng.random_range(0..Syllable::COUNT))).collect();
    WordForm { syllables }
}

/// Up to `k` distinct candidates of 2-5 syllables, none in `exclusions`.
///
/// Gives up after `100 * k` draws; fails only if nothing survived filtering.
pub fn sample_candidate_batch<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    exclusions: &BTreeSet<WordForm>,
) -> Result<Vec<WordForm>> {
    sample_candidate_batch_within(rng, k, exclusions, MIN_SYLLABLES, MAX_SYLLABLES)
}

pub fn sample_candidate_batch_within<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    exclusions: &BTreeSet<WordForm>,
    min_syll: usize,
    max_syll: usize,
) -> Result<Vec<WordForm>> {
    assert!(k >= 1, "candidate pool size must be positive");
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    for _ in 0..100 * k {
        if out.len() == k {
            break;
        }
        let w = sample_candidate(rng, min_syll, max_syll);
        if exclusions.contains(&w) || seen.contains(&w) {
            continue;
        }
        seen.insert(w.clone());
        out.push(w);
    }
    if out.is_empty() {
        return Err(Error::CandidatesExhausted { attempts: 100 * k });
    }
    Ok(out)
}
