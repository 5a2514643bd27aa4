//! Mean-field variational posterior over penalized constraints.
//!
//! Each constraint `j` carries an independent Bernoulli belief
//! `q_j = q(θ_j = 1)`. A judgment `y` on a word with active set `A` is
//! perceived correctly with probability `α`, and the word is grammatical iff
//! no constraint in `A` is penalized. Coordinate ascent sets
//!
//! ```text
//! q_j ← σ( logit(prior) + Λ · Σ_{i : j ∈ A_i} (1 − 2 y_i) · ∏_{j' ∈ A_i \ {j}} (1 − q_j') )
//! ```
//!
//! with `Λ = log(α / (1 − α))`, sweeping `j` in ascending order and always
//! reading the freshest values.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::phonology::{active_set, ActiveSet, WordForm, CONSTRAINT_COUNT};

const CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// A single full sweep over every coordinate.
    One,
    /// Sweep until the summed absolute change is at most `epsilon`.
    ToConvergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// `v` with `Λ = exp(v) = log(α / (1 − α))`.
    pub log_log_odds_alpha: f64,
    /// Prior probability that a constraint is penalized.
    pub theta_prior: f64,
    pub steps: SweepMode,
    pub epsilon: f64,
    /// Candidate pool size for synthesizing policies.
    pub k: usize,
    pub max_sweeps: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            log_log_odds_alpha: 0.5,
            theta_prior: 0.1,
            steps: SweepMode::ToConvergence,
            epsilon: 2e-7,
            k: 100,
            max_sweeps: 10_000,
        }
    }
}

impl Hyperparams {
    pub fn new(log_log_odds_alpha: f64, theta_prior: f64, steps: SweepMode) -> Result<Self> {
        let hp = Hyperparams { log_log_odds_alpha, theta_prior, steps, ..Default::default() };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidHyperparams(msg.into()));
        if !(self.theta_prior > 0.0 && self.theta_prior < 1.0) {
            return bad(&format!("theta_prior must lie in (0, 1), got {}", self.theta_prior));
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !self.log_log_odds_alpha.is_finite() || !self.noise_log_odds().is_finite() {
            return bad("log-log-odds of alpha must give a finite log-odds");
        }
        if self.k == 0 {
            return bad("candidate pool size must be positive");
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be positive");
        }
        Ok(())
    }

    /// `Λ = log(α / (1 − α))`.
    pub fn noise_log_odds(&self) -> f64 {
        libm::exp(self.log_log_odds_alpha)
    }

    /// Probability that a judgment is perceived correctly.
    pub fn alpha(&self) -> f64 {
        sigmoid(self.noise_log_odds())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Unacceptable,
    Acceptable,
}

impl Label {
    pub fn from_bool(accept: bool) -> Self {
        if accept {
            Label::Acceptable
        } else {
            Label::Unacceptable
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_acceptable(self) -> bool {
        self == Label::Acceptable
    }

    /// `1 − 2y`: the direction the judgment pushes the logits of its constraints.
    fn sign(self) -> f64 {
        match self {
            Label::Acceptable => -1.0,
            Label::Unacceptable => 1.0,
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        match u8::deserialize(deserializer)? {
            0 => Ok(Label::Unacceptable),
            1 => Ok(Label::Acceptable),
            other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// What the model sees of an observation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub active: ActiveSet,
    pub label: Label,
}

/// Append-only judgments with an inverted constraint → judgment index.
#[derive(Clone, Debug)]
pub struct Evidence {
    dim: usize,
    judgments: Vec<Judgment>,
    by_constraint: Vec<Vec<u32>>,
}

impl Evidence {
    pub fn new(dim: usize) -> Self {
        Evidence { dim, judgments: Vec::new(), by_constraint: vec![Vec::new(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    pub fn push(&mut self, judgment: Judgment) -> Result<()> {
        if let Some(bad) = judgment.active.iter().find(|&j| j >= self.dim) {
            return Err(Error::ConstraintIndex(bad));
        }
        let i = self.judgments.len() as u32;
        for j in judgment.active.iter() {
            self.by_constraint[j].push(i);
        }
        self.judgments.push(judgment);
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub word: WordForm,
    pub judgment: Judgment,
}

/// The running `(x, y)` record of a learning run. Words are unique.
#[derive(Clone, Debug)]
pub struct Dataset {
    words: Vec<WordForm>,
    seen: BTreeSet<WordForm>,
    evidence: Evidence,
}

impl Default for Dataset {
    fn default() -> Self {
        Self::new()
    }
}

impl Dataset {
    pub fn new() -> Self {
        Dataset { words: Vec::new(), seen: BTreeSet::new(), evidence: Evidence::new(CONSTRAINT_COUNT) }
    }

    pub fn push(&mut self, word: WordForm, label: Label) -> Result<()> {
        let active = active_set(&word);
        self.push_with_active(word, active, label)
    }

    pub fn push_with_active(&mut self, word: WordForm, active: ActiveSet, label: Label) -> Result<()> {
        if self.seen.contains(&word) {
            return Err(Error::DuplicateObservation(format!("{word}")));
        }
        self.evidence.push(Judgment { active, label })?;
        self.seen.insert(word.clone());
        self.words.push(word);
        Ok(())
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &WordForm) -> bool {
        self.seen.contains(word)
    }

    pub fn words(&self) -> &BTreeSet<WordForm> {
        &self.seen
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WordForm, &Judgment)> {
        self.words.iter().zip(self.evidence.judgments())
    }
}

/// `q_j = q(θ_j = 1)` for every constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Posterior {
    q: Vec<f64>,
}

impl Posterior {
    pub fn prior(dim: usize, theta_prior: f64) -> Self {
        Posterior { q: vec![theta_prior; dim] }
    }

    pub fn from_values(q: Vec<f64>) -> Self {
        Posterior { q }
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

impl Index<usize> for Posterior {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.q[j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub posterior: Posterior,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out before the change fell below `epsilon`.
    pub converged: bool,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

fn log_off(q: f64) -> f64 {
    libm::log1p(-q.clamp(CLAMP, 1.0 - CLAMP))
}

/// f(x) = ∏_{j ∈ A} (1 − q_j), the probability that no active constraint is penalized.
pub fn predict_prob_acceptable(post: &Posterior, active: &ActiveSet) -> f64 {
    active.iter().map(|j| 1.0 - post.q[j]).product()
}

/// Working state for Gauss–Seidel sweeps over `evidence` plus an optional
/// extra judgment that is treated as if appended last.
struct Sweeper<'a> {
    evidence: &'a Evidence,
    extra: Option<&'a Judgment>,
    extra_mask: Vec<bool>,
    /// log(1 − q_j) per coordinate, kept in step with q during a sweep.
    own_log: Vec<f64>,
    /// Σ_{j ∈ A_i} log(1 − q_j) per judgment; the extra one sits at the end.
    log_off: Vec<f64>,
    /// exp(log_off), valid only where log_off is above LINEAR_FLOOR.
    off: Vec<f64>,
    signs: Vec<f64>,
    logit_prior: f64,
    prior: f64,
    strength: f64,
}

const LINEAR_FLOOR: f64 = -600.0;

impl<'a> Sweeper<'a> {
    fn new(evidence: &'a Evidence, extra: Option<&'a Judgment>, hp: &Hyperparams) -> Self {
        let mut extra_mask = vec![false; evidence.dim];
        if let Some(e) = extra {
            for j in e.active.iter() {
                extra_mask[j] = true;
            }
        }
        let rows = evidence.len() + extra.is_some() as usize;
        Sweeper {
            evidence,
            extra,
            extra_mask,
            own_log: vec![0.0; evidence.dim],
            log_off: vec![0.0; rows],
            off: vec![0.0; rows],
            signs: evidence.judgments.iter().chain(extra).map(|j| j.label.sign()).collect(),
            logit_prior: logit(hp.theta_prior),
            prior: hp.theta_prior,
            strength: hp.noise_log_odds(),
        }
    }

    fn judgment(&self, i: usize) -> &Judgment {
        match self.evidence.judgments.get(i) {
            Some(j) => j,
            None => self.extra.expect("extra judgment slot"),
        }
    }

    fn term(&self, i: usize, own: f64, inv_own: f64) -> f64 {
        let l = self.log_off[i];
        if l > LINEAR_FLOOR {
            self.off[i] * inv_own
        } else {
            libm::exp(l - own)
        }
    }

    fn shift(&mut self, i: usize, delta: f64, factor: f64) {
        let old = self.log_off[i];
        let l = old + delta;
        self.log_off[i] = l;
        if l > LINEAR_FLOOR {
            self.off[i] = if old > LINEAR_FLOOR { self.off[i] * factor } else { libm::exp(l) };
        }
    }

    fn init(&mut self, q: &[f64]) {
        for (j, lo) in self.own_log.iter_mut().enumerate() {
            let used = !self.evidence.by_constraint[j].is_empty() || self.extra_mask[j];
            *lo = if used { log_off(q[j]) } else { 0.0 };
        }
    }

    /// One ascending pass over all coordinates; returns Σ|Δq_j|.
    /// `init` must have been called with the same `q` first.
    fn sweep(&mut self, q: &mut [f64]) -> f64 {
        for i in 0..self.log_off.len() {
            let total: f64 = self.judgment(i).active.iter().map(|j| self.own_log[j]).sum();
            self.log_off[i] = total;
            self.off[i] = libm::exp(total);
        }
        let extra_slot = self.evidence.len();
        let mut change = 0.0;
        for j in 0..self.evidence.dim {
            let evidence = self.evidence;
            let rows = &evidence.by_constraint[j];
            let with_extra = self.extra_mask[j];
            let new = if rows.is_empty() && !with_extra {
                self.prior
            } else {
                let own = self.own_log[j];
                let own_lin = 1.0 - q[j].clamp(CLAMP, 1.0 - CLAMP);
                let inv_own = 1.0 / own_lin;
                let mut drive = 0.0;
                for &i in rows {
                    let i = i as usize;
                    drive += self.signs[i] * self.term(i, own, inv_own);
                }
                if with_extra {
                    drive += self.signs[extra_slot] * self.term(extra_slot, own, inv_own);
                }
                let drive = self.strength * drive;
                let new = if drive == 0.0 { self.prior } else { sigmoid(self.logit_prior + drive) };
                let new_log = log_off(new);
                let delta = new_log - own;
                if delta != 0.0 {
                    let factor = (1.0 - new.clamp(CLAMP, 1.0 - CLAMP)) * inv_own;
                    for &i in rows {
                        self.shift(i as usize, delta, factor);
                    }
                    if with_extra {
                        self.shift(extra_slot, delta, factor);
                    }
                }
                self.own_log[j] = new_log;
                new
            };
            change += libm::fabs(new - q[j]);
            q[j] = new;
        }
        change
    }
}

fn check_dim(post: &Posterior, evidence: &Evidence) -> Result<()> {
    if post.len() != evidence.dim() {
        return Err(Error::Dimension { expected: evidence.dim(), found: post.len() });
    }
    Ok(())
}

/// A single coordinate-ascent sweep.
pub fn vb_sweep(post: &Posterior, evidence: &Evidence, hp: &Hyperparams) -> Result<Posterior> {
    check_dim(post, evidence)?;
    let mut q = post.q.clone();
    let mut sweeper = Sweeper::new(evidence, None, hp);
    sweeper.init(&q);
    sweeper.sweep(&mut q);
    Ok(Posterior { q })
}

/// Runs sweeps according to `hp.steps`, starting from `post`.
pub fn fit(post: &Posterior, evidence: &Evidence, hp: &Hyperparams) -> Result<FitOutcome> {
    fit_with(post, evidence, None, hp)
}

fn fit_with(post: &Posterior, evidence: &Evidence, extra: Option<&Judgment>, hp: &Hyperparams) -> Result<FitOutcome> {
    check_dim(post, evidence)?;
    if let Some(bad) = extra.and_then(|e| e.active.iter().find(|&j| j >= evidence.dim())) {
        return Err(Error::ConstraintIndex(bad));
    }
    let mut sweeper = Sweeper::new(evidence, extra, hp);
    let mut q = post.q.clone();
    sweeper.init(&q);
    let (sweeps, converged) = match hp.steps {
        SweepMode::One => {
            sweeper.sweep(&mut q);
            (1, true)
        }
        SweepMode::ToConvergence => {
            let mut sweeps = 0;
            loop {
                let change = sweeper.sweep(&mut q);
                sweeps += 1;
                if change <= hp.epsilon {
                    break (sweeps, true);
                }
                if sweeps >= hp.max_sweeps {
                    log::warn!("variational fit stopped after {sweeps} sweeps (last change {change:e})");
                    break (sweeps, false);
                }
            }
        }
    };
    Ok(FitOutcome { posterior: Posterior { q }, sweeps, converged })
}

/// The posterior that would result from also observing `judgment`.
/// Identical to pushing the judgment and calling [`fit`].
pub fn hypothetical_fit(
    post: &Posterior,
    evidence: &Evidence,
    hp: &Hyperparams,
    judgment: &Judgment,
) -> Result<FitOutcome> {
    fit_with(post, evidence, Some(judgment), hp)
}

pub fn hypothetical_update(
    post: &Posterior,
    data: &Dataset,
    hp: &Hyperparams,
    word: &WordForm,
    label: Label,
) -> Result<FitOutcome> {
    let judgment = Judgment { active: active_set(word), label };
    hypothetical_fit(post, data.evidence(), hp, &judgment)
}

/// Entropy in nats, with `0 · log 0 = 0`.
pub fn bernoulli_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * libm::log(x) };
    term(p) + term(1.0 - p)
}

pub fn posterior_entropy(post: &Posterior) -> f64 {
    post.q.iter().map(|&p| bernoulli_entropy(p)).sum()
}

/// Entropy removed by moving from `before` to `after`. May be negative.
pub fn info_gain(before: &Posterior, after: &Posterior) -> f64 {
    posterior_entropy(before) - posterior_entropy(after)
}

/// Exact posterior by enumeration over a small set of constraints; every
/// constraint outside the set is held unpenalized.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    space: Vec<usize>,
    /// Normalized probability of each configuration, bit `b` ↔ `space[b]`.
    weights: Vec<f64>,
}

impl ExactPosterior {
    pub const MAX_SPACE: usize = 20;

    pub fn new(evidence: &Evidence, hp: &Hyperparams, space: &[usize]) -> Result<Self> {
        if space.len() > Self::MAX_SPACE {
            return Err(Error::SpaceTooLarge(space.len()));
        }
        for w in space.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidHyperparams("restricted space has duplicates".into()));
            }
        }
        let masks: Vec<(u32, bool)> = evidence
            .judgments()
            .iter()
            .map(|jd| {
                let mask = space
                    .iter()
                    .enumerate()
                    .filter(|(_, &j)| jd.active.contains(j))
                    .fold(0u32, |m, (b, _)| m | (1 << b));
                (mask, jd.label.is_acceptable())
            })
            .collect();
        let lambda = hp.noise_log_odds();
        // log α and log(1 − α) for α = σ(Λ).
        let log_correct = -libm::log1p(libm::exp(-lambda));
        let log_noisy = -lambda + log_correct;
        let log_on = libm::log(hp.theta_prior);
        let log_off = libm::log1p(-hp.theta_prior);

        let n = space.len();
        let mut log_w: Vec<f64> = (0u32..1 << n)
            .map(|config| {
                let on = config.count_ones() as f64;
                let mut lw = on * log_on + (n as f64 - on) * log_off;
                for &(mask, accepted) in &masks {
                    let grammatical = config & mask == 0;
                    lw += if grammatical == accepted { log_correct } else { log_noisy };
                }
                lw
            })
            .collect();
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for lw in log_w.iter_mut() {
            *lw = libm::exp(*lw - max);
            total += *lw;
        }
        for w in log_w.iter_mut() {
            *w /= total;
        }
        Ok(ExactPosterior { space: space.to_vec(), weights: log_w })
    }

    /// `p(θ_j = 1 | data)` for each constraint of the restricted space, in order.
    pub fn marginals(&self) -> Vec<f64> {
        (0..self.space.len())
            .map(|b| {
                self.weights
                    .iter()
                    .enumerate()
                    .filter(|(config, _)| config & (1 << b) != 0)
                    .map(|(_, w)| w)
                    .sum()
            })
            .collect()
    }

    /// Posterior probability that no constraint of `active` is penalized.
    pub fn prob_all_off(&self, active: &ActiveSet) -> f64 {
        let mask = self
            .space
            .iter()
            .enumerate()
            .filter(|(_, &j)| active.contains(j))
            .fold(0usize, |m, (b, _)| m | (1 << b));
        self.weights.iter().enumerate().filter(|(config, _)| config & mask == 0).map(|(_, w)| w).sum()
    }
}

/// Exact marginals over `restricted_space` (at most 20 constraints).
pub fn exact_posterior(evidence: &Evidence, hp: &Hyperparams, restricted_space: &[usize]) -> Result<Vec<f64>> {
    Ok(ExactPosterior::new(evidence, hp, restricted_space)?.marginals())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(v: f64, prior: f64, steps: SweepMode) -> Hyperparams {
        Hyperparams::new(v, prior, steps).unwrap()
    }

    fn single(dim: usize, active: &[usize], label: Label) -> Evidence {
        let mut ev = Evidence::new(dim);
        ev.push(Judgment { active: ActiveSet::from_indices(active.iter().copied()), label }).unwrap();
        ev
    }

    #[test]
    fn predictive_products() {
        let post = Posterior::from_values(vec![0.3, 0.5, 0.5]);
        assert_eq!(predict_prob_acceptable(&post, &ActiveSet::empty()), 1.0);
        assert!((predict_prob_acceptable(&post, &ActiveSet::from_indices([0])) - 0.7).abs() < 1e-15);
        assert_eq!(predict_prob_acceptable(&post, &ActiveSet::from_indices([1, 2])), 0.25);
    }

    #[test]
    fn single_feature_updates_have_closed_form() {
        // v = 0 gives Λ = 1.
        let h = hp(0.0, 0.1, SweepMode::One);
        let prior = Posterior::prior(4, 0.1);
        let accept = vb_sweep(&prior, &single(4, &[2], Label::Acceptable), &h).unwrap();
        let reject = vb_sweep(&prior, &single(4, &[2], Label::Unacceptable), &h).unwrap();
        let expect_accept = 1.0 / (1.0 + libm::exp(-(libm::log(1.0 / 9.0) - 1.0)));
        let expect_reject = 1.0 / (1.0 + libm::exp(-(libm::log(1.0 / 9.0) + 1.0)));
        assert!((accept[2] - expect_accept).abs() < 1e-12);
        assert!((reject[2] - expect_reject).abs() < 1e-12);
        assert!((accept[2] - 0.0393).abs() < 5e-5);
        assert!((reject[2] - 0.2320).abs() < 5e-5);
        for j in [0, 1, 3] {
            assert_eq!(accept[j], 0.1);
        }
    }

    #[test]
    fn label_symmetry_in_logit_space() {
        for v in [0.1, 0.5, 2.0] {
            let h = hp(v, 0.05, SweepMode::One);
            let prior = Posterior::prior(3, 0.05);
            let up = vb_sweep(&prior, &single(3, &[1], Label::Unacceptable), &h).unwrap();
            let down = vb_sweep(&prior, &single(3, &[1], Label::Acceptable), &h).unwrap();
            let lambda = h.noise_log_odds();
            assert!((logit(up[1]) - logit(0.05) - lambda).abs() < 1e-9);
            assert!((logit(down[1]) - logit(0.05) + lambda).abs() < 1e-9);
        }
    }

    #[test]
    fn vanishing_noise_log_odds_keeps_prior_exactly() {
        let h = Hyperparams { log_log_odds_alpha: -800.0, theta_prior: 0.2, ..Default::default() };
        assert_eq!(h.noise_log_odds(), 0.0);
        let mut ev = Evidence::new(6);
        ev.push(Judgment { active: ActiveSet::from_indices([0, 1, 2]), label: Label::Unacceptable }).unwrap();
        ev.push(Judgment { active: ActiveSet::from_indices([2, 3]), label: Label::Acceptable }).unwrap();
        let out = fit(&Posterior::prior(6, 0.2), &ev, &h).unwrap();
        assert!(out.posterior.values().iter().all(|&q| q == 0.2));
        assert!(exact_posterior(&ev, &h, &[0, 1, 2, 3]).unwrap().iter().all(|m| (m - 0.2).abs() < 1e-12));
    }

    #[test]
    fn fit_on_empty_data_is_the_prior() {
        let h = Hyperparams::default();
        let prior = Posterior::prior(CONSTRAINT_COUNT, h.theta_prior);
        let out = fit(&prior, &Evidence::new(CONSTRAINT_COUNT), &h).unwrap();
        assert_eq!(out.posterior, prior);
        assert!(out.converged);
    }

    #[test]
    fn converged_fit_is_a_fixed_point() {
        let h = hp(0.5, 0.1, SweepMode::ToConvergence);
        let mut data = Dataset::new();
        for (w, y) in [("katipe", Label::Acceptable), ("pekitɛ", Label::Unacceptable), ("tɛpɪ", Label::Acceptable)] {
            data.push(w.parse().unwrap(), y).unwrap();
        }
        let prior = Posterior::prior(CONSTRAINT_COUNT, 0.1);
        let once = fit(&prior, data.evidence(), &h).unwrap();
        assert!(once.converged);
        let twice = fit(&once.posterior, data.evidence(), &h).unwrap();
        let moved: f64 = once.posterior.values().iter().zip(twice.posterior.values()).map(|(a, b)| (a - b).abs()).sum();
        assert!(moved <= h.epsilon, "{moved}");
    }

    #[test]
    fn non_convergence_is_flagged() {
        let h = Hyperparams { max_sweeps: 1, epsilon: 1e-300, ..Default::default() };
        let mut data = Dataset::new();
        data.push("pekitɛ".parse().unwrap(), Label::Unacceptable).unwrap();
        data.push("pekite".parse().unwrap(), Label::Acceptable).unwrap();
        let out = fit(&Posterior::prior(CONSTRAINT_COUNT, h.theta_prior), data.evidence(), &h).unwrap();
        assert!(!out.converged);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn hypothetical_matches_commit() {
        let h = hp(1.0, 0.05, SweepMode::ToConvergence);
        let mut data = Dataset::new();
        data.push("katipe".parse().unwrap(), Label::Acceptable).unwrap();
        let post = fit(&Posterior::prior(CONSTRAINT_COUNT, 0.05), data.evidence(), &h).unwrap().posterior;
        let word: WordForm = "qiqɪka".parse().unwrap();
        let hypo = hypothetical_update(&post, &data, &h, &word, Label::Unacceptable).unwrap();
        data.push(word, Label::Unacceptable).unwrap();
        let committed = fit(&post, data.evidence(), &h).unwrap();
        assert_eq!(hypo, committed);
    }

    #[test]
    fn disjoint_observation_only_moves_its_own_constraints() {
        let h = hp(0.5, 0.1, SweepMode::ToConvergence);
        let mut ev = Evidence::new(8);
        ev.push(Judgment { active: ActiveSet::from_indices([0, 1]), label: Label::Unacceptable }).unwrap();
        let post = fit(&Posterior::prior(8, 0.1), &ev, &h).unwrap().posterior;
        let extra = Judgment { active: ActiveSet::from_indices([4, 5]), label: Label::Acceptable };
        let after = hypothetical_fit(&post, &ev, &h, &extra).unwrap().posterior;
        for j in [0, 1, 2, 3, 6, 7] {
            assert!((after[j] - post[j]).abs() < 10.0 * h.epsilon, "coordinate {j}");
        }
        assert!(after[4] < post[4] && after[5] < post[5]);
    }

    #[test]
    fn accept_never_raises_its_constraints() {
        let h = hp(2.0, 0.1, SweepMode::One);
        let mut data = Dataset::new();
        let word: WordForm = "kɛkiqa".parse().unwrap();
        data.push(word.clone(), Label::Acceptable).unwrap();
        let after = vb_sweep(&Posterior::prior(CONSTRAINT_COUNT, 0.1), data.evidence(), &h).unwrap();
        for j in active_set(&word).iter() {
            assert!(after[j] <= 0.1);
        }
    }

    #[test]
    fn exact_two_term_bayes() {
        // α = 0.88 ⇒ Λ = ln(0.88/0.12), v = ln Λ.
        let lambda = libm::log(0.88 / 0.12);
        let h = Hyperparams { log_log_odds_alpha: libm::log(lambda), theta_prior: 0.1, ..Default::default() };
        let ev = single(3, &[1], Label::Unacceptable);
        let m = exact_posterior(&ev, &h, &[1]).unwrap();
        let expect = 0.1 * 0.88 / (0.1 * 0.88 + 0.9 * 0.12);
        assert!((m[0] - expect).abs() < 1e-12);
        assert!((m[0] - 0.4490).abs() < 5e-5);
        for m in exact_posterior(&Evidence::new(3), &h, &[0, 2]).unwrap() {
            assert!((m - 0.1).abs() < 1e-12);
        }
        assert!(matches!(exact_posterior(&ev, &h, &(0..21).collect::<Vec<_>>()), Err(Error::SpaceTooLarge(21))));
    }

    #[test]
    fn entropies() {
        assert!((bernoulli_entropy(0.5) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(bernoulli_entropy(0.0), 0.0);
        assert_eq!(bernoulli_entropy(1.0), 0.0);
        let h01 = -0.1 * libm::log(0.1) - 0.9 * libm::log(0.9);
        assert!((bernoulli_entropy(0.1) - h01).abs() < 1e-15);
        assert!((h01 - 0.3251).abs() < 5e-5);

        let half = Posterior::prior(CONSTRAINT_COUNT, 0.5);
        assert!((posterior_entropy(&half) - 512.0 * core::f64::consts::LN_2).abs() < 1e-9);
        let mut q = vec![0.0; CONSTRAINT_COUNT];
        q[7] = 1.0;
        assert_eq!(posterior_entropy(&Posterior::from_values(q.clone())), 0.0);
        q[0] = 0.5;
        q[1] = 0.1;
        assert!((posterior_entropy(&Posterior::from_values(q)) - (core::f64::consts::LN_2 + h01)).abs() < 1e-12);

        let mut moved = vec![0.5; CONSTRAINT_COUNT];
        moved[3] = 0.1;
        let moved = Posterior::from_values(moved);
        assert_eq!(info_gain(&half, &half), 0.0);
        assert!((info_gain(&half, &moved) - (core::f64::consts::LN_2 - h01)).abs() < 1e-9);
        assert!((info_gain(&half, &moved) - 0.3681).abs() < 5e-5);
        assert_eq!(info_gain(&half, &moved), -info_gain(&moved, &half));
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(Hyperparams::new(0.5, 1.5, SweepMode::One).is_err());
        assert!(Hyperparams::new(0.5, 0.0, SweepMode::One).is_err());
        assert!(Hyperparams::new(f64::NAN, 0.1, SweepMode::One).is_err());
        assert!(Hyperparams::new(800.0, 0.1, SweepMode::One).is_err());
        let h = Hyperparams::new(0.5, 0.1, SweepMode::One).unwrap();
        assert!(h.alpha() > 0.731 && h.alpha() < 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let h = Hyperparams::default();
        assert!(matches!(
            fit(&Posterior::prior(3, 0.1), &Evidence::new(4), &h),
            Err(Error::Dimension { expected: 4, found: 3 })
        ));
        let mut ev = Evidence::new(2);
        assert!(ev.push(Judgment { active: ActiveSet::from_indices([5]), label: Label::Acceptable }).is_err());
    }

    #[test]
    fn duplicate_words_are_rejected() {
        let mut data = Dataset::new();
        data.push("katipe".parse().unwrap(), Label::Acceptable).unwrap();
        assert!(data.push("katipe".parse().unwrap(), Label::Acceptable).is_err());
    }
}
