//! Query policies: the basic selectors and the train/EIG hybrids.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    bernoulli_entropy, hypothetical_fit, posterior_entropy, predict_prob_acceptable, Evidence, Hyperparams,
    Judgment, Label, Posterior,
};
use crate::phonology::{active_set, ActiveSet, WordForm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Train,
    Uniform,
    LabelEntropy,
    Eig,
    EigHistory,
    EigModel,
    EigMixed,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Train,
        PolicyKind::Uniform,
        PolicyKind::LabelEntropy,
        PolicyKind::Eig,
        PolicyKind::EigHistory,
        PolicyKind::EigModel,
        PolicyKind::EigMixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Train => "train",
            PolicyKind::Uniform => "uniform",
            PolicyKind::LabelEntropy => "label-entropy",
            PolicyKind::Eig => "eig",
            PolicyKind::EigHistory => "eig-history",
            PolicyKind::EigModel => "eig-model",
            PolicyKind::EigMixed => "eig-mixed",
        }
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, PolicyKind::EigHistory | PolicyKind::EigModel | PolicyKind::EigMixed)
    }

    /// Policies that can draw from the lexicon.
    pub fn uses_lexicon(self) -> bool {
        self == PolicyKind::Train || self.is_hybrid()
    }

    /// Policies that look at a synthesized candidate pool.
    pub fn uses_candidates(self) -> bool {
        self != PolicyKind::Train
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownPolicy(String::from(s)))
    }
}

/// A candidate word together with its active constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub word: WordForm,
    pub active: ActiveSet,
}

impl Candidate {
    pub fn new(word: WordForm) -> Self {
        let active = active_set(&word);
        Candidate { word, active }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryDecision {
    pub word: WordForm,
    /// The basic policy that produced the word.
    pub chosen_basic: PolicyKind,
    pub objective_value: Option<f64>,
}

/// Bookkeeping for the hybrid policies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub history_train: Vec<f64>,
    pub history_nontrain: Vec<f64>,
    pub step: usize,
    pub last_choice: Option<PolicyKind>,
}

impl PolicyState {
    /// Files the realized information gain under the basic policy that
    /// produced the query.
    pub fn record_outcome(&mut self, decision: &QueryDecision, realized_gain: f64) {
        if decision.chosen_basic == PolicyKind::Train {
            self.history_train.push(realized_gain);
        } else {
            self.history_nontrain.push(realized_gain);
        }
        self.last_choice = Some(decision.chosen_basic);
        self.step += 1;
    }
}

/// Read-only snapshot of the learner used to score candidates.
#[derive(Clone, Copy, Debug)]
pub struct Model<'a> {
    pub posterior: &'a Posterior,
    pub evidence: &'a Evidence,
    pub hp: &'a Hyperparams,
}

/// All inputs a selector may consult.
#[derive(Clone, Copy, Debug)]
pub struct SelectionContext<'a> {
    pub lexicon: &'a [WordForm],
    pub queried: &'a BTreeSet<WordForm>,
    pub candidates: &'a [Candidate],
    pub model: Model<'a>,
}

/// Index and value of the first maximum.
pub(crate) fn argmax_first<I: IntoIterator<Item = f64>>(values: I) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Uniform draw from the lexicon items not yet queried.
pub fn select_train<R: Rng + ?Sized>(
    rng: &mut R,
    lexicon: &[WordForm],
    queried: &BTreeSet<WordForm>,
) -> Result<WordForm> {
    let open: Vec<&WordForm> = lexicon.iter().filter(|w| !queried.contains(*w)).collect();
    open.choose(rng).map(|w| (*w).clone()).ok_or(Error::LexiconExhausted)
}

pub fn select_uniform<R: Rng + ?Sized>(rng: &mut R, candidates: &[Candidate]) -> Result<WordForm> {
    candidates.choose(rng).map(|c| c.word.clone()).ok_or(Error::NoCandidates)
}

/// The candidate whose predicted label is most uncertain.
pub fn select_label_entropy(candidates: &[Candidate], post: &Posterior) -> Result<QueryDecision> {
    let scores = candidates.iter().map(|c| bernoulli_entropy(predict_prob_acceptable(post, &c.active)));
    let (i, value) = argmax_first(scores).ok_or(Error::NoCandidates)?;
    Ok(QueryDecision {
        word: candidates[i].word.clone(),
        chosen_basic: PolicyKind::LabelEntropy,
        objective_value: Some(value),
    })
}

/// Predicted acceptance and the information gain under each label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateValue {
    pub prob_accept: f64,
    pub gain_accept: f64,
    pub gain_reject: f64,
}

impl CandidateValue {
    /// Label-expected information gain.
    pub fn expected_gain(&self) -> f64 {
        self.prob_accept * self.gain_accept + (1.0 - self.prob_accept) * self.gain_reject
    }
}

fn gain_after(model: &Model<'_>, base_entropy: f64, active: &ActiveSet, label: Label) -> Result<f64> {
    let judgment = Judgment { active: active.clone(), label };
    let after = hypothetical_fit(model.posterior, model.evidence, model.hp, &judgment)?;
    Ok(base_entropy - posterior_entropy(&after.posterior))
}

fn evaluate_active(model: &Model<'_>, base_entropy: f64, active: &ActiveSet) -> Result<CandidateValue> {
    let prob_accept = predict_prob_acceptable(model.posterior, active);
    // A label with zero predicted probability contributes nothing to any score.
    let gain_accept = if prob_accept > 0.0 { gain_after(model, base_entropy, active, Label::Acceptable)? } else { 0.0 };
    let gain_reject =
        if prob_accept < 1.0 { gain_after(model, base_entropy, active, Label::Unacceptable)? } else { 0.0 };
    Ok(CandidateValue { prob_accept, gain_accept, gain_reject })
}

/// Scores every candidate; candidates sharing an active set share one evaluation.
pub fn evaluate_pool(candidates: &[Candidate], model: &Model<'_>) -> Result<Vec<CandidateValue>> {
    let base_entropy = posterior_entropy(model.posterior);
    let mut memo: BTreeMap<&ActiveSet, CandidateValue> = BTreeMap::new();
    candidates
        .iter()
        .map(|c| {
            if let Some(v) = memo.get(&c.active) {
                return Ok(*v);
            }
            let v = evaluate_active(model, base_entropy, &c.active)?;
            memo.insert(&c.active, v);
            Ok(v)
        })
        .collect()
}

pub fn eig_objective(word: &WordForm, model: &Model<'_>) -> Result<f64> {
    let base_entropy = posterior_entropy(model.posterior);
    Ok(evaluate_active(model, base_entropy, &active_set(word))?.expected_gain())
}

fn eig_decision(candidates: &[Candidate], values: &[CandidateValue]) -> Result<QueryDecision> {
    let (i, value) = argmax_first(values.iter().map(CandidateValue::expected_gain)).ok_or(Error::NoCandidates)?;
    Ok(QueryDecision { word: candidates[i].word.clone(), chosen_basic: PolicyKind::Eig, objective_value: Some(value) })
}

pub fn select_eig(candidates: &[Candidate], model: &Model<'_>) -> Result<QueryDecision> {
    let values = evaluate_pool(candidates, model)?;
    eig_decision(candidates, &values)
}

/// Mean of realized values; `None` for an empty history.
pub fn score_emp(history: &[f64]) -> Option<f64> {
    if history.is_empty() {
        None
    } else {
        Some(history.iter().sum::<f64>() / history.len() as f64)
    }
}

/// Label-expected gain of the word the EIG policy would pick.
pub fn score_exp_y(candidates: &[Candidate], model: &Model<'_>) -> Result<(f64, QueryDecision)> {
    let decision = select_eig(candidates, model)?;
    Ok((decision.objective_value.unwrap_or(0.0), decision))
}

fn exp_x_from_values(values: &[CandidateValue]) -> f64 {
    let total: f64 = values.iter().map(|v| v.prob_accept).sum();
    if total <= 0.0 {
        return 0.0;
    }
    values.iter().map(|v| v.prob_accept * v.gain_accept).sum::<f64>() / total
}

/// Gain of an accepted lexicon item, estimated over the pool with weights
/// proportional to predicted acceptance.
pub fn score_exp_x(candidates: &[Candidate], model: &Model<'_>) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(exp_x_from_values(&evaluate_pool(candidates, model)?))
}

fn train_or_fallback<R: Rng + ?Sized>(ctx: &SelectionContext<'_>, rng: &mut R) -> Result<QueryDecision> {
    match select_train(rng, ctx.lexicon, ctx.queried) {
        Ok(word) => Ok(QueryDecision { word, chosen_basic: PolicyKind::Train, objective_value: None }),
        Err(Error::LexiconExhausted) => {
            log::warn!("lexicon exhausted; falling back to uniform sampling");
            uniform_decision(ctx, rng)
        }
        Err(e) => Err(e),
    }
}

fn uniform_decision<R: Rng + ?Sized>(ctx: &SelectionContext<'_>, rng: &mut R) -> Result<QueryDecision> {
    let word = select_uniform(rng, ctx.candidates)?;
    Ok(QueryDecision { word, chosen_basic: PolicyKind::Uniform, objective_value: None })
}

fn with_objective(mut d: QueryDecision, value: f64) -> QueryDecision {
    d.objective_value = Some(value);
    d
}

/// Chooses between train and EIG for a hybrid `kind`. Score ties go to train.
pub fn hybrid_select<R: Rng + ?Sized>(
    kind: PolicyKind,
    state: &PolicyState,
    ctx: &SelectionContext<'_>,
    rng: &mut R,
) -> Result<QueryDecision> {
    let eig = || select_eig(ctx.candidates, &ctx.model);
    match kind {
        PolicyKind::EigHistory => {
            let take_train = match state.step {
                0 => rng.random_bool(0.5),
                1 => state.last_choice != Some(PolicyKind::Train),
                _ => match (score_emp(&state.history_train), score_emp(&state.history_nontrain)) {
                    (Some(t), Some(n)) => t >= n,
                    (None, _) => true,
                    (_, None) => false,
                },
            };
            if take_train {
                train_or_fallback(ctx, rng)
            } else {
                eig()
            }
        }
        PolicyKind::EigModel => {
            let values = evaluate_pool(ctx.candidates, &ctx.model)?;
            let train_score = exp_x_from_values(&values);
            let decision = eig_decision(ctx.candidates, &values)?;
            let eig_score = decision.objective_value.unwrap_or(0.0);
            if train_score >= eig_score {
                Ok(with_objective(train_or_fallback(ctx, rng)?, train_score))
            } else {
                Ok(decision)
            }
        }
        PolicyKind::EigMixed => {
            let train_score = match (state.step, score_emp(&state.history_train)) {
                (0, _) | (_, None) => return train_or_fallback(ctx, rng),
                (_, Some(s)) => s,
            };
            let (eig_score, decision) = score_exp_y(ctx.candidates, &ctx.model)?;
            if train_score >= eig_score {
                Ok(with_objective(train_or_fallback(ctx, rng)?, train_score))
            } else {
                Ok(decision)
            }
        }
        basic => select(basic, state, ctx, rng),
    }
}

/// Next query under `kind`.
pub fn select<R: Rng + ?Sized>(
    kind: PolicyKind,
    state: &PolicyState,
    ctx: &SelectionContext<'_>,
    rng: &mut R,
) -> Result<QueryDecision> {
    match kind {
        PolicyKind::Train => train_or_fallback(ctx, rng),
        PolicyKind::Uniform => uniform_decision(ctx, rng),
        PolicyKind::LabelEntropy => select_label_entropy(ctx.candidates, ctx.model.posterior),
        PolicyKind::Eig => select_eig(ctx.candidates, &ctx.model),
        hybrid => hybrid_select(hybrid, state, ctx, rng),
    }
}
