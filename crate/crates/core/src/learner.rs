//! The live learner: dataset, posterior and hybrid bookkeeping behind one
//! propose/commit interface shared by simulated runs and human sessions.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::inference::{self, info_gain, Dataset, Hyperparams, Label, Posterior};
use crate::phonology::{sample_candidate_batch, WordForm, CONSTRAINT_COUNT};
use crate::policies::{self, Candidate, Model, PolicyKind, PolicyState, QueryDecision, SelectionContext};

#[derive(Clone, Debug, PartialEq)]
pub struct CommitOutcome {
    /// Entropy removed by this observation.
    pub realized_gain: f64,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct Learner {
    hp: Hyperparams,
    dataset: Dataset,
    posterior: Posterior,
    state: PolicyState,
}

impl Learner {
    pub fn new(hp: Hyperparams) -> Result<Self> {
        hp.validate()?;
        let posterior = Posterior::prior(CONSTRAINT_COUNT, hp.theta_prior);
        Ok(Learner { hp, dataset: Dataset::new(), posterior, state: PolicyState::default() })
    }

    /// Rebuilds a learner by committing `observations` in order.
    pub fn replay<'a, I>(hp: Hyperparams, observations: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a WordForm, Label)>,
    {
        let mut learner = Learner::new(hp)?;
        for (word, label) in observations {
            learner.observe(word.clone(), label)?;
        }
        Ok(learner)
    }

    pub fn hp(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    /// Restores a learner from persisted parts. The posterior is taken as
    /// given, not refit.
    pub fn from_parts(hp: Hyperparams, dataset: Dataset, posterior: Posterior, state: PolicyState) -> Result<Self> {
        hp.validate()?;
        if posterior.len() != CONSTRAINT_COUNT {
            return Err(crate::Error::Dimension { expected: CONSTRAINT_COUNT, found: posterior.len() });
        }
        Ok(Learner { hp, dataset, posterior, state })
    }

    pub fn model(&self) -> Model<'_> {
        Model { posterior: &self.posterior, evidence: self.dataset.evidence(), hp: &self.hp }
    }

    /// Draws a fresh pool of `hp.k` candidates avoiding queried words and `exclusions`.
    pub fn candidate_pool<R: Rng + ?Sized>(&self, rng: &mut R, exclusions: &BTreeSet<WordForm>) -> Result<Vec<Candidate>> {
        let words = if self.dataset.is_empty() {
            sample_candidate_batch(rng, self.hp.k, exclusions)?
        } else {
            let mut all = exclusions.clone();
            all.extend(self.dataset.words().iter().cloned());
            sample_candidate_batch(rng, self.hp.k, &all)?
        };
        Ok(words.into_iter().map(Candidate::new).collect())
    }

    /// Whether `propose` needs a candidate pool: always, except for train
    /// while unqueried lexicon words remain.
    pub fn needs_candidates(&self, kind: PolicyKind, lexicon: &[WordForm]) -> bool {
        kind.uses_candidates() || lexicon.iter().all(|w| self.dataset.contains(w))
    }

    pub fn propose<R: Rng + ?Sized>(
        &self,
        kind: PolicyKind,
        lexicon: &[WordForm],
        candidates: &[Candidate],
        rng: &mut R,
    ) -> Result<QueryDecision> {
        let ctx = SelectionContext { lexicon, queried: self.dataset.words(), candidates, model: self.model() };
        policies::select(kind, &self.state, &ctx, rng)
    }

    /// Appends the judgment, refits and files the realized gain under the
    /// decision's basic policy.
    pub fn commit(&mut self, decision: &QueryDecision, label: Label) -> Result<CommitOutcome> {
        let outcome = self.observe(decision.word.clone(), label)?;
        self.state.record_outcome(decision, outcome.realized_gain);
        Ok(outcome)
    }

    /// Appends a judgment and refits, without touching policy bookkeeping.
    pub fn observe(&mut self, word: WordForm, label: Label) -> Result<CommitOutcome> {
        self.dataset.push(word, label)?;
        let fitted = inference::fit(&self.posterior, self.dataset.evidence(), &self.hp)?;
        let realized_gain = info_gain(&self.posterior, &fitted.posterior);
        self.posterior = fitted.posterior;
        Ok(CommitOutcome { realized_gain, sweeps: fitted.sweeps, converged: fitted.converged })
    }

    /// Refits from the prior over the whole dataset, replaying the warm-started
    /// fits one observation at a time.
    pub fn rebuild(&mut self) -> Result<()> {
        let obs: Vec<(WordForm, Label)> = self.dataset.iter().map(|(w, j)| (w.clone(), j.label)).collect();
        let fresh = Learner::replay(self.hp.clone(), obs.iter().map(|(w, l)| (w, *l)))?;
        self.dataset = fresh.dataset;
        self.posterior = fresh.posterior;
        Ok(())
    }
}
