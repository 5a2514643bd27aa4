//! The iterative query loop, AUC scoring and aggregation over seeds.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{posterior_entropy, predict_prob_acceptable, Hyperparams, Label};
use crate::learner::Learner;
use crate::oracles::{Informant, Language};
use crate::phonology::{active_set, ActiveSet, WordForm};
use crate::policies::PolicyKind;

pub const DEFAULT_STEPS: usize = 150;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub policy: PolicyKind,
    pub hp: Hyperparams,
    pub seed: u64,
    pub total_steps: usize,
}

impl RunConfig {
    pub fn new(policy: PolicyKind, hp: Hyperparams, seed: u64) -> Self {
        RunConfig { policy, hp, seed, total_steps: DEFAULT_STEPS }
    }
}

/// Random stream driving a run's query choices.
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stream used to build a seed's generated language, independent of [`run_rng`].
pub fn language_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub word: WordForm,
    pub label: Label,
    pub chosen_basic: PolicyKind,
    pub auc: f64,
    pub posterior_entropy: f64,
    pub realized_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_auc: f64,
    pub per_step_auc: Vec<f64>,
    /// 1.0 where the step's query came from the train policy.
    pub train_fraction_by_step: Vec<f64>,
}

impl RunSummary {
    pub fn from_records(records: &[StepRecord]) -> Self {
        let mut ordered: Vec<&StepRecord> = records.iter().collect();
        ordered.sort_by_key(|r| r.step);
        let per_step_auc: Vec<f64> = ordered.iter().map(|r| r.auc).collect();
        let mean_auc = mean(&per_step_auc);
        let train_fraction_by_step =
            ordered.iter().map(|r| if r.chosen_basic == PolicyKind::Train { 1.0 } else { 0.0 }).collect();
        RunSummary { mean_auc, per_step_auc, train_fraction_by_step }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
    pub learner: Learner,
}

/// Runs `cfg.total_steps` query/judge/update steps against the language's
/// informant, scoring the test set after each update.
pub fn run_experiment(language: &Language, cfg: &RunConfig) -> Result<RunOutput> {
    let informant = language.informant();
    let mut rng = run_rng(cfg.seed);
    let mut learner = Learner::new(cfg.hp.clone())?;

    let exclusions: BTreeSet<WordForm> = language.eval_words();
    let eval_active: Vec<ActiveSet> = language.eval.iter().map(|e| active_set(&e.word)).collect();
    let eval_labels: Vec<Label> = language.eval.iter().map(|e| e.label).collect();
    let mut records = Vec::with_capacity(cfg.total_steps);
    let at = |step: usize| move |e: Error| Error::AtStep { step, source: Box::new(e) };

    for step in 0..cfg.total_steps {
        let candidates = if learner.needs_candidates(cfg.policy, &language.lexicon) {
            learner.candidate_pool(&mut rng, &exclusions).map_err(at(step))?
        } else {
            Vec::new()
        };
        let decision =
            learner.propose(cfg.policy, &language.lexicon, &candidates, &mut rng).map_err(at(step))?;
        let label = informant.judge(&decision.word);
        let outcome = learner.commit(&decision, label).map_err(at(step))?;
        let scores: Vec<f64> = eval_active.iter().map(|a| predict_prob_acceptable(learner.posterior(), a)).collect();
        let step_auc = auc(&scores, &eval_labels).map_err(at(step))?;
        records.push(StepRecord {
            step,
            word: decision.word,
            label,
            chosen_basic: decision.chosen_basic,
            auc: step_auc,
            posterior_entropy: posterior_entropy(learner.posterior()),
            realized_gain: outcome.realized_gain,
        });
    }
    let summary = RunSummary::from_records(&records);
    Ok(RunOutput { records, summary, learner })
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let positives = labels.iter().filter(|l| l.is_acceptable()).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based average ranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&i| labels[i].is_acceptable()).count();
        rank_sum += avg_rank * tied_pos as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub median_mean_auc: f64,
    /// Sample standard deviation of the mean-AUCs over √n; 0 for one run.
    pub std_err: f64,
    pub n_seeds: usize,
    pub mean_auc_by_step: Vec<f64>,
    pub stderr_by_step: Vec<f64>,
    pub train_fraction_by_step: Vec<f64>,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

pub fn std_err(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    libm::sqrt(var / n as f64)
}

pub fn aggregate(runs: &[RunSummary]) -> Result<AggregateSummary> {
    if runs.is_empty() {
        return Err(Error::InvalidHyperparams("aggregate needs at least one run".into()));
    }
    let means: Vec<f64> = runs.iter().map(|r| r.mean_auc).collect();
    let steps = runs.iter().map(|r| r.per_step_auc.len()).max().unwrap_or(0);
    let mut mean_auc_by_step = Vec::with_capacity(steps);
    let mut stderr_by_step = Vec::with_capacity(steps);
    let mut train_fraction_by_step = Vec::with_capacity(steps);
    for s in 0..steps {
        let aucs: Vec<f64> = runs.iter().filter_map(|r| r.per_step_auc.get(s).copied()).collect();
        let train: Vec<f64> = runs.iter().filter_map(|r| r.train_fraction_by_step.get(s).copied()).collect();
        mean_auc_by_step.push(mean(&aucs));
        stderr_by_step.push(std_err(&aucs));
        train_fraction_by_step.push(mean(&train));
    }
    Ok(AggregateSummary {
        median_mean_auc: median(&means),
        std_err: std_err(&means),
        n_seeds: runs.len(),
        mean_auc_by_step,
        stderr_by_step,
        train_fraction_by_step,
    })
}
