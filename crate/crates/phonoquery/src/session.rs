//! Interactive elicitation sessions: a human informant answers the queries a
//! [`Learner`] proposes. Transport independent; see [`crate::server`] for HTTP.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use phonoquery_core::inference::{bernoulli_entropy, posterior_entropy, predict_prob_acceptable, Dataset, Hyperparams, Label, Posterior};
use phonoquery_core::learner::Learner;
use phonoquery_core::phonology::{active_set, TrigramConstraint, WordForm};
use phonoquery_core::policies::{score_emp, PolicyKind, PolicyState, QueryDecision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::io::{read_json, write_json, DatasetRow};

/// The eight forms quoted as licit or illicit in the ATR harmony description.
pub const PROBE_WORDS: [&str; 8] = ["katipe", "tɛpɪ", "qekatɪ", "kɛkiqa", "tɪtaqikɛ", "qiqɪka", "pekitɛ", "qetatɪkipe"];

pub const TOP_CONSTRAINTS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("no session {0}")]
    NotFound(Uuid),
    #[error("session {0} is busy with another request")]
    Busy(Uuid),
    #[error("no query is pending; fetch one first")]
    NoPendingQuery,
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] phonoquery_core::Error),
    #[error(transparent)]
    Storage(#[from] crate::Error),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "not_found",
            SessionError::Busy(_) => "conflict",
            SessionError::NoPendingQuery => "no_pending_query",
            SessionError::BadRequest(_) => "bad_request",
            SessionError::Core(phonoquery_core::Error::LexiconRequired(_)) => "lexicon_required",
            SessionError::Core(phonoquery_core::Error::InvalidHyperparams(_)) => "invalid_hyperparams",
            SessionError::Core(phonoquery_core::Error::LexiconExhausted) => "lexicon_exhausted",
            SessionError::Core(_) => "learner_error",
            SessionError::Storage(_) => "storage_error",
        }
    }
}

pub type SessionResult<T> = std::result::Result<T, SessionError>;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub policy: PolicyKind,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    pub seed: Option<u64>,
    /// Overrides the service's default lexicon.
    pub lexicon: Option<Vec<WordForm>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub word: WordForm,
    pub label: Label,
    pub chosen_basic: PolicyKind,
    pub realized_gain: f64,
    pub posterior_entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub word: WordForm,
    pub step: usize,
    pub chosen_basic: PolicyKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBelief {
    pub index: usize,
    pub constraint: String,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub word: WordForm,
    pub prob_acceptable: f64,
    pub label_entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryMeans {
    pub train: Option<f64>,
    pub nontrain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub id: Uuid,
    pub policy: PolicyKind,
    pub hyperparams: Hyperparams,
    pub step: usize,
    pub posterior_entropy: f64,
    /// Constraints believed more likely penalized than the prior says, most likely first.
    pub top_constraints: Vec<ConstraintBelief>,
    pub probes: Vec<Probe>,
    pub history: Vec<HistoryEntry>,
    pub history_means: HistoryMeans,
    pub pending: Option<QueryView>,
}

/// Everything needed to rebuild the posterior elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub id: Uuid,
    pub policy: PolicyKind,
    pub hyperparams: Hyperparams,
    pub observations: Vec<DatasetRow>,
    pub posterior: Posterior,
}

/// Persisted form of a session.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SessionFile {
    id: Uuid,
    policy: PolicyKind,
    hyperparams: Hyperparams,
    lexicon: Vec<WordForm>,
    rng: ChaCha8Rng,
    history: Vec<HistoryEntry>,
    posterior: Posterior,
    policy_state: PolicyState,
    pending: Option<QueryDecision>,
}

#[derive(Clone, Debug)]
pub struct Session {
    id: Uuid,
    policy: PolicyKind,
    lexicon: Vec<WordForm>,
    rng: ChaCha8Rng,
    learner: Learner,
    history: Vec<HistoryEntry>,
    pending: Option<QueryDecision>,
}

impl Session {
    pub fn new(id: Uuid, req: CreateSession, default_lexicon: &[WordForm]) -> SessionResult<Self> {
        let lexicon = req.lexicon.unwrap_or_else(|| default_lexicon.to_vec());
        if req.policy.uses_lexicon() && lexicon.is_empty() {
            return Err(phonoquery_core::Error::LexiconRequired(req.policy.as_str()).into());
        }
        let seed = req.seed.unwrap_or_else(|| id.as_u64_pair().0);
        Ok(Session {
            id,
            policy: req.policy,
            lexicon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            learner: Learner::new(req.hyperparams)?,
            history: Vec::new(),
            pending: None,
        })
    }

    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn step(&self) -> usize {
        self.history.len()
    }

    fn view(&self, decision: &QueryDecision) -> QueryView {
        QueryView { word: decision.word.clone(), step: self.step(), chosen_basic: decision.chosen_basic }
    }

    /// The pending query, proposing a new one if none is outstanding.
    pub fn query(&mut self) -> SessionResult<QueryView> {
        if let Some(decision) = &self.pending {
            return Ok(self.view(decision));
        }
        let candidates = if self.learner.needs_candidates(self.policy, &self.lexicon) {
            self.learner.candidate_pool(&mut self.rng, &Default::default())?
        } else {
            Vec::new()
        };
        let decision = self.learner.propose(self.policy, &self.lexicon, &candidates, &mut self.rng)?;
        let view = self.view(&decision);
        self.pending = Some(decision);
        Ok(view)
    }

    pub fn judge(&mut self, accept: bool) -> SessionResult<StateSummary> {
        let decision = self.pending.clone().ok_or(SessionError::NoPendingQuery)?;
        let label = Label::from_bool(accept);
        let outcome = self.learner.commit(&decision, label)?;
        self.history.push(HistoryEntry {
            step: self.step(),
            word: decision.word,
            label,
            chosen_basic: decision.chosen_basic,
            realized_gain: outcome.realized_gain,
            posterior_entropy: posterior_entropy(self.learner.posterior()),
        });
        self.pending = None;
        Ok(self.summary())
    }

    pub fn rebuild(&mut self) -> SessionResult<StateSummary> {
        self.learner.rebuild()?;
        Ok(self.summary())
    }

    pub fn summary(&self) -> StateSummary {
        let post = self.learner.posterior();
        let prior = self.learner.hp().theta_prior;
        let mut top: Vec<ConstraintBelief> = post
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > prior)
            .map(|(index, &q)| ConstraintBelief {
                index,
                constraint: TrigramConstraint::from_index(index).expect("index below 512").to_string(),
                q,
            })
            .collect();
        top.sort_by(|a, b| b.q.total_cmp(&a.q).then(a.index.cmp(&b.index)));
        top.truncate(TOP_CONSTRAINTS);
        let probes = PROBE_WORDS
            .iter()
            .map(|w| {
                let word: WordForm = w.parse().expect("probe words parse");
                let p = predict_prob_acceptable(post, &active_set(&word));
                Probe { word, prob_acceptable: p, label_entropy: bernoulli_entropy(p) }
            })
            .collect();
        let state = self.learner.state();
        StateSummary {
            id: self.id,
            policy: self.policy,
            hyperparams: self.learner.hp().clone(),
            step: self.step(),
            posterior_entropy: posterior_entropy(post),
            top_constraints: top,
            probes,
            history: self.history.clone(),
            history_means: HistoryMeans {
                train: score_emp(&state.history_train),
                nontrain: score_emp(&state.history_nontrain),
            },
            pending: self.pending.as_ref().map(|d| self.view(d)),
        }
    }

    pub fn export(&self) -> SessionExport {
        SessionExport {
            id: self.id,
            policy: self.policy,
            hyperparams: self.learner.hp().clone(),
            observations: self
                .history
                .iter()
                .map(|h| DatasetRow { word: h.word.clone(), label: h.label, step: h.step })
                .collect(),
            posterior: self.learner.posterior().clone(),
        }
    }

    fn to_file(&self) -> SessionFile {
        SessionFile {
            id: self.id,
            policy: self.policy,
            hyperparams: self.learner.hp().clone(),
            lexicon: self.lexicon.clone(),
            rng: self.rng.clone(),
            history: self.history.clone(),
            posterior: self.learner.posterior().clone(),
            policy_state: self.learner.state().clone(),
            pending: self.pending.clone(),
        }
    }

    fn from_file(file: SessionFile) -> SessionResult<Self> {
        let mut dataset = Dataset::new();
        for h in &file.history {
            dataset.push(h.word.clone(), h.label)?;
        }
        let learner = Learner::from_parts(file.hyperparams, dataset, file.posterior, file.policy_state)?;
        Ok(Session {
            id: file.id,
            policy: file.policy,
            lexicon: file.lexicon,
            rng: file.rng,
            learner,
            history: file.history,
            pending: file.pending,
        })
    }
}

/// Replays an export from the prior and returns the rebuilt posterior.
pub fn replay_export(export: &SessionExport) -> phonoquery_core::Result<Posterior> {
    let mut rows = export.observations.clone();
    rows.sort_by_key(|r| r.step);
    let learner = Learner::replay(export.hyperparams.clone(), rows.iter().map(|r| (&r.word, r.label)))?;
    Ok(learner.posterior().clone())
}

type Slot = Arc<Mutex<Session>>;

/// All live sessions, optionally mirrored to one JSON file each in a directory.
#[derive(Debug)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    default_lexicon: Vec<WordForm>,
    sessions: RwLock<HashMap<Uuid, Slot>>,
}

impl SessionStore {
    pub fn in_memory(default_lexicon: Vec<WordForm>) -> Self {
        SessionStore { dir: None, default_lexicon, sessions: RwLock::new(HashMap::new()) }
    }

    /// Opens `dir`, loading any sessions persisted there.
    pub fn open(dir: impl Into<PathBuf>, default_lexicon: Vec<WordForm>) -> SessionResult<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(crate::Error::io(&dir))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(crate::Error::io(&dir))? {
            let path = entry.map_err(crate::Error::io(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let session = Session::from_file(read_json::<SessionFile>(&path)?)?;
                sessions.insert(session.id, Arc::new(Mutex::new(session)));
            }
        }
        log::info!("loaded {} sessions from {}", sessions.len(), dir.display());
        Ok(SessionStore { dir: Some(dir), default_lexicon, sessions: RwLock::new(sessions) })
    }

    fn path(dir: &Path, id: Uuid) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    fn persist(&self, session: &Session) -> SessionResult<()> {
        if let Some(dir) = &self.dir {
            write_json(Self::path(dir, session.id), &session.to_file())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, req: CreateSession) -> SessionResult<Uuid> {
        let id = Uuid::new_v4();
        let session = Session::new(id, req, &self.default_lexicon)?;
        self.persist(&session)?;
        self.sessions.write().expect("session map poisoned").insert(id, Arc::new(Mutex::new(session)));
        Ok(id)
    }

    fn slot(&self, id: Uuid) -> SessionResult<Slot> {
        self.sessions.read().expect("session map poisoned").get(&id).cloned().ok_or(SessionError::NotFound(id))
    }

    /// Runs a mutation, failing with [`SessionError::Busy`] rather than
    /// waiting if another request holds the session.
    pub fn mutate<T>(&self, id: Uuid, f: impl FnOnce(&mut Session) -> SessionResult<T>) -> SessionResult<T> {
        let slot = self.slot(id)?;
        let mut guard = match slot.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(SessionError::Busy(id)),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let mut draft = guard.clone();
        let out = f(&mut draft)?;
        self.persist(&draft)?;
        *guard = draft;
        Ok(out)
    }

    pub fn read<T>(&self, id: Uuid, f: impl FnOnce(&Session) -> T) -> SessionResult<T> {
        let slot = self.slot(id)?;
        let guard = slot.lock().unwrap_or_else(|p| p.into_inner());
        Ok(f(&guard))
    }

    pub fn delete(&self, id: Uuid) -> SessionResult<()> {
        let slot = self.sessions.write().expect("session map poisoned").remove(&id).ok_or(SessionError::NotFound(id))?;
        drop(slot);
        if let Some(dir) = &self.dir {
            let path = Self::path(dir, id);
            if path.exists() {
                fs::remove_file(&path).map_err(crate::Error::io(&path))?;
            }
        }
        Ok(())
    }
}
