use alloc::boxed::Box;
use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("a word needs at least one syllable")]
    EmptyWord,
    #[error("cannot parse word form {0:?}")]
    ParseWord(String),
    #[error("cannot parse constraint {0:?}")]
    ParseConstraint(String),
    #[error("constraint index {0} out of range")]
    ConstraintIndex(usize),
    #[error("no candidate survived filtering after {attempts} draws")]
    CandidatesExhausted { attempts: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("posterior has {found} coordinates, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("exact enumeration supports at most 20 constraints, got {0}")]
    SpaceTooLarge(usize),
    #[error("word {0} is already in the dataset")]
    DuplicateObservation(String),
    #[error("every lexicon item has been queried")]
    LexiconExhausted,
    #[error("policy needs a non-empty candidate pool")]
    NoCandidates,
    #[error("{0} policy requires a lexicon")]
    LexiconRequired(&'static str),
    #[error("AUC is undefined unless both classes are present")]
    AucUndefined,
    #[error("could not fill {what} quota within {draws} draws")]
    Quota { what: &'static str, draws: usize },
    #[error("no viable generated language after {attempts} attempts")]
    LanguageGeneration { attempts: usize },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
