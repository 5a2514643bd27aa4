//! Active learning of phonotactic grammars from binary acceptability judgments.
//!
//! The grammar is a set of penalized feature trigrams over the vowel tier. A
//! learner keeps a mean-field Bernoulli posterior over which of the 512
//! trigrams are penalized, picks queries with one of several policies and
//! updates by coordinate ascent after every judgment.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and the
//! elicitation service live in the `phonoquery` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod error;
pub mod experiment;
pub mod inference;
pub mod learner;
pub mod oracles;
pub mod phonology;
pub mod policies;

pub use error::{Error, Result};
pub use inference::{Hyperparams, Label, Posterior, SweepMode};
pub use learner::Learner;
pub use phonology::{ActiveSet, TrigramConstraint, WordForm};
pub use policies::PolicyKind;
