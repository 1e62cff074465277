//! Ensembles of certifiably robust classifiers.
//!
//! Each constituent returns a label and a certificate bit claiming the label
//! is constant on an epsilon-ball around the input. The ensemblers here
//! combine those outputs; the voting ensemblers keep the certificate sound
//! using only the constituents' outputs, while cascading does not.
//!
//! ```
//! use certens::{uniform_vote, CertOutput};
//!
//! let out = uniform_vote(
//!     &[CertOutput::certified(2), CertOutput::certified(2), CertOutput::uncertified(0)],
//!     3,
//! )
//! .unwrap();
//! assert_eq!(out, CertOutput::certified(2));
//! ```

pub mod ensemblers;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod metrics;
pub mod toy_lab;
pub mod types;
pub mod weight_learner;

pub use ensemblers::{
    apply, cascade, permutation_cascade, permutation_cascade_bruteforce, uniform_vote,
    weighted_vote, EnsemblerKind, FallbackPolicy, PermutationConfig, PrefixBound,
};
pub use error::{Error, Result};
pub use metrics::{accuracy, cra, evaluate_all, evaluate_with, EvalOptions, EvalReport, SystemId};
pub use types::{
    argmax_label, tally, CertOutput, Label, Norm, PredictionRecord, RecordSet, VoteTally,
    WeightVector,
};
pub use weight_learner::{learn, learn_with_safety_net, LearnerConfig};
