//! Alternating generator/validator training for recommendation
//! chains-of-thought.
//!
//! A generator policy emits short sequences of preference tags (`RecCot`)
//! for a user. A validator scores `(user, item, cot)` triples with separate
//! Yes/No heads. The two are trained in alternation: the generator by a
//! softmax-DPO objective against validator-derived rewards, the validator by
//! binary cross-entropy on the generator's greedy outputs. Encoded cots can
//! then be fed into a small click-through-rate model.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over in-memory values; file formats, the run directory and
//! the command line live in the `trackrec` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod align;
pub mod alternate;
pub mod cot;
pub mod env;
pub mod error;
pub mod feedback;
pub mod generator;
pub mod gradcheck;
pub mod math;
pub mod rec;
pub mod rectune;
pub mod rng;
pub mod validator;

pub use crate::align::{align_generator, sdpo_grad, sdpo_loss, AlignOutcome, DpoConfig};
pub use crate::alternate::{
    evaluate_models, run_iteration, run_trackrec, IterationOutcome, IterationReport, LoopConfig,
    ReferenceMode, TrackRecRun,
};
pub use crate::cot::{Label, RecCot, TagVocabulary};
pub use crate::env::{
    make_synthetic, Dataset, EnvConfig, Interaction, ItemProfile, Split, UserProfile,
};
pub use crate::error::{Error, Result};
pub use crate::feedback::{build_feedback_batch, feedback_reward, run_sampling_feedback, FeedbackRecord};
pub use crate::generator::{GeneratorParams, SamplingParams};
pub use crate::rectune::{
    build_rectune_dataset, distill_generator, oracle_cot, rectune_validator, DistillConfig,
    RecTuneConfig, RecTuneExample,
};
pub use crate::rng::{RngSeed, SeedStream};
pub use crate::validator::ValidatorParams;
