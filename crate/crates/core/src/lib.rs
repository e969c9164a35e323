//! End-to-end alignment of a learning-to-rank model with sparse
//! questionnaire-based satisfaction signals.
//!
//! The crate bundles:
//!
//! * [`diffcore`] — a small reverse-mode autodiff engine (64-bit), Adam, and a
//!   finite-difference gradient checker;
//! * [`model`] — the ranking network with a low-rank side pathway and two
//!   decoupled mixture-of-experts heads;
//! * [`losses`] — preference-pair construction, pairwise ranking losses, and
//!   the online preference-alignment objective;
//! * [`simenv`] — a synthetic short-video world with a planted
//!   behavior/satisfaction mismatch and the questionnaire protocol;
//! * [`trainer`] — the online optimization loop, ablation variants, and
//!   checkpointing;
//! * [`evaluator`] — questionnaire-grounded ranking metrics (HR/NDCG/MRR).

pub mod diffcore;
pub mod evaluator;
pub mod losses;
pub mod model;
pub mod rng;
pub mod simenv;
pub mod trainer;
