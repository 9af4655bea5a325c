//! Simulated inquiry-oriented learners and learning-partner selection.
//!
//! The crate is organised bottom-up:
//!
//! * [`agents`] – personas, completion backends and the solo / paired
//!   answering protocols.
//! * [`corpus`] – CMMLU-format exercise loading, domain blocks, difficulty
//!   profiles and seeded subsets.
//! * [`features`] – embedding providers and the `(learner, partner, block)`
//!   sample vectors with their collaboration-gain labels.
//! * [`regressor`] – Gaussian-process regression (RBF kernel, marginal
//!   likelihood fitting, posterior prediction) and a small MLP.
//! * [`matcher`] – score vectors, Pareto fronts and partner selection.
//! * [`harness`] – the seven experiment variants, metrics and reports.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iterators otherwise.

pub mod agents;
pub mod corpus;
pub mod exec;
pub mod features;
pub mod harness;
pub mod matcher;
pub mod regressor;

pub(crate) mod hashing;
