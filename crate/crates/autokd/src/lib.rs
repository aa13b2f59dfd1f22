//! Search for a *family* of student networks that distill well from a fixed
//! teacher.
//!
//! The pipeline samples student architectures from hierarchical random-graph
//! generators, trains each sample with a knowledge-distillation loss against
//! cached teacher logits, and drives the generator hyperparameters (including
//! the distillation temperature and loss weight) with multi-fidelity Bayesian
//! optimization (Hyperband brackets + a good/bad kernel-density model).
//!
//! Crate layout:
//! - [`graphgen`] — random graph families (ER/WS/BA), DAG conversion, and the
//!   three-level hierarchy flattened into one operation graph.
//! - [`netbuilder`] — materializes an operation graph into a trainable model
//!   (vector or image mode) and scales channel width to a parameter budget.
//! - [`diffengine`] — the KD loss, reverse-mode gradients through the model,
//!   and a momentum-SGD trainer. Everything checks out against finite
//!   differences at double precision.
//! - [`bohb`] — bracket scheduling, Successive Halving, and the KDE proposal
//!   model over the generator hyperparameter space.
//! - [`harness`] — datasets, teacher management, the end-to-end search and
//!   retrain phases, trial logging, and analysis reports.

pub mod bohb;
pub mod diffengine;
pub mod error;
pub mod graphgen;
pub mod harness;
pub mod netbuilder;

pub use error::{Error, Result};
