//! Desk-scale laboratory for hybrid classical/quantum continual learning.
//!
//! A small CNN trunk feeds a single simulated qubit whose rotation is trained
//! with the parameter-shift rule. Around it sit the classical baselines, a
//! continual-learning harness with mid-run sample injection, forgetting
//! diagnostics, GradCAM saliency with saliency replay, and report writers.

pub mod autodiff;
pub mod continual;
pub mod data;
pub mod error;
pub mod explain;
pub mod models;
pub mod quantum;
pub mod report;

pub use error::{Error, Result};
