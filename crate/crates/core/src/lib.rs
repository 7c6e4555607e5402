//! Multi-mode fault diagnosis with an ensemble of Broad Learning System
//! classifiers, evidential-reasoning fusion of their outputs, and online
//! adaptation through pseudo-labels and incremental pseudo-inverse updates.
//!
//! Layering, bottom up: [`numkernel`] → [`bls`] / [`er_fusion`] → [`online`]
//! → [`dataio`] → [`harness`].

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod bls;
pub mod dataio;
pub mod er_fusion;
pub mod error;
pub mod harness;
pub mod numkernel;
pub mod online;

pub use bls::{BlsClassifier, BlsConfig, EnhancementActivation, FeatureActivation};
pub use dataio::{Dataset, Schema, Split, Standardizer, SynthConfig};
pub use er_fusion::{BeliefDistribution, EvidenceWeights, MassSet};
pub use error::{Error, ErrorKind, Result};
pub use numkernel::Matrix;
pub use online::{OnlineConfig, PseudoLabel, StepEvent, StreamSummary};
