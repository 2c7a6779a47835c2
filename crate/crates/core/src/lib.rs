//! Desk-scale implementation of the adaptive Trojan-vs-detector co-evolution
//! game: tiny triggered classifiers, output-based Trojaned-model detectors,
//! the iterated min-max training loop, greedy trigger-set selection with
//! supermodularity diagnostics, and simplified NeuralCleanse/STRIP baselines.
//!
//! The library is deterministic end to end: every random choice flows from a
//! master seed through [`seed::derive_seed`], so experiments reproduce
//! bit-exactly and parallel execution never changes results.

pub mod baselines;
pub mod config;
pub mod data;
pub mod detector;
pub mod error;
pub mod game;
pub mod greedy;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod train;

pub use config::ExperimentConfig;
pub use data::{Dataset, JumboParams, Sample, TargetRule, TriggerSpec};
pub use detector::{DetectorModel, OutputBatch, QuerySpec, SourceLabel};
pub use error::{Error, Result};
pub use game::{GameConfig, GameTrace, MmRunResult};
pub use greedy::{GreedyConfig, GreedyResult, SelectionRule};
pub use metrics::{DetectorGenerations, EvalReport, ShadowPopulation};
pub use nn::{Activation, Direction, Gradients, MlpModel, OutputHead};
pub use train::TrainConfig;
