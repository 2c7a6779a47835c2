//! Experiment configuration: a TOML file with sections mirroring the module
//! configs. Every command validates the whole config before any training
//! starts, and every emitted JSON artifact embeds the config hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::data::{Dataset, JumboParams, TargetRule, TriggerSpec};
use crate::detector::{DetectorModel, QuerySpec};
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::greedy::{GreedyConfig, SelectionRule};
use crate::nn::{Activation, OutputHead};
use crate::seed;
use crate::train::TrainConfig;

// Seed-stream tags for the harness pipeline.
pub mod streams {
    pub const SPLIT: u64 = 0x01;
    pub const SHADOWS: u64 = 0x02;
    pub const DETECTOR_INIT: u64 = 0x03;
    pub const QUERIES: u64 = 0x04;
    pub const HOLDOUT_CLEAN: u64 = 0x05;
    pub const POISON_PICK: u64 = 0x06;
    pub const TARGET_TRAIN: u64 = 0x07;
    pub const GAME: u64 = 0x08;
    pub const MM_EXTRA: u64 = 0x09;
    pub const GREEDY: u64 = 0x0A;
    pub const SWEEP: u64 = 0x0B;
    pub const TRIGGER_PATTERN: u64 = 0x0C;
    pub const BASELINE_HOLDOUT: u64 = 0x0D;
    pub const GREEDY_TRAIN: u64 = 0x0E;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Blobs,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub source: DatasetSource,
    pub classes: usize,
    pub feature_dim: usize,
    pub n_per_class: usize,
    pub cluster_spread: f64,
    pub test_fraction: f64,
    pub csv_path: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            source: DatasetSource::Blobs,
            classes: 3,
            feature_dim: 16,
            n_per_class: 60,
            cluster_spread: 0.08,
            test_fraction: 0.3,
            csv_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRuleKind {
    Fixed,
    AllToAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerSection {
    pub block_start: usize,
    pub block_size: usize,
    pub transparency: f64,
    pub pattern_seed: u64,
    pub target_rule: TargetRuleKind,
    pub target_class: usize,
    pub poison_ratio: f64,
}

impl Default for TriggerSection {
    fn default() -> Self {
        TriggerSection {
            block_start: 0,
            block_size: 5,
            transparency: 0.0,
            pattern_seed: 7,
            target_rule: TargetRuleKind::Fixed,
            target_class: 1,
            poison_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub rate: f64,
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            hidden_dims: vec![16],
            activation: Activation::Tanh,
            epochs: 60,
            rate: 0.3,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSection {
    pub hidden_dims: Vec<usize>,
    pub n_queries: usize,
    pub query_mean: f64,
    pub query_var: f64,
    pub epochs: usize,
    pub rate: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            hidden_dims: vec![16],
            n_queries: 64,
            query_mean: 0.5,
            query_var: 0.25,
            epochs: 400,
            rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameSection {
    pub gamma_d: f64,
    pub gamma_t: f64,
    pub iterations: usize,
    pub inner_detector_epochs: usize,
    pub inner_trojan_epochs: usize,
    pub batch_size: usize,
    pub js_bins: usize,
}

impl Default for GameSection {
    fn default() -> Self {
        GameSection {
            gamma_d: 0.05,
            gamma_t: 0.05,
            iterations: 20,
            inner_detector_epochs: 5,
            inner_trojan_epochs: 5,
            batch_size: 32,
            js_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShadowSection {
    pub n_trojan: usize,
    pub n_clean: usize,
    pub jumbo: JumboParams,
}

impl Default for ShadowSection {
    fn default() -> Self {
        ShadowSection {
            n_trojan: 8,
            n_clean: 8,
            jumbo: JumboParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub n_holdout_trojan: usize,
    pub n_holdout_clean: usize,
    /// Load attack/clean model checkpoints from this directory instead of
    /// auto-training them (eval-detectors only).
    pub models_dir: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_holdout_trojan: 4,
            n_holdout_clean: 8,
            models_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedySection {
    pub epsilon: f64,
    pub batch_groups: usize,
    pub retrain_epochs: usize,
    pub max_fraction_cap: f64,
    pub selection_rule: SelectionRule,
    pub alpha_grid: Vec<f64>,
}

impl Default for GreedySection {
    fn default() -> Self {
        GreedySection {
            epsilon: 0.02,
            batch_groups: 24,
            retrain_epochs: 40,
            max_fraction_cap: 0.5,
            selection_rule: SelectionRule::MinResultingLoss,
            alpha_grid: vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselinesSection {
    pub nc_lambda: f64,
    pub nc_steps: usize,
    pub nc_rate: f64,
    pub strip_n_blends: usize,
    pub n_probes: usize,
    pub anomaly_threshold: f64,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        BaselinesSection {
            nc_lambda: 0.05,
            nc_steps: 150,
            nc_rate: 0.5,
            strip_n_blends: 8,
            n_probes: 32,
            anomaly_threshold: 4.0,
        }
    }
}

/// Qualitative-curve tolerances; overridable because the reference figures
/// are qualitative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceSection {
    pub curve_noise: f64,
    pub trend: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            curve_noise: 0.05,
            trend: 0.03,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub trigger: TriggerSection,
    pub train: TrainSection,
    pub detector: DetectorSection,
    pub game: GameSection,
    pub shadows: ShadowSection,
    pub eval: EvalSection,
    pub greedy: GreedySection,
    pub baselines: BaselinesSection,
    pub tolerances: ToleranceSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Full fail-fast validation of every section.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match d.source {
            DatasetSource::Blobs => {
                if d.classes < 2 || d.feature_dim < 2 || d.n_per_class == 0 {
                    return Err(Error::Config("blobs need classes>=2, dim>=2, n>0".into()));
                }
                if !(d.cluster_spread >= 0.0) {
                    return Err(Error::Config("cluster_spread must be nonnegative".into()));
                }
            }
            DatasetSource::Csv => {
                if d.csv_path.is_none() {
                    return Err(Error::Config("csv source requires csv_path".into()));
                }
            }
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie in (0,1)".into()));
        }

        let t = &self.trigger;
        if t.block_size == 0 || t.block_start + t.block_size > d.feature_dim {
            return Err(Error::Config("trigger block exceeds feature_dim".into()));
        }
        if !(0.0..=1.0).contains(&t.transparency) {
            return Err(Error::Config("transparency must lie in [0,1]".into()));
        }
        if t.target_rule == TargetRuleKind::Fixed && t.target_class >= d.classes {
            return Err(Error::Config("target_class exceeds class count".into()));
        }
        if !(t.poison_ratio > 0.0 && t.poison_ratio <= 1.0) {
            return Err(Error::Config("poison_ratio must lie in (0,1]".into()));
        }

        self.base_train_config(0, 0).validate()?;
        let det = &self.detector;
        if det.n_queries == 0 {
            return Err(Error::Config("detector n_queries must be positive".into()));
        }
        if !(det.query_var > 0.0) {
            return Err(Error::Config("detector query_var must be positive".into()));
        }
        if !(det.rate > 0.0 && det.rate < 1.0) {
            return Err(Error::Config("detector rate must lie in (0,1)".into()));
        }
        if det.hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::Config("detector hidden dims must be positive".into()));
        }
        self.game_config().validate()?;
        if self.shadows.n_trojan < 2 || self.shadows.n_clean < 2 {
            return Err(Error::Config("shadow counts must be at least 2".into()));
        }
        self.shadows.jumbo.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.shadows.jumbo.mask_size_max > d.feature_dim {
            return Err(Error::Config("jumbo mask size exceeds feature_dim".into()));
        }
        if self.eval.n_holdout_trojan == 0 || self.eval.n_holdout_clean == 0 {
            return Err(Error::Config("eval holdout counts must be positive".into()));
        }
        self.greedy_config().validate()?;
        for &a in &self.greedy.alpha_grid {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config("alpha_grid entries must lie in [0,1]".into()));
            }
        }
        let b = &self.baselines;
        if !(b.nc_lambda > 0.0) || b.nc_steps == 0 || !(b.nc_rate > 0.0) {
            return Err(Error::Config("nc settings must be positive".into()));
        }
        if b.strip_n_blends == 0 || b.n_probes == 0 {
            return Err(Error::Config("strip settings must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn base_train_config(&self, init_seed: u64, shuffle_seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_dims: self.train.hidden_dims.clone(),
            activation: self.train.activation,
            epochs: self.train.epochs,
            rate: self.train.rate,
            batch_size: self.train.batch_size,
            init_seed,
            shuffle_seed,
        }
    }

    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            gamma_d: self.game.gamma_d,
            gamma_t: self.game.gamma_t,
            iterations: self.game.iterations,
            inner_detector_epochs: self.game.inner_detector_epochs,
            inner_trojan_epochs: self.game.inner_trojan_epochs,
            batch_size: self.game.batch_size,
            seed: seed::derive_seed(self.seed, streams::GAME),
            start_iteration: 0,
            js_bins: self.game.js_bins,
        }
    }

    pub fn greedy_config(&self) -> GreedyConfig {
        GreedyConfig {
            epsilon: self.greedy.epsilon,
            batch_groups: self.greedy.batch_groups,
            retrain_epochs: self.greedy.retrain_epochs,
            max_fraction_cap: self.greedy.max_fraction_cap,
            selection_rule: self.greedy.selection_rule,
            seed: seed::derive_seed(self.seed, streams::GREEDY),
            train: self.base_train_config(
                seed::derive_seed(self.seed, streams::GREEDY_TRAIN),
                seed::derive_seed2(self.seed, streams::GREEDY_TRAIN, 1),
            ),
        }
    }

    /// Materialize the configured dataset.
    pub fn build_dataset(&self) -> Result<Dataset> {
        match self.dataset.source {
            DatasetSource::Blobs => crate::data::make_blobs(
                self.dataset.classes,
                self.dataset.feature_dim,
                self.dataset.n_per_class,
                self.dataset.cluster_spread,
                self.seed,
            ),
            DatasetSource::Csv => {
                let path = self.dataset.csv_path.as_ref().expect("validated");
                crate::data::load_csv(path)
            }
        }
    }

    /// The configured block trigger, with a pattern drawn from pattern_seed.
    pub fn trigger_spec(&self, feature_dim: usize, num_classes: usize) -> Result<TriggerSpec> {
        use rand::Rng;
        let mut rng = seed::rng(seed::derive_seed(
            seed::derive_seed(self.seed, streams::TRIGGER_PATTERN),
            self.trigger.pattern_seed,
        ));
        let pattern: Vec<f64> = (0..feature_dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let rule = match self.trigger.target_rule {
            TargetRuleKind::Fixed => TargetRule::Fixed(self.trigger.target_class),
            TargetRuleKind::AllToAll => TargetRule::AllToAll,
        };
        if let TargetRule::Fixed(t) = rule {
            if t >= num_classes {
                return Err(Error::Config("target_class exceeds class count".into()));
            }
        }
        TriggerSpec::block(
            feature_dim,
            self.trigger.block_start,
            self.trigger.block_size,
            self.trigger.transparency,
            pattern,
            rule,
        )
    }

    /// A freshly initialized detector with the configured query spec.
    pub fn detector_init(&self, num_classes: usize, feature_dim: usize) -> Result<DetectorModel> {
        let mut dims = vec![num_classes];
        dims.extend_from_slice(&self.detector.hidden_dims);
        dims.push(1);
        let net = crate::nn::init_model(
            &dims,
            Activation::Tanh,
            OutputHead::SigmoidScalar,
            seed::derive_seed(self.seed, streams::DETECTOR_INIT),
        )?;
        let query = QuerySpec {
            mean: vec![self.detector.query_mean; feature_dim],
            cov_diag: vec![self.detector.query_var; feature_dim],
            n_queries: self.detector.n_queries,
            seed: seed::derive_seed(self.seed, streams::QUERIES),
        };
        DetectorModel::new(net, query)
    }
}
