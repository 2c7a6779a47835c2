//! Evaluation metrics and shadow-model population machinery: clean accuracy,
//! attack success rate, and the detection AUCs of the vanilla,
//! one-step-behind, and last-moving detector generations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{embed_trigger, Dataset, JumboParams, TriggerSpec};
use crate::detector::{auc, model_score, DetectorModel};
use crate::error::{Error, Result};
use crate::nn::{forward, MlpModel};
use crate::seed;
use crate::train::{train_classifier, TrainConfig};

/// Index of the largest entry; ties broken by lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of test samples the model classifies correctly.
pub fn accuracy(model: &MlpModel, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("accuracy needs a nonempty test set"));
    }
    let mut hits = 0usize;
    for s in &test.samples {
        if argmax(&forward(model, &s.x)?) == s.y {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.len() as f64)
}

/// Fraction of trigger-embedded test samples classified to the trigger's
/// target class. The clean test set is embedded and relabeled here.
pub fn attack_success_rate(
    model: &MlpModel,
    clean_test: &Dataset,
    trigger: &TriggerSpec,
) -> Result<f64> {
    if clean_test.is_empty() {
        return Err(Error::invalid("attack_success_rate needs a nonempty test set"));
    }
    let mut hits = 0usize;
    for s in &clean_test.samples {
        let x_t = embed_trigger(&s.x, trigger)?;
        let target = trigger.target_rule.target(s.y, clean_test.num_classes);
        if argmax(&forward(model, &x_t)?) == target {
            hits += 1;
        }
    }
    Ok(hits as f64 / clean_test.len() as f64)
}

/// One jumbo-triggered shadow model with the draw that produced it.
#[derive(Debug, Clone)]
pub struct TrojanShadow {
    pub model: MlpModel,
    pub trigger: TriggerSpec,
    pub poison_ratio: f64,
    pub seed: u64,
}

/// One clean shadow model.
#[derive(Debug, Clone)]
pub struct CleanShadow {
    pub model: MlpModel,
    pub seed: u64,
}

/// The jumbo-sampled Trojan shadows and independently seeded clean shadows a
/// detector trains on.
#[derive(Debug, Clone)]
pub struct ShadowPopulation {
    pub trojans: Vec<TrojanShadow>,
    pub cleans: Vec<CleanShadow>,
}

impl ShadowPopulation {
    pub fn trojan_models(&self) -> Vec<MlpModel> {
        self.trojans.iter().map(|s| s.model.clone()).collect()
    }

    pub fn clean_models(&self) -> Vec<MlpModel> {
        self.cleans.iter().map(|s| s.model.clone()).collect()
    }
}

/// Seeded choice of which training samples get the trigger.
pub fn sample_poison_indices(n: usize, ratio: f64, seed_value: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed_value);
    idx.shuffle(&mut rng);
    let count = ((n as f64 * ratio).ceil() as usize).clamp(1, n);
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Train one jumbo-triggered shadow from a derived seed.
pub fn train_trojan_shadow(
    base: &Dataset,
    jumbo: &JumboParams,
    train_cfg: &TrainConfig,
    shadow_seed: u64,
) -> Result<TrojanShadow> {
    let (trigger, ratio) = crate::data::sample_jumbo_trigger(
        jumbo,
        base.feature_dim,
        base.num_classes,
        seed::derive_seed(shadow_seed, 1),
    )?;
    let indices = sample_poison_indices(base.len(), ratio, seed::derive_seed(shadow_seed, 2));
    let poisoned = crate::data::build_poisoned_dataset(base, &indices, &trigger)?;
    let cfg = train_cfg.reseeded(
        seed::derive_seed(shadow_seed, 3),
        seed::derive_seed(shadow_seed, 4),
    );
    let model = train_classifier(&poisoned, &cfg)?;
    Ok(TrojanShadow {
        model,
        trigger,
        poison_ratio: ratio,
        seed: shadow_seed,
    })
}

/// Train a clean shadow from a derived seed.
pub fn train_clean_shadow(
    base: &Dataset,
    train_cfg: &TrainConfig,
    shadow_seed: u64,
) -> Result<CleanShadow> {
    let cfg = train_cfg.reseeded(
        seed::derive_seed(shadow_seed, 3),
        seed::derive_seed(shadow_seed, 4),
    );
    let model = train_classifier(base, &cfg)?;
    Ok(CleanShadow {
        model,
        seed: shadow_seed,
    })
}

/// Build the shadow population: `n_trojan` jumbo-triggered Trojans and
/// `n_clean` clean classifiers, all trained on `base_data`. Deterministic for
/// a given master seed; shadows train in parallel on independent seed streams.
pub fn build_shadow_population(
    n_trojan: usize,
    n_clean: usize,
    jumbo: &JumboParams,
    base_data: &Dataset,
    train_cfg: &TrainConfig,
    master_seed: u64,
) -> Result<ShadowPopulation> {
    if n_trojan < 2 || n_clean < 2 {
        return Err(Error::invalid("shadow population needs at least 2 of each kind"));
    }
    let trojans: Result<Vec<TrojanShadow>> = (0..n_trojan)
        .into_par_iter()
        .map(|i| {
            train_trojan_shadow(
                base_data,
                jumbo,
                train_cfg,
                seed::derive_seed2(master_seed, 0x7401, i as u64),
            )
            .map_err(|e| Error::divergence(i, format!("trojan shadow {i}: {e}")))
        })
        .collect();
    let cleans: Result<Vec<CleanShadow>> = (0..n_clean)
        .into_par_iter()
        .map(|i| {
            train_clean_shadow(
                base_data,
                train_cfg,
                seed::derive_seed2(master_seed, 0xC1EA, i as u64),
            )
            .map_err(|e| Error::divergence(i, format!("clean shadow {i}: {e}")))
        })
        .collect();
    Ok(ShadowPopulation {
        trojans: trojans?,
        cleans: cleans?,
    })
}

/// The detector checkpoints a generation evaluation compares: the vanilla
/// detector, the iteration-(t-1) detector (adversary moved last), and the
/// iteration-t detector (defender moved last). Baseline (non-iterative) runs
/// carry only the vanilla detector.
#[derive(Debug, Clone)]
pub struct DetectorGenerations {
    pub vanilla: DetectorModel,
    pub t_minus_1: Option<DetectorModel>,
    pub t: Option<DetectorModel>,
}

/// Metrics report for one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub asr: f64,
    pub auc_0: f64,
    pub auc_t_minus_1: Option<f64>,
    pub auc_t: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Score positive (Trojan) and negative (clean) model populations with each
/// detector generation and report Acc/ASR of the primary Trojan model
/// (`trojans[0]`) plus the three AUCs.
pub fn evaluate_generations(
    trojans: &[MlpModel],
    generations: &DetectorGenerations,
    clean_pool: &[MlpModel],
    test: &Dataset,
    trigger: &TriggerSpec,
) -> Result<EvalReport> {
    if trojans.is_empty() {
        return Err(Error::invalid("evaluation needs at least one Trojan model"));
    }
    if clean_pool.is_empty() {
        return Err(Error::invalid("evaluation needs a clean model pool"));
    }
    let acc = accuracy(&trojans[0], test)?;
    let asr = attack_success_rate(&trojans[0], test, trigger)?;

    let score_all = |det: &DetectorModel| -> Result<(Vec<f64>, Vec<f64>)> {
        let pos = trojans
            .iter()
            .map(|m| model_score(det, m))
            .collect::<Result<Vec<f64>>>()?;
        let neg = clean_pool
            .iter()
            .map(|m| model_score(det, m))
            .collect::<Result<Vec<f64>>>()?;
        Ok((pos, neg))
    };

    let (pos0, neg0) = score_all(&generations.vanilla)?;
    let auc_0 = auc(&pos0, &neg0)?;
    let auc_t_minus_1 = match &generations.t_minus_1 {
        Some(det) => {
            let (p, n) = score_all(det)?;
            Some(auc(&p, &n)?)
        }
        None => None,
    };
    let auc_t = match &generations.t {
        Some(det) => {
            let (p, n) = score_all(det)?;
            auc(&p, &n)?
        }
        // Non-iterative run: the vanilla detector is also the final one.
        None => auc_0,
    };
    Ok(EvalReport {
        acc,
        asr,
        auc_0,
        auc_t_minus_1,
        auc_t,
        n_pos: trojans.len(),
        n_neg: clean_pool.len(),
    })
}
