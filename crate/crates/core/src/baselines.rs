//! Single-step detector baselines for cross-evaluation.
//!
//! NC-lite reverse-engineers a minimal trigger per class (L1-regularized
//! mask/pattern optimization through the model's input gradient) and flags
//! models whose smallest reversed mask is an outlier. STRIP-lite blends
//! suspect inputs with clean ones and flags inputs whose output entropy stays
//! low — a backdoor that survives blending keeps the model confident.

use serde::{Deserialize, Serialize};

use crate::data::{embed_trigger, TriggerSpec};
use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::nn::{backward, cross_entropy, cross_entropy_grad, forward, MlpModel};
use crate::seed;

/// The reversed trigger for one candidate target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversedTrigger {
    pub class_id: usize,
    pub mask: Vec<f64>,
    pub pattern: Vec<f64>,
    /// L1 norm of the reversed mask.
    pub mask_norm: f64,
    /// Fraction of probe inputs driven to `class_id` by the reversed trigger.
    pub attack_success: f64,
}

/// Per-class reversal outcome with MAD-based outlier indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub mask_norms: Vec<f64>,
    pub anomaly_index: Vec<f64>,
    /// Trojan-likelihood score in [0,1): the largest anomaly index squashed
    /// through `a / (1 + a)` (rank-equivalent, bounded).
    pub model_score: f64,
}

/// NC-lite optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcConfig {
    pub lambda: f64,
    pub steps: usize,
    pub rate: f64,
    pub seed: u64,
}

impl Default for NcConfig {
    fn default() -> Self {
        NcConfig {
            lambda: 0.05,
            steps: 150,
            rate: 0.5,
            seed: 0,
        }
    }
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Gradient-descend an L1-regularized reversed trigger toward `target`,
/// returning the trigger and the per-step loss trajectory. The mask and
/// pattern are parameterized through a sigmoid so they stay inside [0,1]^d.
pub fn reverse_trigger_traced(
    model: &MlpModel,
    target: usize,
    probes: &[Vec<f64>],
    lambda: f64,
    steps: usize,
    rate: f64,
    init_seed: u64,
) -> Result<(ReversedTrigger, Vec<f64>)> {
    if probes.is_empty() {
        return Err(Error::invalid("trigger reversal needs probe inputs"));
    }
    if target >= model.output_dim() {
        return Err(Error::invalid("target class out of range"));
    }
    if !(lambda > 0.0) || steps == 0 || !(rate > 0.0) {
        return Err(Error::invalid("lambda, steps, and rate must be positive"));
    }
    let d = model.input_dim();
    if probes.iter().any(|p| p.len() != d) {
        return Err(Error::shape("probe dimension mismatch"));
    }

    use rand::Rng;
    let mut rng = seed::rng(init_seed);
    // Start with a smallish mask and a mid-range pattern.
    let mut mask_raw: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..-1.0)).collect();
    let mut pattern_raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut losses = Vec::with_capacity(steps);

    let n = probes.len() as f64;
    for step in 0..steps {
        let mask: Vec<f64> = mask_raw.iter().map(|&v| sigmoid(v)).collect();
        let pattern: Vec<f64> = pattern_raw.iter().map(|&v| sigmoid(v)).collect();
        let mut grad_mask = vec![0.0; d];
        let mut grad_pattern = vec![0.0; d];
        let mut loss = 0.0;
        for x in probes {
            let x_t: Vec<f64> = x
                .iter()
                .zip(mask.iter().zip(&pattern))
                .map(|(&xv, (&m, &p))| xv * (1.0 - m) + p * m)
                .collect();
            let out = forward(model, &x_t)?;
            loss += cross_entropy(&out, target)? / n;
            let upstream = cross_entropy_grad(&out, target)?;
            let (_, dx) = backward(model, &x_t, &upstream)?;
            for j in 0..d {
                grad_mask[j] += dx[j] * (pattern[j] - x[j]) / n;
                grad_pattern[j] += dx[j] * mask[j] / n;
            }
        }
        loss += lambda * mask.iter().sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::divergence(step, "non-finite reversal loss"));
        }
        losses.push(loss);
        for j in 0..d {
            grad_mask[j] += lambda;
            let sm = mask[j] * (1.0 - mask[j]);
            let sp = pattern[j] * (1.0 - pattern[j]);
            mask_raw[j] -= rate * grad_mask[j] * sm;
            pattern_raw[j] -= rate * grad_pattern[j] * sp;
        }
    }

    let mask: Vec<f64> = mask_raw.iter().map(|&v| sigmoid(v)).collect();
    let pattern: Vec<f64> = pattern_raw.iter().map(|&v| sigmoid(v)).collect();
    let mask_norm = mask.iter().sum();
    let mut hits = 0usize;
    for x in probes {
        let x_t: Vec<f64> = x
            .iter()
            .zip(mask.iter().zip(&pattern))
            .map(|(&xv, (&m, &p))| xv * (1.0 - m) + p * m)
            .collect();
        if argmax(&forward(model, &x_t)?) == target {
            hits += 1;
        }
    }
    Ok((
        ReversedTrigger {
            class_id: target,
            mask,
            pattern,
            mask_norm,
            attack_success: hits as f64 / n,
        },
        losses,
    ))
}

/// Reverse a minimal trigger toward one class.
pub fn reverse_trigger(
    model: &MlpModel,
    target: usize,
    probes: &[Vec<f64>],
    lambda: f64,
    steps: usize,
    rate: f64,
    init_seed: u64,
) -> Result<ReversedTrigger> {
    reverse_trigger_traced(model, target, probes, lambda, steps, rate, init_seed)
        .map(|(trigger, _)| trigger)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Run trigger reversal for every class and compute MAD-based anomaly
/// indices: `|norm - median| / (1.4826 * MAD)`. The model score grows with
/// the most anomalous class.
pub fn nc_report(model: &MlpModel, probes: &[Vec<f64>], cfg: &NcConfig) -> Result<AnomalyReport> {
    let k = model.output_dim();
    if k < 2 {
        return Err(Error::invalid("NC report needs a multi-class model"));
    }
    let mut mask_norms = Vec::with_capacity(k);
    for class in 0..k {
        let reversed = reverse_trigger(
            model,
            class,
            probes,
            cfg.lambda,
            cfg.steps,
            cfg.rate,
            seed::derive_seed(cfg.seed, class as u64),
        )?;
        mask_norms.push(reversed.mask_norm);
    }
    let mut sorted = mask_norms.clone();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut deviations: Vec<f64> = mask_norms.iter().map(|&v| (v - med).abs()).collect();
    deviations.sort_by(f64::total_cmp);
    let mad = median(&deviations);
    let denom = (1.4826 * mad).max(1e-12);
    let anomaly_index: Vec<f64> = mask_norms.iter().map(|&v| (v - med).abs() / denom).collect();
    let max_anomaly = anomaly_index.iter().cloned().fold(0.0_f64, f64::max);
    Ok(AnomalyReport {
        mask_norms,
        anomaly_index,
        model_score: max_anomaly / (1.0 + max_anomaly),
    })
}

/// Shannon entropy (natural log) of a probability vector.
fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Mean output entropy of `x` blended 50/50 with the first `n_blends` pool
/// inputs. Low entropy under blending marks a trigger that survives mixing.
pub fn strip_entropy(
    model: &MlpModel,
    x: &[f64],
    blend_pool: &[Vec<f64>],
    n_blends: usize,
) -> Result<f64> {
    if n_blends == 0 || n_blends > blend_pool.len() {
        return Err(Error::invalid(
            "n_blends must be in 1..=|blend_pool|",
        ));
    }
    let mut total = 0.0;
    for partner in &blend_pool[..n_blends] {
        if partner.len() != x.len() {
            return Err(Error::shape("blend partner dimension mismatch"));
        }
        let blended: Vec<f64> = x
            .iter()
            .zip(partner)
            .map(|(&a, &b)| 0.5 * a + 0.5 * b)
            .collect();
        total += entropy(&forward(model, &blended)?);
    }
    Ok(total / n_blends as f64)
}

/// Nearest-rank lower percentile of a sample.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Per-model STRIP score: the fraction of trigger-embedded probes whose
/// blended entropy falls below the 10th percentile of the clean probes'
/// blended entropies. Clean models score near 0.1 by construction.
pub fn strip_model_score(
    model: &MlpModel,
    clean_probes: &[Vec<f64>],
    trigger: &TriggerSpec,
    blend_pool: &[Vec<f64>],
    n_blends: usize,
) -> Result<f64> {
    if clean_probes.is_empty() {
        return Err(Error::invalid("strip score needs clean probes"));
    }
    let clean_entropies: Vec<f64> = clean_probes
        .iter()
        .map(|x| strip_entropy(model, x, blend_pool, n_blends))
        .collect::<Result<_>>()?;
    let threshold = percentile(&clean_entropies, 0.10);
    let mut low = 0usize;
    for x in clean_probes {
        let x_t = embed_trigger(x, trigger)?;
        if strip_entropy(model, &x_t, blend_pool, n_blends)? < threshold {
            low += 1;
        }
    }
    Ok(low as f64 / clean_probes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, TargetRule};
    use crate::nn::{init_model, Activation, OutputHead};

    fn probe_inputs(n: usize, d: usize, seed_value: u64) -> Vec<Vec<f64>> {
        let data = make_blobs(2, d, n / 2 + 1, 0.08, seed_value).unwrap();
        data.samples.into_iter().take(n).map(|s| s.x).collect()
    }

    #[test]
    fn entropy_extremes() {
        let k = 5;
        assert!((entropy(&vec![1.0 / k as f64; k]) - (k as f64).ln()).abs() < 1e-12);
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn strip_entropy_of_uniform_model_is_ln_k() {
        let mut m = init_model(&[4, 3], Activation::Tanh, OutputHead::Softmax, 0).unwrap();
        for w in m.weights.iter_mut().flatten() {
            *w = 0.0;
        }
        let pool = probe_inputs(8, 4, 1);
        let h = strip_entropy(&m, &pool[0], &pool, 4).unwrap();
        assert!((h - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn strip_entropy_of_one_hot_model_is_zero() {
        let mut m = init_model(&[4, 3], Activation::Tanh, OutputHead::Softmax, 0).unwrap();
        for w in m.weights.iter_mut().flatten() {
            *w = 0.0;
        }
        m.biases[0] = vec![500.0, 0.0, 0.0];
        let pool = probe_inputs(8, 4, 2);
        let h = strip_entropy(&m, &pool[0], &pool, 4).unwrap();
        assert!(h < 1e-9, "entropy {h}");
    }

    #[test]
    fn strip_entropy_validates_blend_count() {
        let m = init_model(&[4, 3], Activation::Tanh, OutputHead::Softmax, 0).unwrap();
        let pool = probe_inputs(4, 4, 3);
        assert!(strip_entropy(&m, &pool[0], &pool, 0).is_err());
        assert!(strip_entropy(&m, &pool[0], &pool, 9).is_err());
    }

    #[test]
    fn reversal_loss_descends_with_small_rate() {
        let data = make_blobs(3, 6, 40, 0.07, 5).unwrap();
        let model = crate::train::train_classifier(
            &data,
            &crate::train::TrainConfig {
                epochs: 30,
                ..Default::default()
            },
        )
        .unwrap();
        let probes: Vec<Vec<f64>> = data.samples.iter().take(16).map(|s| s.x.clone()).collect();
        let (_, losses) =
            reverse_trigger_traced(&model, 0, &probes, 0.05, 120, 1e-2, 7).unwrap();
        let violations = losses
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-9)
            .count();
        assert!(
            violations * 20 <= losses.len(),
            "{violations} increases out of {} steps",
            losses.len()
        );
    }

    #[test]
    fn huge_lambda_collapses_mask() {
        let data = make_blobs(3, 6, 40, 0.07, 9).unwrap();
        let model = crate::train::train_classifier(
            &data,
            &crate::train::TrainConfig {
                epochs: 30,
                ..Default::default()
            },
        )
        .unwrap();
        let probes: Vec<Vec<f64>> = data.samples.iter().take(16).map(|s| s.x.clone()).collect();
        let reversed = reverse_trigger(&model, 1, &probes, 1e3, 200, 0.5, 11).unwrap();
        assert!(reversed.mask_norm < 0.1, "mask norm {}", reversed.mask_norm);
        assert!(reversed.attack_success <= 0.5);
    }

    #[test]
    fn reversal_is_deterministic() {
        let data = make_blobs(3, 6, 30, 0.07, 13).unwrap();
        let model = crate::train::train_classifier(
            &data,
            &crate::train::TrainConfig {
                epochs: 20,
                ..Default::default()
            },
        )
        .unwrap();
        let probes: Vec<Vec<f64>> = data.samples.iter().take(12).map(|s| s.x.clone()).collect();
        let a = reverse_trigger(&model, 2, &probes, 0.05, 60, 0.3, 15).unwrap();
        let b = reverse_trigger(&model, 2, &probes, 0.05, 60, 0.3, 15).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_op_trigger_scores_like_clean_calibration() {
        let data = make_blobs(3, 6, 40, 0.07, 17).unwrap();
        let model = crate::train::train_classifier(
            &data,
            &crate::train::TrainConfig {
                epochs: 40,
                ..Default::default()
            },
        )
        .unwrap();
        let probes: Vec<Vec<f64>> = data.samples.iter().take(30).map(|s| s.x.clone()).collect();
        let pool: Vec<Vec<f64>> = data.samples.iter().skip(30).take(10).map(|s| s.x.clone()).collect();
        let noop = TriggerSpec::new(vec![0.0; 6], vec![0.5; 6], TargetRule::Fixed(0)).unwrap();
        let score = strip_model_score(&model, &probes, &noop, &pool, 8).unwrap();
        assert!((score - 0.1).abs() <= 0.15, "no-op score {score}");
    }
}
