//! The iterated min-max co-evolution between a Trojaned classifier and an
//! output-based detector.
//!
//! Each iteration resamples a Gaussian probing set, lets the detector ascend
//! its log-likelihood objective against the current Trojan, then lets the
//! adversary descend the three-term objective (evade the detector, fit the
//! trigger-embedded samples, fit the clean samples). At the equilibrium the
//! Trojan's output distribution on probing inputs becomes indistinguishable
//! from a clean model's, which is what the divergence diagnostics track.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::data::{Dataset, Sample};
use crate::detector::{
    auc, mean_log_h, mean_log_one_minus_h, model_score, sample_queries, train_detector_on_outputs,
    DetectorModel, OutputBatch,
};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, argmax};
use crate::nn::{self, backward, forward, Direction, Gradients, MlpModel, PROB_FLOOR};
use crate::seed;
use crate::train::ce_batch;

/// Seed-stream tags for per-iteration randomness.
const STREAM_QUERIES: u64 = 0x51;
const STREAM_SHUFFLE: u64 = 0x52;
const STREAM_TROJAN_SHUFFLE: u64 = 0x53;

/// Hyperparameters of the min-max game.
///
/// `gamma_t = 0` freezes the adversary (static-Trojan control run); both
/// rates are otherwise in (0, 1). `start_iteration` offsets the iteration
/// counter so a run resumed from checkpoints reproduces the original
/// trajectory's query streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub gamma_d: f64,
    pub gamma_t: f64,
    pub iterations: usize,
    pub inner_detector_epochs: usize,
    pub inner_trojan_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub start_iteration: usize,
    #[serde(default = "default_js_bins")]
    pub js_bins: usize,
}

fn default_js_bins() -> usize {
    20
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            gamma_d: 0.05,
            gamma_t: 0.05,
            iterations: 20,
            inner_detector_epochs: 5,
            inner_trojan_epochs: 5,
            batch_size: 32,
            seed: 0,
            start_iteration: 0,
            js_bins: 20,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_d > 0.0 && self.gamma_d < 1.0) {
            return Err(Error::Config("gamma_d must lie in (0,1)".into()));
        }
        if !(self.gamma_t >= 0.0 && self.gamma_t < 1.0) {
            return Err(Error::Config(
                "gamma_t must lie in [0,1); 0 freezes the adversary".into(),
            ));
        }
        if self.inner_detector_epochs == 0 || self.inner_trojan_epochs == 0 {
            return Err(Error::Config("inner epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("game batch_size must be positive".into()));
        }
        if self.js_bins == 0 {
            return Err(Error::Config("js_bins must be positive".into()));
        }
        Ok(())
    }
}

/// One iteration's diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "L_D")]
    pub l_d: f64,
    #[serde(rename = "L_T")]
    pub l_t: f64,
    pub acc: f64,
    pub asr: f64,
    pub auc: f64,
    pub js: f64,
}

/// Per-iteration records of a full game run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub records: Vec<IterationRecord>,
}

/// Everything a game run produces: the final Trojan, the detector that last
/// trained *before* the adversary's final move (iteration t-1 semantics), the
/// detector retrained *after* it (iteration t, defender moves last), and the
/// trace.
#[derive(Debug, Clone)]
pub struct MmRunResult {
    pub trojan: MlpModel,
    pub detector_t_minus_1: DetectorModel,
    pub detector_t: DetectorModel,
    pub trace: GameTrace,
}

/// Outputs of one model on a set of inputs.
pub fn model_outputs(model: &MlpModel, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|x| forward(model, x)).collect()
}

/// The three components of the adversary objective: detector-evasion term,
/// trigger cross-entropy, clean cross-entropy. The trigger term is zero when
/// the trigger-embedded set is empty.
pub fn trojan_loss_parts(
    trojan: &MlpModel,
    detector: &DetectorModel,
    queries: &[Vec<f64>],
    trojan_set: &[Sample],
    clean_set: &[Sample],
) -> Result<(f64, f64, f64)> {
    if clean_set.is_empty() {
        return Err(Error::invalid("adversary loss needs a nonempty clean set"));
    }
    if queries.is_empty() {
        return Err(Error::invalid("adversary loss needs probing queries"));
    }
    let zs = model_outputs(trojan, queries)?;
    let evasion = mean_log_one_minus_h(detector, &zs)?;
    let trigger_ce = if trojan_set.is_empty() {
        0.0
    } else {
        let mut total = 0.0;
        for s in trojan_set {
            total += nn::cross_entropy(&forward(trojan, &s.x)?, s.y)?;
        }
        total / trojan_set.len() as f64
    };
    let mut clean_ce = 0.0;
    for s in clean_set {
        clean_ce += nn::cross_entropy(&forward(trojan, &s.x)?, s.y)?;
    }
    clean_ce /= clean_set.len() as f64;
    Ok((evasion, trigger_ce, clean_ce))
}

/// The adversary objective `L_T` (sum of the three parts); minimized in
/// `theta_T`.
pub fn trojan_loss(
    trojan: &MlpModel,
    detector: &DetectorModel,
    queries: &[Vec<f64>],
    trojan_set: &[Sample],
    clean_set: &[Sample],
) -> Result<f64> {
    let (a, b, c) = trojan_loss_parts(trojan, detector, queries, trojan_set, clean_set)?;
    Ok(a + b + c)
}

/// `L_T` and its gradient with respect to the Trojan model parameters. The
/// evasion term chains through the detector via its input gradient.
pub fn trojan_loss_grad(
    trojan: &MlpModel,
    detector: &DetectorModel,
    queries: &[Vec<f64>],
    trojan_set: &[Sample],
    clean_set: &[Sample],
) -> Result<(f64, Gradients)> {
    if clean_set.is_empty() {
        return Err(Error::invalid("adversary loss needs a nonempty clean set"));
    }
    if queries.is_empty() {
        return Err(Error::invalid("adversary loss needs probing queries"));
    }
    let mut grads = Gradients::zeros_like(trojan);
    let mut loss = 0.0;

    let nq = queries.len() as f64;
    for x in queries {
        let z = forward(trojan, x)?;
        let h = detector.h(&z)?;
        let one_minus = (1.0 - h).max(PROB_FLOOR);
        loss += one_minus.ln() / nq;
        // d/dz of ln(1-h(z)), via the detector's input gradient.
        let (_, dz) = backward(&detector.net, &z, &[-1.0 / one_minus])?;
        let (g, _) = backward(trojan, x, &dz)?;
        grads.add_scaled(&g, 1.0 / nq);
    }

    if !trojan_set.is_empty() {
        let refs: Vec<&Sample> = trojan_set.iter().collect();
        let (l, g) = ce_batch(trojan, &refs)?;
        loss += l;
        grads.add_scaled(&g, 1.0);
    }
    let refs: Vec<&Sample> = clean_set.iter().collect();
    let (l, g) = ce_batch(trojan, &refs)?;
    loss += l;
    grads.add_scaled(&g, 1.0);

    Ok((loss, grads))
}

fn sample_slice_accuracy(model: &MlpModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for s in samples {
        if argmax(&forward(model, &s.x)?) == s.y {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Run the alternating min-max loop.
///
/// Per iteration: resample the probing set, ascend the detector for
/// `inner_detector_epochs` full-batch steps, then descend the adversary for
/// `inner_trojan_epochs` minibatch passes. After the loop the detector is
/// retrained once more against the final Trojan so both "adversary last" and
/// "defender last" checkpoints exist.
pub fn run_mm_trojan(
    trojan_init: &MlpModel,
    clean_pool: &[MlpModel],
    detector_init: &DetectorModel,
    clean_data: &Dataset,
    trojan_set: &[Sample],
    cfg: &GameConfig,
) -> Result<MmRunResult> {
    cfg.validate()?;
    if clean_pool.is_empty() {
        return Err(Error::invalid("game needs a pool of clean models"));
    }
    if clean_data.is_empty() {
        return Err(Error::invalid("game needs clean training data"));
    }

    let mut trojan = trojan_init.clone();
    let mut detector = detector_init.clone();
    let mut trace = GameTrace::default();

    let clean_outputs_on = |queries: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        let mut zs = Vec::with_capacity(clean_pool.len() * queries.len());
        for m in clean_pool {
            zs.extend(model_outputs(m, queries)?);
        }
        Ok(zs)
    };

    for i in 0..cfg.iterations {
        let iter = cfg.start_iteration + i;
        let qspec = detector
            .query
            .with_seed(seed::derive_seed2(cfg.seed, iter as u64, STREAM_QUERIES));
        let queries = sample_queries(&qspec)?;

        // Detector ascent against the current Trojan (Trojan outputs are
        // fixed during this phase).
        let trojan_zs = model_outputs(&trojan, &queries)?;
        let clean_zs = clean_outputs_on(&queries)?;
        detector = train_detector_on_outputs(
            &detector,
            &trojan_zs,
            &clean_zs,
            cfg.inner_detector_epochs,
            cfg.gamma_d,
        )
        .map_err(|e| Error::divergence(iter, format!("detector update failed: {e}")))?;

        // Adversary descent.
        if cfg.gamma_t > 0.0 {
            for epoch in 0..cfg.inner_trojan_epochs {
                use rand::seq::SliceRandom;
                let mut order: Vec<usize> = (0..clean_data.len()).collect();
                let mut rng = seed::rng(seed::derive_seed2(
                    seed::derive_seed(cfg.seed, iter as u64),
                    epoch as u64,
                    STREAM_SHUFFLE,
                ));
                order.shuffle(&mut rng);
                let mut trojan_order: Vec<usize> = (0..trojan_set.len()).collect();
                let mut rng_t = seed::rng(seed::derive_seed2(
                    seed::derive_seed(cfg.seed, iter as u64),
                    epoch as u64,
                    STREAM_TROJAN_SHUFFLE,
                ));
                trojan_order.shuffle(&mut rng_t);

                let trojan_chunk = cfg.batch_size.min(trojan_set.len().max(1));
                for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
                    let clean_batch: Vec<Sample> =
                        chunk.iter().map(|&j| clean_data.samples[j].clone()).collect();
                    let trojan_batch: Vec<Sample> = if trojan_set.is_empty() {
                        Vec::new()
                    } else {
                        (0..trojan_chunk)
                            .map(|o| {
                                let j = trojan_order[(b * trojan_chunk + o) % trojan_set.len()];
                                trojan_set[j].clone()
                            })
                            .collect()
                    };
                    let (loss, grads) =
                        trojan_loss_grad(&trojan, &detector, &queries, &trojan_batch, &clean_batch)?;
                    if !loss.is_finite() {
                        return Err(Error::divergence(iter, "non-finite adversary loss"));
                    }
                    trojan = nn::sgd_step(&trojan, &grads, cfg.gamma_t, Direction::Descent)
                        .map_err(|e| Error::divergence(iter, e.to_string()))?;
                }
            }
        }

        // End-of-iteration diagnostics, recomputable from the checkpoints.
        let trojan_zs_end = model_outputs(&trojan, &queries)?;
        let l_d = mean_log_one_minus_h(&detector, &trojan_zs_end)?
            + mean_log_h(&detector, &clean_zs)?;
        let l_t = trojan_loss(&trojan, &detector, &queries, trojan_set, &clean_data.samples)?;
        let acc = accuracy(&trojan, clean_data)?;
        let asr = sample_slice_accuracy(&trojan, trojan_set)?;
        let trojan_score = model_score(&detector, &trojan)?;
        let clean_scores: Vec<f64> = clean_pool
            .iter()
            .map(|m| model_score(&detector, m))
            .collect::<Result<_>>()?;
        let auc_current = auc(&[trojan_score], &clean_scores)?;
        let js = js_proxy(
            &OutputBatch::new(trojan_zs_end, crate::detector::SourceLabel::Trojan)?,
            &OutputBatch::new(clean_zs, crate::detector::SourceLabel::Clean)?,
            cfg.js_bins,
        )?;
        for (name, v) in [
            ("L_D", l_d),
            ("L_T", l_t),
            ("acc", acc),
            ("asr", asr),
            ("auc", auc_current),
            ("js", js),
        ] {
            if !v.is_finite() {
                return Err(Error::divergence(iter, format!("non-finite trace value {name}")));
            }
        }
        trace.records.push(IterationRecord {
            iter,
            l_d,
            l_t,
            acc,
            asr,
            auc: auc_current,
            js,
        });
    }

    // Defender's extra move: retrain against the final Trojan so the
    // "defender moved last" checkpoint exists. Skipped for zero iterations,
    // where the run must return its inputs unchanged.
    let detector_t = if cfg.iterations > 0 {
        let post_iter = cfg.start_iteration + cfg.iterations;
        let qspec = detector
            .query
            .with_seed(seed::derive_seed2(cfg.seed, post_iter as u64, STREAM_QUERIES));
        let queries = sample_queries(&qspec)?;
        let trojan_zs = model_outputs(&trojan, &queries)?;
        let clean_zs = clean_outputs_on(&queries)?;
        train_detector_on_outputs(
            &detector,
            &trojan_zs,
            &clean_zs,
            cfg.inner_detector_epochs,
            cfg.gamma_d,
        )
        .map_err(|e| Error::divergence(post_iter, format!("final detector update failed: {e}")))?
    } else {
        detector.clone()
    };

    Ok(MmRunResult {
        trojan,
        detector_t_minus_1: detector,
        detector_t,
        trace,
    })
}

/// Maximizer of `x -> a*ln(1-x) + b*ln(x)` over [0,1]: `b / (a + b)`.
pub fn optimal_discriminator_value(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(Error::invalid("weights must be nonnegative"));
    }
    if a == 0.0 && b == 0.0 {
        return Err(Error::invalid("optimal discriminator undefined for (0,0)"));
    }
    Ok(b / (a + b))
}

/// Histogram estimate of `KL(q_T || m) + KL(q_C || m)` with `m = (q_T+q_C)/2`,
/// over output vectors discretized on the probability simplex (the first
/// `k-1` coordinates each into `n_bins` cells). Zero when the batches share a
/// distribution, `2 ln 2` when their supports are disjoint.
pub fn js_proxy(
    trojan_outputs: &OutputBatch,
    clean_outputs: &OutputBatch,
    n_bins: usize,
) -> Result<f64> {
    if trojan_outputs.is_empty() || clean_outputs.is_empty() {
        return Err(Error::invalid("js_proxy needs nonempty batches"));
    }
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be positive"));
    }
    let k = trojan_outputs.vectors[0].len();
    if k < 2 || clean_outputs.vectors.iter().any(|z| z.len() != k) {
        return Err(Error::shape("output batches must share length k >= 2"));
    }
    let bin_of = |z: &[f64]| -> u64 {
        let mut idx: u64 = 0;
        for &v in &z[..k - 1] {
            let cell = ((v * n_bins as f64).floor() as i64).clamp(0, n_bins as i64 - 1) as u64;
            idx = idx * n_bins as u64 + cell;
        }
        idx
    };
    let mut hist: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for z in &trojan_outputs.vectors {
        hist.entry(bin_of(z)).or_default().0 += 1.0;
    }
    for z in &clean_outputs.vectors {
        hist.entry(bin_of(z)).or_default().1 += 1.0;
    }
    let nt = trojan_outputs.len() as f64;
    let nc = clean_outputs.len() as f64;
    let mut total = 0.0;
    for (pt_raw, pc_raw) in hist.values() {
        let pt = pt_raw / nt;
        let pc = pc_raw / nc;
        let m = 0.5 * (pt + pc);
        if pt > 0.0 {
            total += pt * (pt / m).ln();
        }
        if pc > 0.0 {
            total += pc * (pc / m).ln();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::detector::{QuerySpec, SourceLabel};
    use crate::nn::{init_model, Activation, OutputHead};

    fn uniform_classifier(d: usize, k: usize) -> MlpModel {
        let mut m = init_model(&[d, k], Activation::Tanh, OutputHead::Softmax, 0).unwrap();
        for w in m.weights.iter_mut().flatten() {
            *w = 0.0;
        }
        m
    }

    fn constant_detector(k: usize, bias: f64) -> DetectorModel {
        let mut net =
            init_model(&[k, 1], Activation::Tanh, OutputHead::SigmoidScalar, 0).unwrap();
        net.weights[0] = vec![0.0; k];
        net.biases[0] = vec![bias];
        DetectorModel::new(
            net,
            QuerySpec {
                mean: vec![0.5; 2],
                cov_diag: vec![0.25; 2],
                n_queries: 8,
                seed: 1,
            },
        )
        .unwrap()
    }

    fn toy_samples(k: usize) -> Vec<Sample> {
        (0..k)
            .map(|y| Sample {
                x: vec![0.2, 0.8],
                y,
            })
            .collect()
    }

    #[test]
    fn trojan_loss_hand_example() {
        // h = 0.5 constant, uniform 2-class outputs: ln(0.5) + ln2 + ln2 = ln2.
        let trojan = uniform_classifier(2, 2);
        let det = constant_detector(2, 0.0);
        let queries = vec![vec![0.1, 0.9], vec![0.4, 0.4]];
        let samples = toy_samples(2);
        let l = trojan_loss(&trojan, &det, &queries, &samples, &samples).unwrap();
        assert!((l - 2.0_f64.ln()).abs() < 1e-12, "L_T = {l}");
    }

    #[test]
    fn trojan_loss_drops_trigger_term_when_empty() {
        let trojan = uniform_classifier(2, 2);
        let det = constant_detector(2, 0.0);
        let queries = vec![vec![0.1, 0.9]];
        let samples = toy_samples(2);
        let l = trojan_loss(&trojan, &det, &queries, &[], &samples).unwrap();
        let expected = -(2.0_f64.ln()) + 2.0_f64.ln(); // -ln2 + mean clean CE (= ln2)
        assert!((l - expected).abs() < 1e-12);
        assert!(trojan_loss(&trojan, &det, &queries, &samples, &[]).is_err());
    }

    #[test]
    fn evasion_term_decreases_in_h() {
        let trojan = uniform_classifier(2, 2);
        let queries = vec![vec![0.3, 0.3]];
        let samples = toy_samples(2);
        let low = constant_detector(2, -1.0); // h ~ 0.27
        let high = constant_detector(2, 1.0); // h ~ 0.73
        let (e_low, _, _) =
            trojan_loss_parts(&trojan, &low, &queries, &samples, &samples).unwrap();
        let (e_high, _, _) =
            trojan_loss_parts(&trojan, &high, &queries, &samples, &samples).unwrap();
        assert!(e_high < e_low);
    }

    #[test]
    fn shared_evasion_term_is_bit_equal_across_objectives() {
        let trojan = init_model(&[2, 5, 3], Activation::Tanh, OutputHead::Softmax, 3).unwrap();
        let det = DetectorModel::new(
            init_model(&[3, 8, 1], Activation::Tanh, OutputHead::SigmoidScalar, 4).unwrap(),
            QuerySpec {
                mean: vec![0.5; 2],
                cov_diag: vec![0.25; 2],
                n_queries: 12,
                seed: 5,
            },
        )
        .unwrap();
        let queries = sample_queries(&det.query).unwrap();
        let samples = toy_samples(3);
        let (evasion, _, _) =
            trojan_loss_parts(&trojan, &det, &queries, &samples, &samples).unwrap();
        // Same term through the detector-objective path.
        let zs = model_outputs(&trojan, &queries).unwrap();
        let via_detector = mean_log_one_minus_h(&det, &zs).unwrap();
        assert_eq!(evasion.to_bits(), via_detector.to_bits());
    }

    #[test]
    fn trojan_gradient_matches_finite_differences() {
        let trojan = init_model(&[2, 4, 3], Activation::Tanh, OutputHead::Softmax, 6).unwrap();
        let det = DetectorModel::new(
            init_model(&[3, 6, 1], Activation::Tanh, OutputHead::SigmoidScalar, 7).unwrap(),
            QuerySpec {
                mean: vec![0.5; 2],
                cov_diag: vec![0.25; 2],
                n_queries: 4,
                seed: 8,
            },
        )
        .unwrap();
        let queries = sample_queries(&det.query).unwrap();
        let trojan_samples = toy_samples(3);
        let clean_samples = toy_samples(3);
        let (_, grads) =
            trojan_loss_grad(&trojan, &det, &queries, &trojan_samples, &clean_samples).unwrap();
        let h = 1e-5;
        for i in 0..trojan.param_count() {
            let orig = trojan.param(i);
            let mut plus = trojan.clone();
            plus.set_param(i, orig + h);
            let mut minus = trojan.clone();
            minus.set_param(i, orig - h);
            let lp = trojan_loss(&plus, &det, &queries, &trojan_samples, &clean_samples).unwrap();
            let lm = trojan_loss(&minus, &det, &queries, &trojan_samples, &clean_samples).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = {
                let mut idx = i;
                let mut val = None;
                for w in &grads.weights {
                    if idx < w.len() {
                        val = Some(w[idx]);
                        break;
                    }
                    idx -= w.len();
                }
                val.unwrap_or_else(|| {
                    let mut idx = i - trojan.weights.iter().map(Vec::len).sum::<usize>();
                    for b in &grads.biases {
                        if idx < b.len() {
                            return b[idx];
                        }
                        idx -= b.len();
                    }
                    unreachable!()
                })
            };
            let scale = analytic.abs().max(numeric.abs()).max(1.0);
            assert!(
                (analytic - numeric).abs() / scale < 1e-6,
                "param {i}: {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn zero_iterations_returns_inputs_unchanged() {
        let data = make_blobs(2, 4, 10, 0.05, 9).unwrap();
        let trojan = init_model(&[4, 6, 2], Activation::Tanh, OutputHead::Softmax, 1).unwrap();
        let clean = vec![init_model(&[4, 6, 2], Activation::Tanh, OutputHead::Softmax, 2).unwrap()];
        let det = DetectorModel::new(
            init_model(&[2, 8, 1], Activation::Tanh, OutputHead::SigmoidScalar, 3).unwrap(),
            QuerySpec {
                mean: vec![0.5; 4],
                cov_diag: vec![0.25; 4],
                n_queries: 8,
                seed: 4,
            },
        )
        .unwrap();
        let cfg = GameConfig {
            iterations: 0,
            ..GameConfig::default()
        };
        let out = run_mm_trojan(&trojan, &clean, &det, &data, &[], &cfg).unwrap();
        assert_eq!(out.trojan, trojan);
        assert_eq!(out.detector_t_minus_1, det);
        assert_eq!(out.detector_t, det);
        assert!(out.trace.records.is_empty());
    }

    #[test]
    fn game_is_deterministic_and_traces_every_iteration() {
        let data = make_blobs(2, 4, 12, 0.06, 10).unwrap();
        let trojan = init_model(&[4, 6, 2], Activation::Tanh, OutputHead::Softmax, 11).unwrap();
        let clean: Vec<MlpModel> = (0..3)
            .map(|s| {
                crate::train::train_classifier(
                    &data,
                    &crate::train::TrainConfig {
                        epochs: 5,
                        init_seed: 100 + s,
                        ..Default::default()
                    },
                )
                .unwrap()
            })
            .collect();
        let det = DetectorModel::new(
            init_model(&[2, 8, 1], Activation::Tanh, OutputHead::SigmoidScalar, 12).unwrap(),
            QuerySpec {
                mean: vec![0.5; 4],
                cov_diag: vec![0.25; 4],
                n_queries: 16,
                seed: 13,
            },
        )
        .unwrap();
        let trigger = crate::data::TriggerSpec::block(
            4,
            0,
            2,
            0.0,
            vec![0.9; 4],
            crate::data::TargetRule::Fixed(1),
        )
        .unwrap();
        let trojan_set = crate::data::poisoned_subset(&data, &[0, 1, 2], &trigger).unwrap();
        let cfg = GameConfig {
            iterations: 3,
            seed: 77,
            ..GameConfig::default()
        };
        let a = run_mm_trojan(&trojan, &clean, &det, &data, &trojan_set, &cfg).unwrap();
        let b = run_mm_trojan(&trojan, &clean, &det, &data, &trojan_set, &cfg).unwrap();
        assert_eq!(a.trojan, b.trojan);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.records.len(), 3);
        assert_eq!(a.trace.records[0].iter, 0);
        assert_eq!(a.trace.records[2].iter, 2);
    }

    #[test]
    fn frozen_adversary_keeps_trojan_constant() {
        let data = make_blobs(2, 4, 10, 0.06, 14).unwrap();
        let trojan = init_model(&[4, 6, 2], Activation::Tanh, OutputHead::Softmax, 15).unwrap();
        let clean = vec![init_model(&[4, 6, 2], Activation::Tanh, OutputHead::Softmax, 16).unwrap()];
        let det = DetectorModel::new(
            init_model(&[2, 8, 1], Activation::Tanh, OutputHead::SigmoidScalar, 17).unwrap(),
            QuerySpec {
                mean: vec![0.5; 4],
                cov_diag: vec![0.25; 4],
                n_queries: 8,
                seed: 18,
            },
        )
        .unwrap();
        let cfg = GameConfig {
            iterations: 4,
            gamma_t: 0.0,
            ..GameConfig::default()
        };
        let out = run_mm_trojan(&trojan, &clean, &det, &data, &[], &cfg).unwrap();
        assert_eq!(out.trojan, trojan);
        assert_ne!(out.detector_t_minus_1, det); // detector still adapted
    }

    #[test]
    fn optimal_discriminator_examples() {
        assert_eq!(optimal_discriminator_value(2.0, 2.0).unwrap(), 0.5);
        assert_eq!(optimal_discriminator_value(1.0, 3.0).unwrap(), 0.75);
        assert!(optimal_discriminator_value(0.0, 0.0).is_err());
        assert!(optimal_discriminator_value(-1.0, 1.0).is_err());
    }

    #[test]
    fn js_proxy_identical_batches_is_zero() {
        let zs = vec![vec![0.2, 0.8], vec![0.7, 0.3], vec![0.5, 0.5]];
        let t = OutputBatch::new(zs.clone(), SourceLabel::Trojan).unwrap();
        let c = OutputBatch::new(zs, SourceLabel::Clean).unwrap();
        assert_eq!(js_proxy(&t, &c, 20).unwrap(), 0.0);
    }

    #[test]
    fn js_proxy_disjoint_batches_is_two_ln_two() {
        let t = OutputBatch::new(vec![vec![0.05, 0.95]; 4], SourceLabel::Trojan).unwrap();
        let c = OutputBatch::new(vec![vec![0.95, 0.05]; 4], SourceLabel::Clean).unwrap();
        let js = js_proxy(&t, &c, 20).unwrap();
        assert!((js - 2.0 * 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn js_proxy_is_symmetric() {
        let a = OutputBatch::new(
            vec![vec![0.2, 0.8], vec![0.4, 0.6], vec![0.4, 0.6]],
            SourceLabel::Trojan,
        )
        .unwrap();
        let b = OutputBatch::new(vec![vec![0.3, 0.7], vec![0.9, 0.1]], SourceLabel::Clean).unwrap();
        let ab = js_proxy(&a, &b, 10).unwrap();
        let swapped_a = OutputBatch::new(b.vectors.clone(), SourceLabel::Trojan).unwrap();
        let swapped_b = OutputBatch::new(a.vectors.clone(), SourceLabel::Clean).unwrap();
        let ba = js_proxy(&swapped_a, &swapped_b, 10).unwrap();
        assert!((ab - ba).abs() < 1e-15);
    }
}
