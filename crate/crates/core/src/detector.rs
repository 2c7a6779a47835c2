//! Output-based Trojaned-model detector.
//!
//! The detector is a small sigmoid-headed network `h` over a classifier's
//! output vector. It is trained by gradient ascent on the log-likelihood
//! objective `E[ln(1 - h(z_T))] + E[ln h(z_C)]`, where `z_T`/`z_C` are model
//! outputs on random Gaussian probing inputs. `h` therefore estimates the
//! probability that an output came from a clean model; the per-model
//! detection score is `1 - mean h`, higher meaning "more likely Trojaned".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, backward, forward, Direction, Gradients, MlpModel, OutputHead, PROB_FLOOR,
};
use crate::seed;

/// Gaussian probing-input specification: diagonal covariance, fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    #[serde(rename = "mu")]
    pub mean: Vec<f64>,
    #[serde(rename = "sigma_diag")]
    pub cov_diag: Vec<f64>,
    #[serde(rename = "n")]
    pub n_queries: usize,
    pub seed: u64,
}

impl QuerySpec {
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.cov_diag.len() {
            return Err(Error::shape("query mean/cov length mismatch"));
        }
        if self.mean.is_empty() {
            return Err(Error::invalid("query spec has zero dimension"));
        }
        if self.cov_diag.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("query covariance entries must be positive"));
        }
        if self.n_queries == 0 {
            return Err(Error::invalid("n_queries must be positive"));
        }
        Ok(())
    }

    /// Same Gaussian, different seed — used to resample queries per game
    /// iteration.
    pub fn with_seed(&self, seed: u64) -> Self {
        QuerySpec {
            seed,
            ..self.clone()
        }
    }
}

/// Detector network plus the query distribution it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub net: MlpModel,
    pub query: QuerySpec,
}

impl DetectorModel {
    pub fn new(net: MlpModel, query: QuerySpec) -> Result<Self> {
        if net.output_head != OutputHead::SigmoidScalar {
            return Err(Error::invalid("detector net must have a sigmoid_scalar head"));
        }
        query.validate()?;
        Ok(DetectorModel { net, query })
    }

    /// Detector probability-of-clean for one output vector.
    pub fn h(&self, z: &[f64]) -> Result<f64> {
        Ok(forward(&self.net, z)?[0])
    }

    /// Number of classes of the classifiers this detector inspects.
    pub fn class_dim(&self) -> usize {
        self.net.input_dim()
    }
}

/// Which population an output batch came from. Clean models carry label 0,
/// Trojaned models label 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceLabel {
    Clean = 0,
    Trojan = 1,
}

/// A batch of classifier output vectors with a shared source label.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBatch {
    pub vectors: Vec<Vec<f64>>,
    pub source_label: SourceLabel,
}

impl OutputBatch {
    pub fn new(vectors: Vec<Vec<f64>>, source_label: SourceLabel) -> Result<Self> {
        for (i, z) in vectors.iter().enumerate() {
            let sum: f64 = z.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "output vector {i} sums to {sum}, not a probability vector"
                )));
            }
        }
        Ok(OutputBatch {
            vectors,
            source_label,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Draw the probing-input set from the spec's diagonal Gaussian. Queries are
/// deliberately NOT clipped to [0,1]: they are random probes, not images.
pub fn sample_queries(spec: &QuerySpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    use rand::Rng;
    Ok((0..spec.n_queries)
        .map(|_| {
            spec.mean
                .iter()
                .zip(&spec.cov_diag)
                .map(|(&m, &v)| {
                    let n: f64 = rng.sample(rand_distr::StandardNormal);
                    m + v.sqrt() * n
                })
                .collect()
        })
        .collect())
}

/// Mean of `ln(1 - h(z))` over a set of output vectors — the term shared
/// bit-for-bit between the detector objective and the adversary objective.
pub fn mean_log_one_minus_h(detector: &DetectorModel, outputs: &[Vec<f64>]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::invalid("empty output batch"));
    }
    let mut total = 0.0;
    for z in outputs {
        let h = detector.h(z)?;
        total += (1.0 - h).max(PROB_FLOOR).ln();
    }
    Ok(total / outputs.len() as f64)
}

/// Mean of `ln h(z)` over a set of output vectors.
pub(crate) fn mean_log_h(detector: &DetectorModel, outputs: &[Vec<f64>]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::invalid("empty output batch"));
    }
    let mut total = 0.0;
    for z in outputs {
        total += detector.h(z)?.max(PROB_FLOOR).ln();
    }
    Ok(total / outputs.len() as f64)
}

/// The detector objective `L_D`: mean `ln(1-h)` over Trojan outputs plus mean
/// `ln h` over clean outputs. Always <= 0; the detector ascends it.
pub fn detector_loss(
    detector: &DetectorModel,
    trojan_outputs: &OutputBatch,
    clean_outputs: &OutputBatch,
) -> Result<f64> {
    if trojan_outputs.source_label != SourceLabel::Trojan
        || clean_outputs.source_label != SourceLabel::Clean
    {
        return Err(Error::invalid("output batches carry the wrong source labels"));
    }
    if trojan_outputs.is_empty() || clean_outputs.is_empty() {
        return Err(Error::invalid("detector loss needs nonempty batches"));
    }
    Ok(mean_log_one_minus_h(detector, &trojan_outputs.vectors)?
        + mean_log_h(detector, &clean_outputs.vectors)?)
}

/// `L_D` and its gradient with respect to the detector parameters.
pub fn detector_loss_grad(
    detector: &DetectorModel,
    trojan_zs: &[Vec<f64>],
    clean_zs: &[Vec<f64>],
) -> Result<(f64, Gradients)> {
    if trojan_zs.is_empty() || clean_zs.is_empty() {
        return Err(Error::invalid("detector loss needs nonempty batches"));
    }
    let mut grads = Gradients::zeros_like(&detector.net);
    let mut loss = 0.0;
    let nt = trojan_zs.len() as f64;
    for z in trojan_zs {
        let h = detector.h(z)?;
        let one_minus = (1.0 - h).max(PROB_FLOOR);
        loss += one_minus.ln() / nt;
        let upstream = vec![-1.0 / one_minus];
        let (g, _) = backward(&detector.net, z, &upstream)?;
        grads.add_scaled(&g, 1.0 / nt);
    }
    let nc = clean_zs.len() as f64;
    for z in clean_zs {
        let h = detector.h(z)?;
        let hc = h.max(PROB_FLOOR);
        loss += hc.ln() / nc;
        let upstream = vec![1.0 / hc];
        let (g, _) = backward(&detector.net, z, &upstream)?;
        grads.add_scaled(&g, 1.0 / nc);
    }
    Ok((loss, grads))
}

/// Gradient-ascend `L_D` on fixed output batches for `epochs` full-batch steps.
pub fn train_detector_on_outputs(
    detector: &DetectorModel,
    trojan_zs: &[Vec<f64>],
    clean_zs: &[Vec<f64>],
    epochs: usize,
    rate: f64,
) -> Result<DetectorModel> {
    let mut current = detector.clone();
    for epoch in 0..epochs {
        let (loss, grads) = detector_loss_grad(&current, trojan_zs, clean_zs)?;
        if !loss.is_finite() {
            return Err(Error::divergence(epoch, "non-finite detector loss"));
        }
        let net = nn::sgd_step(&current.net, &grads, rate, Direction::Ascent)
            .map_err(|e| Error::divergence(epoch, e.to_string()))?;
        current.net = net;
    }
    Ok(current)
}

/// Train the detector against populations of Trojaned and clean models.
///
/// Queries come from the detector's own spec. If the two populations have
/// unequal sizes the larger one is deterministically subsampled to balance.
pub fn train_detector(
    detector: &DetectorModel,
    trojan_models: &[MlpModel],
    clean_models: &[MlpModel],
    epochs: usize,
    rate: f64,
) -> Result<DetectorModel> {
    if trojan_models.is_empty() || clean_models.is_empty() {
        return Err(Error::invalid("detector training needs both populations"));
    }
    let n = trojan_models.len().min(clean_models.len());
    let subsample = |models: &[MlpModel], tag: u64| -> Vec<MlpModel> {
        if models.len() == n {
            return models.to_vec();
        }
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..models.len()).collect();
        let mut rng = seed::rng(seed::derive_seed(detector.query.seed, tag));
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx.sort_unstable();
        idx.into_iter().map(|i| models[i].clone()).collect()
    };
    let trojans = subsample(trojan_models, 0xB41A);
    let cleans = subsample(clean_models, 0xC1EA);

    let queries = sample_queries(&detector.query)?;
    let mut trojan_zs = Vec::with_capacity(trojans.len() * queries.len());
    for m in &trojans {
        for q in &queries {
            trojan_zs.push(forward(m, q)?);
        }
    }
    let mut clean_zs = Vec::with_capacity(cleans.len() * queries.len());
    for m in &cleans {
        for q in &queries {
            clean_zs.push(forward(m, q)?);
        }
    }
    train_detector_on_outputs(detector, &trojan_zs, &clean_zs, epochs, rate)
}

/// Per-model detection score: `1 - mean h(f(x))` over the detector's own
/// query set. Higher means "more likely Trojaned".
pub fn model_score(detector: &DetectorModel, model: &MlpModel) -> Result<f64> {
    let queries = sample_queries(&detector.query)?;
    let mut total = 0.0;
    for q in &queries {
        total += detector.h(&forward(model, q)?)?;
    }
    Ok(1.0 - total / queries.len() as f64)
}

/// Mann-Whitney AUC: fraction of (positive, negative) pairs where the
/// positive scores strictly higher, ties counted half. Positives are the
/// Trojaned models.
pub fn auc(scores_positive: &[f64], scores_negative: &[f64]) -> Result<f64> {
    if scores_positive.is_empty() || scores_negative.is_empty() {
        return Err(Error::invalid("auc needs nonempty score lists"));
    }
    let mut wins = 0.0_f64;
    for &p in scores_positive {
        for &n in scores_negative {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (scores_positive.len() * scores_negative.len()) as f64)
}

// ---------------------------------------------------------------------------
// Detector checkpoints: the model checkpoint fields plus a "query" object.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DetectorCheckpointV1 {
    version: u32,
    layer_dims: Vec<usize>,
    activation: nn::Activation,
    head: nn::OutputHead,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    query: QuerySpec,
}

pub fn to_detector_json(detector: &DetectorModel) -> Result<String> {
    let ck = DetectorCheckpointV1 {
        version: 1,
        layer_dims: detector.net.layer_dims.clone(),
        activation: detector.net.hidden_activation,
        head: detector.net.output_head,
        weights: detector.net.weights.clone(),
        biases: detector.net.biases.clone(),
        query: detector.query.clone(),
    };
    Ok(serde_json::to_string_pretty(&ck)?)
}

pub fn from_detector_json(json: &str) -> Result<DetectorModel> {
    let ck: DetectorCheckpointV1 = serde_json::from_str(json)?;
    if ck.version != 1 {
        return Err(Error::Serialization(format!(
            "unsupported detector checkpoint version {}",
            ck.version
        )));
    }
    let net = MlpModel {
        layer_dims: ck.layer_dims,
        weights: ck.weights,
        biases: ck.biases,
        hidden_activation: ck.activation,
        output_head: ck.head,
    };
    DetectorModel::new(net, ck.query)
}
