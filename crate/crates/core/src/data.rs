//! Dataset construction, CSV ingestion, trigger embedding, and jumbo-style
//! trigger sampling for shadow-model generation.
//!
//! Features live in `[0,1]^d` (image-pixel semantics); triggers are applied
//! as `x * (1 - mask) + pattern * mask` followed by clipping.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed;

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

/// An ordered, homogeneous collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, feature_dim: usize, num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset must be nonempty"));
        }
        if num_classes < 2 {
            return Err(Error::invalid("dataset needs at least 2 classes"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != feature_dim {
                return Err(Error::shape(format!(
                    "sample {i} has {} features, expected {feature_dim}",
                    s.x.len()
                )));
            }
            if s.y >= num_classes {
                return Err(Error::invalid(format!(
                    "sample {i} label {} exceeds class count {num_classes}",
                    s.y
                )));
            }
            if s.x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(format!(
                    "sample {i} has a feature outside [0,1]"
                )));
            }
        }
        Ok(Dataset {
            samples,
            feature_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// How poisoned samples are relabeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "class")]
pub enum TargetRule {
    /// Every poisoned sample gets this class.
    Fixed(usize),
    /// Class `i` becomes `(i + 1) mod k`.
    AllToAll,
}

impl TargetRule {
    /// Target label for a sample whose true label is `y`.
    pub fn target(&self, y: usize, num_classes: usize) -> usize {
        match self {
            TargetRule::Fixed(t) => *t,
            TargetRule::AllToAll => (y + 1) % num_classes,
        }
    }
}

/// A trigger: per-coordinate mask and pattern plus the relabeling rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSpec {
    pub mask: Vec<f64>,
    pub pattern: Vec<f64>,
    pub target_rule: TargetRule,
}

impl TriggerSpec {
    pub fn new(mask: Vec<f64>, pattern: Vec<f64>, target_rule: TargetRule) -> Result<Self> {
        if mask.len() != pattern.len() {
            return Err(Error::shape("mask and pattern lengths differ"));
        }
        if mask
            .iter()
            .chain(pattern.iter())
            .any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::invalid("mask/pattern entries must lie in [0,1]"));
        }
        Ok(TriggerSpec {
            mask,
            pattern,
            target_rule,
        })
    }

    /// Contiguous block trigger: `mask = 1 - transparency` on
    /// `[start, start+size)`, zero elsewhere.
    pub fn block(
        dim: usize,
        start: usize,
        size: usize,
        transparency: f64,
        pattern: Vec<f64>,
        target_rule: TargetRule,
    ) -> Result<Self> {
        if start + size > dim {
            return Err(Error::invalid("trigger block exceeds feature dim"));
        }
        if !(0.0..=1.0).contains(&transparency) {
            return Err(Error::invalid("transparency must lie in [0,1]"));
        }
        let mut mask = vec![0.0; dim];
        for m in &mut mask[start..start + size] {
            *m = 1.0 - transparency;
        }
        TriggerSpec::new(mask, pattern, target_rule)
    }
}

/// Blend a trigger into an input: `x*(1-mask) + pattern*mask`, clipped to [0,1].
pub fn embed_trigger(x: &[f64], spec: &TriggerSpec) -> Result<Vec<f64>> {
    if x.len() != spec.mask.len() {
        return Err(Error::shape(format!(
            "input length {} does not match trigger length {}",
            x.len(),
            spec.mask.len()
        )));
    }
    Ok(x.iter()
        .zip(spec.mask.iter().zip(&spec.pattern))
        .map(|(&xv, (&m, &p))| (xv * (1.0 - m) + p * m).clamp(0.0, 1.0))
        .collect())
}

/// Relabel (and optionally trigger-embed) a slice of samples.
pub fn poison_labels(
    samples: &[Sample],
    spec: &TriggerSpec,
    num_classes: usize,
    embed_features: bool,
) -> Result<Vec<Sample>> {
    if let TargetRule::Fixed(t) = spec.target_rule {
        if t >= num_classes {
            return Err(Error::invalid(format!(
                "fixed target {t} exceeds class count {num_classes}"
            )));
        }
    }
    samples
        .iter()
        .map(|s| {
            let x = if embed_features {
                embed_trigger(&s.x, spec)?
            } else {
                s.x.clone()
            };
            Ok(Sample {
                x,
                y: spec.target_rule.target(s.y, num_classes),
            })
        })
        .collect()
}

/// Copy of `base` with the samples at `indices` trigger-embedded and relabeled.
pub fn build_poisoned_dataset(
    base: &Dataset,
    indices: &[usize],
    trigger: &TriggerSpec,
) -> Result<Dataset> {
    let mut samples = base.samples.clone();
    for &i in indices {
        let s = samples
            .get(i)
            .ok_or_else(|| Error::invalid(format!("poison index {i} out of range")))?;
        let poisoned = poison_labels(std::slice::from_ref(s), trigger, base.num_classes, true)?;
        samples[i] = poisoned.into_iter().next().unwrap();
    }
    Dataset::new(samples, base.feature_dim, base.num_classes)
}

/// The poisoned subset alone, as its own dataset (the trigger-embedded set
/// fed to the adversary's loss).
pub fn poisoned_subset(
    base: &Dataset,
    indices: &[usize],
    trigger: &TriggerSpec,
) -> Result<Vec<Sample>> {
    let picked: Vec<Sample> = indices
        .iter()
        .map(|&i| {
            base.samples
                .get(i)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("poison index {i} out of range")))
        })
        .collect::<Result<_>>()?;
    poison_labels(&picked, trigger, base.num_classes, true)
}

// ---------------------------------------------------------------------------
// Synthetic blobs
// ---------------------------------------------------------------------------

/// Class centers from an R_d low-discrepancy sequence, mapped into
/// `[0.2, 0.8]^d` so clusters sit away from the clipping boundary.
fn blob_centers(num_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    // Unique positive root of x^(d+1) = x + 1.
    let mut phi = 1.5_f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    (0..num_classes)
        .map(|c| {
            alphas
                .iter()
                .map(|a| {
                    let u = (0.5 + a * (c as f64 + 1.0)).fract();
                    0.2 + 0.6 * u
                })
                .collect()
        })
        .collect()
}

/// Synthetic Gaussian-cluster dataset: `n_per_class` samples around each of
/// `k` deterministic centers, clipped to `[0,1]^d`.
pub fn make_blobs(
    num_classes: usize,
    dim: usize,
    n_per_class: usize,
    cluster_spread: f64,
    seed_value: u64,
) -> Result<Dataset> {
    if num_classes < 2 || dim < 2 {
        return Err(Error::invalid("blobs need k >= 2 and d >= 2"));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be positive"));
    }
    if !(cluster_spread >= 0.0) {
        return Err(Error::invalid("cluster_spread must be nonnegative"));
    }
    let centers = blob_centers(num_classes, dim);
    let mut rng = seed::rng(seed_value);
    let mut samples = Vec::with_capacity(num_classes * n_per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            let x = center
                .iter()
                .map(|&m| {
                    let noise: f64 = rng.sample(StandardNormal);
                    (m + cluster_spread * noise).clamp(0.0, 1.0)
                })
                .collect();
            samples.push(Sample { x, y: c });
        }
    }
    Dataset::new(samples, dim, num_classes)
}

/// Stratified train/test split, deterministic for a given seed. The two
/// outputs are disjoint and their union is the input (as a multiset).
pub fn split(dataset: &Dataset, test_fraction: f64, seed_value: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test_fraction must lie in (0,1)"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class[s.y].push(i);
    }
    let mut rng = seed::rng(seed_value);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (c, idx) in by_class.iter_mut().enumerate() {
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {c} has {} samples; need at least 2 to split",
                idx.len()
            )));
        }
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize)
            .clamp(1, idx.len() - 1);
        test_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |ids: &[usize]| -> Result<Dataset> {
        Dataset::new(
            ids.iter().map(|&i| dataset.samples[i].clone()).collect(),
            dataset.feature_dim,
            dataset.num_classes,
        )
    };
    Ok((pick(&train_idx)?, pick(&test_idx)?))
}

// ---------------------------------------------------------------------------
// Jumbo trigger sampling
// ---------------------------------------------------------------------------

/// Distribution over trigger shapes, transparencies, poisoning ratios, and
/// target labels used when generating shadow Trojans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumboParams {
    pub mask_size_min: usize,
    pub mask_size_max: usize,
    /// Probability of a pure modification attack (transparency exactly zero).
    pub transparency_zero_prob: f64,
    pub transparency_lo: f64,
    pub transparency_hi: f64,
    pub poison_ratio_min: f64,
    pub poison_ratio_max: f64,
}

impl Default for JumboParams {
    fn default() -> Self {
        JumboParams {
            mask_size_min: 3,
            mask_size_max: 6,
            transparency_zero_prob: 0.5,
            transparency_lo: 0.0,
            transparency_hi: 0.7,
            poison_ratio_min: 0.05,
            poison_ratio_max: 0.5,
        }
    }
}

impl JumboParams {
    pub fn validate(&self) -> Result<()> {
        if self.mask_size_min == 0 || self.mask_size_min > self.mask_size_max {
            return Err(Error::invalid("jumbo mask size range is degenerate"));
        }
        if !(0.0..=1.0).contains(&self.transparency_zero_prob) {
            return Err(Error::invalid("transparency_zero_prob must lie in [0,1]"));
        }
        for v in [
            self.transparency_lo,
            self.transparency_hi,
            self.poison_ratio_min,
            self.poison_ratio_max,
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("jumbo ranges must lie within [0,1]"));
            }
        }
        if self.transparency_lo > self.transparency_hi
            || self.poison_ratio_min > self.poison_ratio_max
        {
            return Err(Error::invalid("jumbo range bounds are inverted"));
        }
        Ok(())
    }
}

/// Draw a trigger and poisoning ratio from the jumbo distribution.
///
/// The mask is a contiguous block of sampled size carrying `1 - transparency`
/// inside and 0 outside; the pattern is uniform in `[0,1]^d`; the target
/// label is uniform over classes.
pub fn sample_jumbo_trigger(
    params: &JumboParams,
    dim: usize,
    num_classes: usize,
    seed_value: u64,
) -> Result<(TriggerSpec, f64)> {
    params.validate()?;
    if params.mask_size_max > dim {
        return Err(Error::invalid("jumbo mask size exceeds feature dim"));
    }
    let mut rng = seed::rng(seed_value);
    let size = rng.random_range(params.mask_size_min..=params.mask_size_max);
    let start = rng.random_range(0..=dim - size);
    let transparency = if rng.random_range(0.0..1.0) < params.transparency_zero_prob {
        0.0
    } else if params.transparency_lo == params.transparency_hi {
        params.transparency_lo
    } else {
        rng.random_range(params.transparency_lo..params.transparency_hi)
    };
    let pattern: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
    let target = rng.random_range(0..num_classes);
    let ratio = if params.poison_ratio_min == params.poison_ratio_max {
        params.poison_ratio_min
    } else {
        rng.random_range(params.poison_ratio_min..params.poison_ratio_max)
    };
    let spec = TriggerSpec::block(
        dim,
        start,
        size,
        transparency,
        pattern,
        TargetRule::Fixed(target),
    )?;
    Ok((spec, ratio))
}

// ---------------------------------------------------------------------------
// CSV ingestion / export
// ---------------------------------------------------------------------------

/// Parse a dataset from the CSV format: optional `#classes=K` / `#scale=auto`
/// directive lines, a `f0,...,f{d-1},label` header, then one row per sample.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut declared_classes: Option<usize> = None;
    let mut scale_auto = false;
    let mut header: Option<(usize, usize)> = None; // (dim, line_no)
    let mut rows: Vec<(usize, Vec<f64>, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(directive) = line.strip_prefix('#') {
            let directive = directive.trim();
            if let Some(v) = directive.strip_prefix("classes=") {
                let k: usize = v.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("invalid class count '{v}'"),
                })?;
                declared_classes = Some(k);
            } else if directive == "scale=auto" {
                scale_auto = true;
            }
            // Other '#' lines are comments.
            continue;
        }
        if header.is_none() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 || cols.last() != Some(&"label") {
                return Err(Error::Parse {
                    line: line_no,
                    message: "header must end with a 'label' column".into(),
                });
            }
            header = Some((cols.len() - 1, line_no));
            continue;
        }
        let (dim, _) = header.unwrap();
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != dim + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", dim + 1, cols.len()),
            });
        }
        let mut x = Vec::with_capacity(dim);
        for c in &cols[..dim] {
            let v: f64 = c.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric feature '{c}'"),
            })?;
            x.push(v);
        }
        let y: usize = cols[dim].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("non-numeric label '{}'", cols[dim]),
        })?;
        rows.push((line_no, x, y));
    }

    let (dim, _) = header.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }

    let num_classes = match declared_classes {
        Some(k) => k,
        None => rows.iter().map(|(_, _, y)| y + 1).max().unwrap(),
    };
    for (line_no, _, y) in &rows {
        if *y >= num_classes {
            return Err(Error::Parse {
                line: *line_no,
                message: format!("label {y} >= class count {num_classes}"),
            });
        }
    }

    if scale_auto {
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for (_, x, _) in &rows {
            for (j, &v) in x.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        for (_, x, _) in &mut rows {
            for (j, v) in x.iter_mut().enumerate() {
                let range = maxs[j] - mins[j];
                *v = if range > 0.0 { (*v - mins[j]) / range } else { 0.0 };
            }
        }
    } else {
        for (line_no, x, _) in &rows {
            if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Parse {
                    line: *line_no,
                    message: "feature outside [0,1] (add '#scale=auto' to rescale)".into(),
                });
            }
        }
    }

    let samples = rows
        .into_iter()
        .map(|(_, x, y)| Sample { x, y })
        .collect();
    Dataset::new(samples, dim, num_classes)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Serialize a dataset in the same CSV dialect `parse_csv` reads; floats are
/// printed with shortest round-trip formatting so reload is exact.
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    out.push_str(&format!("#classes={}\n", dataset.num_classes));
    let header: Vec<String> = (0..dataset.feature_dim)
        .map(|j| format!("f{j}"))
        .collect();
    out.push_str(&header.join(","));
    out.push_str(",label\n");
    for s in &dataset.samples {
        let row: Vec<String> = s.x.iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push_str(&format!(",{}\n", s.y));
    }
    out
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(dataset))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_trigger_arithmetic() {
        let spec = TriggerSpec::new(vec![0.5, 0.0], vec![1.0, 1.0], TargetRule::Fixed(0)).unwrap();
        let out = embed_trigger(&[0.2, 0.8], &spec).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15);
        assert!((out[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn embed_trigger_zero_mask_is_identity() {
        let spec = TriggerSpec::new(vec![0.0; 4], vec![0.9; 4], TargetRule::AllToAll).unwrap();
        let x = [0.1, 0.4, 0.7, 1.0];
        assert_eq!(embed_trigger(&x, &spec).unwrap(), x.to_vec());
    }

    #[test]
    fn embed_trigger_full_mask_replaces_and_is_idempotent() {
        let spec = TriggerSpec::new(vec![1.0; 3], vec![0.3, 0.6, 0.9], TargetRule::Fixed(1)).unwrap();
        let once = embed_trigger(&[0.5, 0.5, 0.5], &spec).unwrap();
        assert_eq!(once, spec.pattern);
        let twice = embed_trigger(&once, &spec).unwrap();
        assert_eq!(twice, spec.pattern);
    }

    #[test]
    fn embed_trigger_stays_in_unit_cube() {
        let mut rng = seed::rng(5);
        for _ in 0..200 {
            let d = 6;
            let mask: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let pattern: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let spec = TriggerSpec::new(mask, pattern, TargetRule::AllToAll).unwrap();
            let out = embed_trigger(&x, &spec).unwrap();
            assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn embed_trigger_rejects_length_mismatch() {
        let spec = TriggerSpec::new(vec![0.0; 3], vec![0.0; 3], TargetRule::AllToAll).unwrap();
        assert!(embed_trigger(&[0.0, 0.0], &spec).is_err());
    }

    #[test]
    fn poison_fixed_target_relabels_all() {
        let spec = TriggerSpec::new(vec![0.0; 2], vec![0.0; 2], TargetRule::Fixed(3)).unwrap();
        let samples: Vec<Sample> = [0, 1, 2]
            .iter()
            .map(|&y| Sample { x: vec![0.0, 0.0], y })
            .collect();
        let out = poison_labels(&samples, &spec, 4, false).unwrap();
        assert!(out.iter().all(|s| s.y == 3));
    }

    #[test]
    fn poison_all_to_all_rotates_labels() {
        let spec = TriggerSpec::new(vec![0.0; 2], vec![0.0; 2], TargetRule::AllToAll).unwrap();
        let samples: Vec<Sample> = [0usize, 9, 4]
            .iter()
            .map(|&y| Sample { x: vec![0.0, 0.0], y })
            .collect();
        let out = poison_labels(&samples, &spec, 10, false).unwrap();
        let labels: Vec<usize> = out.iter().map(|s| s.y).collect();
        assert_eq!(labels, vec![1, 0, 5]);

        let swap = poison_labels(
            &[
                Sample { x: vec![0.0, 0.0], y: 0 },
                Sample { x: vec![0.0, 0.0], y: 1 },
            ],
            &spec,
            2,
            false,
        )
        .unwrap();
        assert_eq!(swap[0].y, 1);
        assert_eq!(swap[1].y, 0);
    }

    #[test]
    fn all_to_all_is_a_permutation_for_small_k() {
        for k in 2..=10 {
            let mut seen = vec![false; k];
            for y in 0..k {
                let t = TargetRule::AllToAll.target(y, k);
                assert!(t < k);
                assert!(!seen[t], "k={k}: target {t} hit twice");
                seen[t] = true;
            }
        }
    }

    #[test]
    fn blobs_are_deterministic_and_collapse_at_zero_spread() {
        let a = make_blobs(3, 4, 10, 0.05, 123).unwrap();
        let b = make_blobs(3, 4, 10, 0.05, 123).unwrap();
        assert_eq!(a, b);

        let degenerate = make_blobs(2, 4, 5, 0.0, 7).unwrap();
        for c in 0..2 {
            let class: Vec<&Sample> = degenerate.samples.iter().filter(|s| s.y == c).collect();
            for s in &class {
                assert_eq!(s.x, class[0].x);
            }
        }
    }

    #[test]
    fn blobs_reject_degenerate_args() {
        assert!(make_blobs(1, 4, 10, 0.1, 0).is_err());
        assert!(make_blobs(3, 1, 10, 0.1, 0).is_err());
        assert!(make_blobs(3, 4, 0, 0.1, 0).is_err());
        assert!(make_blobs(3, 4, 10, -0.1, 0).is_err());
    }

    #[test]
    fn blobs_are_linearly_separable() {
        // A linear (no-hidden-layer) softmax classifier reaches >= 0.95
        // held-out accuracy on well-separated blobs.
        let data = make_blobs(2, 2, 200, 0.05, 11).unwrap();
        let (train, test) = split(&data, 0.3, 3).unwrap();
        let cfg = crate::train::TrainConfig {
            hidden_dims: vec![],
            activation: crate::nn::Activation::Tanh,
            epochs: 80,
            rate: 0.5,
            batch_size: 32,
            init_seed: 1,
            shuffle_seed: 2,
        };
        let model = crate::train::train_classifier(&train, &cfg).unwrap();
        let acc = crate::metrics::accuracy(&model, &test).unwrap();
        assert!(acc >= 0.95, "linear accuracy {acc}");
    }

    #[test]
    fn split_is_stratified_and_lossless() {
        let data = make_blobs(2, 3, 50, 0.05, 9).unwrap();
        let (train, test) = split(&data, 0.5, 4).unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(test.len(), 50);
        for c in 0..2 {
            assert_eq!(test.samples.iter().filter(|s| s.y == c).count(), 25);
        }
        // Union as multisets: sort feature vectors lexicographically.
        let key = |s: &Sample| (s.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), s.y);
        let mut all: Vec<_> = data.samples.iter().map(key).collect();
        let mut reunited: Vec<_> = train.samples.iter().chain(&test.samples).map(key).collect();
        all.sort();
        reunited.sort();
        assert_eq!(all, reunited);

        let (t2, s2) = split(&data, 0.5, 4).unwrap();
        assert_eq!(t2, train);
        assert_eq!(s2, test);
    }

    #[test]
    fn split_rejects_tiny_classes() {
        let data = Dataset::new(
            vec![
                Sample { x: vec![0.1, 0.1], y: 0 },
                Sample { x: vec![0.2, 0.2], y: 0 },
                Sample { x: vec![0.9, 0.9], y: 1 },
            ],
            2,
            2,
        )
        .unwrap();
        assert!(split(&data, 0.5, 0).is_err());
    }

    #[test]
    fn jumbo_modification_has_binary_mask() {
        let params = JumboParams {
            transparency_zero_prob: 1.0,
            ..JumboParams::default()
        };
        let (spec, ratio) = sample_jumbo_trigger(&params, 12, 4, 99).unwrap();
        assert!(spec.mask.iter().all(|&m| m == 0.0 || m == 1.0));
        assert!((params.poison_ratio_min..=params.poison_ratio_max).contains(&ratio));
        // Embedded pixels equal the pattern inside the block.
        let x = vec![0.5; 12];
        let out = embed_trigger(&x, &spec).unwrap();
        for (j, &m) in spec.mask.iter().enumerate() {
            if m == 1.0 {
                assert_eq!(out[j], spec.pattern[j]);
            }
        }
    }

    #[test]
    fn jumbo_transparency_sets_in_block_mask_value() {
        let params = JumboParams {
            transparency_zero_prob: 0.0,
            transparency_lo: 0.3,
            transparency_hi: 0.3,
            ..JumboParams::default()
        };
        let (spec, _) = sample_jumbo_trigger(&params, 12, 4, 5).unwrap();
        let in_block: Vec<f64> = spec.mask.iter().cloned().filter(|&m| m > 0.0).collect();
        assert!(!in_block.is_empty());
        assert!(in_block.iter().all(|&m| (m - 0.7).abs() < 1e-15));
    }

    #[test]
    fn jumbo_seeds_differ_most_of_the_time() {
        let params = JumboParams::default();
        let mut distinct = 0;
        for s in 0..100u64 {
            let (a, ra) = sample_jumbo_trigger(&params, 16, 4, s).unwrap();
            let (b, rb) = sample_jumbo_trigger(&params, 16, 4, s + 1000).unwrap();
            if a != b || ra != rb {
                distinct += 1;
            }
        }
        assert!(distinct >= 90, "only {distinct} of 100 draws differed");
    }

    #[test]
    fn csv_parse_and_errors() {
        let ok = "#classes=2\nf0,f1,label\n0.1,0.2,0\n0.9,0.8,1\n";
        let ds = parse_csv(ok).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim, 2);
        assert_eq!(ds.num_classes, 2);

        let ragged = "#classes=2\nf0,f1,label\n0.1,0.2,0.3,0\n";
        match parse_csv(ragged) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_label = "#classes=2\nf0,f1,label\n0.1,0.2,5\n";
        assert!(matches!(parse_csv(bad_label), Err(Error::Parse { line: 3, .. })));

        let non_numeric = "f0,f1,label\n0.1,zebra,0\n0.3,0.1,1\n";
        assert!(matches!(parse_csv(non_numeric), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_scale_auto_normalizes() {
        let text = "#classes=2\n#scale=auto\nf0,f1,label\n10,4,0\n20,8,1\n15,6,1\n";
        let ds = parse_csv(text).unwrap();
        assert_eq!(ds.samples[0].x, vec![0.0, 0.0]);
        assert_eq!(ds.samples[1].x, vec![1.0, 1.0]);
        assert_eq!(ds.samples[2].x, vec![0.5, 0.5]);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let data = make_blobs(3, 4, 8, 0.07, 21).unwrap();
        let text = to_csv(&data);
        let back = parse_csv(&text).unwrap();
        assert_eq!(data, back);
    }
}
