//! Greedy selection of the trigger-embedding set, driven by the total test
//! loss of a freshly retrained model, plus the supermodularity diagnostics
//! that justify the greedy move.
//!
//! The engine is generic over a subset objective so the same machinery runs
//! against trained models (each evaluation retrains from a fixed seed) and
//! against analytic surrogate set functions where exhaustive verification is
//! feasible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

use crate::data::{build_poisoned_dataset, poison_labels, Dataset, TriggerSpec};
use crate::error::{Error, Result};
use crate::seed;
use crate::train::{mean_ce, train_classifier, TrainConfig};

/// The two test-loss components and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTriple {
    pub l_t: f64,
    pub l_c: f64,
    pub l_tot: f64,
}

impl LossTriple {
    pub fn new(l_t: f64, l_c: f64) -> Self {
        LossTriple {
            l_t,
            l_c,
            l_tot: l_t + l_c,
        }
    }
}

/// Which candidate the greedy step commits to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Pick the candidate minimizing the resulting total loss (the standard
    /// greedy move for supermodular minimization).
    MinResultingLoss,
    /// Pick the candidate maximizing the resulting total loss, reading the
    /// published selection line literally; the acceptance test in the next
    /// line still requires a decrease, so this usually stops immediately.
    LiteralArgmax,
}

/// Greedy selection hyperparameters. `batch_groups = 1` scores individual
/// samples; `batch_groups = N > 1` partitions the training set into N random
/// groups and scores whole groups (at most N retrainings per accepted step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub epsilon: f64,
    pub batch_groups: usize,
    pub retrain_epochs: usize,
    pub max_fraction_cap: f64,
    pub selection_rule: SelectionRule,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            epsilon: 0.01,
            batch_groups: 20,
            retrain_epochs: 40,
            max_fraction_cap: 0.5,
            selection_rule: SelectionRule::MinResultingLoss,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config("greedy epsilon must lie in [0,1)".into()));
        }
        if self.batch_groups == 0 {
            return Err(Error::Config("batch_groups must be positive".into()));
        }
        if !(self.max_fraction_cap > 0.0 && self.max_fraction_cap <= 1.0) {
            return Err(Error::Config("max_fraction_cap must lie in (0,1]".into()));
        }
        if self.retrain_epochs == 0 {
            return Err(Error::Config("retrain_epochs must be positive".into()));
        }
        self.train.validate()
    }
}

/// One accepted greedy step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub unit_id: usize,
    #[serde(rename = "L_T")]
    pub l_t: f64,
    #[serde(rename = "L_C")]
    pub l_c: f64,
    #[serde(rename = "L_tot")]
    pub l_tot: f64,
}

/// Output of a greedy run: the selected sample indices, the loss before any
/// selection, the accepted-step history, and the final poisoning fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    pub selected: Vec<usize>,
    pub initial: LossTriple,
    pub history: Vec<GreedyStep>,
    pub final_alpha: f64,
}

/// Train a fresh model on `train` with the samples at `selected` indices
/// trigger-embedded and relabeled, then evaluate mean cross-entropy on the
/// trigger test set (`l_t`) and the clean test set (`l_c`).
pub fn total_test_loss(
    train: &Dataset,
    selected: &[usize],
    test_clean: &Dataset,
    test_trojan: &Dataset,
    trigger: &TriggerSpec,
    train_cfg: &TrainConfig,
) -> Result<LossTriple> {
    if test_clean.is_empty() || test_trojan.is_empty() {
        return Err(Error::invalid("total_test_loss needs nonempty test sets"));
    }
    let distinct: BTreeSet<usize> = selected.iter().copied().collect();
    if distinct.len() != selected.len() {
        return Err(Error::invalid("selected indices contain duplicates"));
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= train.len()) {
        return Err(Error::invalid(format!("selected index {bad} out of range")));
    }
    let poisoned = build_poisoned_dataset(train, selected, trigger)?;
    let model = train_classifier(&poisoned, train_cfg)?;
    let l_t = mean_ce(&model, test_trojan)?;
    let l_c = mean_ce(&model, test_clean)?;
    Ok(LossTriple::new(l_t, l_c))
}

/// The trigger-embedded-and-relabeled version of a clean test set.
pub fn make_trojan_test(test: &Dataset, trigger: &TriggerSpec) -> Result<Dataset> {
    let samples = poison_labels(&test.samples, trigger, test.num_classes, true)?;
    Dataset::new(samples, test.feature_dim, test.num_classes)
}

/// Outcome of the generic greedy engine, in unit space.
#[derive(Debug, Clone)]
pub struct EngineOutcome {
    pub selected_units: Vec<usize>,
    pub initial: LossTriple,
    pub history: Vec<GreedyStep>,
}

/// Greedy minimization over abstract units.
///
/// Starting from the empty set, each step scores every remaining unit by the
/// objective value after hypothetically adding it, commits per the selection
/// rule (ties to the lowest unit id), and accepts only while the committed
/// unit drops the total below `(1 - epsilon)` times the current total and
/// the selected sample count stays within the fraction cap.
pub fn greedy_minimize<F>(
    objective: &F,
    unit_sizes: &[usize],
    total_samples: usize,
    epsilon: f64,
    max_fraction_cap: f64,
    rule: SelectionRule,
) -> Result<EngineOutcome>
where
    F: Fn(&[usize]) -> Result<LossTriple> + Sync,
{
    let initial = objective(&[])?;
    let mut current = initial;
    let mut selected: Vec<usize> = Vec::new();
    let mut selected_samples = 0usize;
    let mut remaining: Vec<usize> = (0..unit_sizes.len()).collect();
    let mut history = Vec::new();

    while !remaining.is_empty() {
        let scored: Vec<(usize, LossTriple)> = remaining
            .par_iter()
            .map(|&u| {
                let mut candidate = selected.clone();
                candidate.push(u);
                candidate.sort_unstable();
                objective(&candidate).map(|t| (u, t))
            })
            .collect::<Result<_>>()?;
        let best = scored
            .iter()
            .min_by(|a, b| {
                let ord = match rule {
                    SelectionRule::MinResultingLoss => a.1.l_tot.total_cmp(&b.1.l_tot),
                    SelectionRule::LiteralArgmax => b.1.l_tot.total_cmp(&a.1.l_tot),
                };
                ord.then(a.0.cmp(&b.0))
            })
            .copied()
            .expect("remaining is nonempty");

        let (unit, triple) = best;
        let would_be = selected_samples + unit_sizes[unit];
        if (would_be as f64) > max_fraction_cap * total_samples as f64 + 1e-12 {
            break;
        }
        if !(triple.l_tot < (1.0 - epsilon) * current.l_tot) {
            break;
        }
        selected.push(unit);
        selected_samples = would_be;
        remaining.retain(|&u| u != unit);
        current = triple;
        history.push(GreedyStep {
            unit_id: unit,
            l_t: triple.l_t,
            l_c: triple.l_c,
            l_tot: triple.l_tot,
        });
    }

    Ok(EngineOutcome {
        selected_units: selected,
        initial,
        history,
    })
}

/// Partition `0..n` into `groups` random, near-equal, non-overlapping groups.
fn partition_indices(n: usize, groups: usize, seed_value: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed_value);
    idx.shuffle(&mut rng);
    let groups = groups.min(n).max(1);
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % groups].push(i);
    }
    for g in &mut out {
        g.sort_unstable();
    }
    out
}

/// Greedy trigger-set selection on a real dataset.
pub fn greedy_select(
    train: &Dataset,
    test_clean: &Dataset,
    test_trojan: &Dataset,
    trigger: &TriggerSpec,
    cfg: &GreedyConfig,
) -> Result<GreedyResult> {
    cfg.validate()?;
    let train_cfg = TrainConfig {
        epochs: cfg.retrain_epochs,
        ..cfg.train.clone()
    };
    let units: Vec<Vec<usize>> = if cfg.batch_groups <= 1 {
        (0..train.len()).map(|i| vec![i]).collect()
    } else {
        partition_indices(train.len(), cfg.batch_groups, seed::derive_seed(cfg.seed, 0x9B))
    };
    let unit_sizes: Vec<usize> = units.iter().map(Vec::len).collect();
    let expand = |unit_ids: &[usize]| -> Vec<usize> {
        let mut samples: Vec<usize> = unit_ids
            .iter()
            .flat_map(|&u| units[u].iter().copied())
            .collect();
        samples.sort_unstable();
        samples
    };
    let objective = |unit_ids: &[usize]| -> Result<LossTriple> {
        total_test_loss(
            train,
            &expand(unit_ids),
            test_clean,
            test_trojan,
            trigger,
            &train_cfg,
        )
    };
    let outcome = greedy_minimize(
        &objective,
        &unit_sizes,
        train.len(),
        cfg.epsilon,
        cfg.max_fraction_cap,
        cfg.selection_rule,
    )?;
    let selected = expand(&outcome.selected_units);
    let final_alpha = selected.len() as f64 / train.len() as f64;
    Ok(GreedyResult {
        selected,
        initial: outcome.initial,
        history: outcome.history,
        final_alpha,
    })
}

/// The four marginal decreases from the diminishing-returns condition:
/// adding the same probe to the smaller set `S1` and the larger set `S2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalGains {
    pub m_c_s: f64,
    pub m_t_s: f64,
    pub m_c_k: f64,
    pub m_t_k: f64,
}

impl MarginalGains {
    /// True when the small-set marginal decrease dominates the large-set one.
    pub fn satisfies_condition(&self) -> bool {
        self.m_c_s + self.m_t_s >= self.m_c_k + self.m_t_k
    }
}

/// Marginal gains computed against an arbitrary subset objective.
pub fn marginal_gains_with<F>(
    objective: &F,
    s1: &[usize],
    s2: &[usize],
    probe: usize,
) -> Result<MarginalGains>
where
    F: Fn(&[usize]) -> Result<LossTriple>,
{
    let set1: BTreeSet<usize> = s1.iter().copied().collect();
    let set2: BTreeSet<usize> = s2.iter().copied().collect();
    if set1.len() != s1.len() || set2.len() != s2.len() {
        return Err(Error::invalid("chain sets contain duplicates"));
    }
    if !set1.is_subset(&set2) {
        return Err(Error::invalid("chain requires S1 to be a subset of S2"));
    }
    if set2.contains(&probe) {
        return Err(Error::invalid("probe must lie outside S2"));
    }
    let with_probe = |s: &BTreeSet<usize>| -> Vec<usize> {
        let mut v: Vec<usize> = s.iter().copied().collect();
        v.push(probe);
        v.sort_unstable();
        v
    };
    let v1: Vec<usize> = set1.iter().copied().collect();
    let v2: Vec<usize> = set2.iter().copied().collect();
    let base1 = objective(&v1)?;
    let plus1 = objective(&with_probe(&set1))?;
    let base2 = objective(&v2)?;
    let plus2 = objective(&with_probe(&set2))?;
    Ok(MarginalGains {
        m_c_s: base1.l_c - plus1.l_c,
        m_t_s: base1.l_t - plus1.l_t,
        m_c_k: base2.l_c - plus2.l_c,
        m_t_k: base2.l_t - plus2.l_t,
    })
}

/// Marginal gains on a real dataset; every evaluation retrains from the
/// shared seed in `train_cfg`, so the only varying input is the subset.
#[allow(clippy::too_many_arguments)]
pub fn marginal_gains(
    train: &Dataset,
    test_clean: &Dataset,
    test_trojan: &Dataset,
    trigger: &TriggerSpec,
    s1: &[usize],
    s2: &[usize],
    probe: usize,
    train_cfg: &TrainConfig,
) -> Result<MarginalGains> {
    if probe >= train.len() {
        return Err(Error::invalid("probe index out of range"));
    }
    let objective = |selected: &[usize]| -> Result<LossTriple> {
        total_test_loss(train, selected, test_clean, test_trojan, trigger, train_cfg)
    };
    marginal_gains_with(&objective, s1, s2, probe)
}

/// Verdict of the exhaustive supermodularity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupermodularityVerdict {
    pub is_supermodular: bool,
    /// Largest observed violation of the supermodular inequality (0 when the
    /// function is supermodular).
    pub worst_violation: f64,
}

/// Exhaustively test `g(V + v) - g(V) <= g(U + v) - g(U)` for every chain
/// `V ⊆ U` and `v ∉ U`. `values` must cover all `2^n` subsets, keyed by
/// bitmask over a ground set of at most 16 elements.
pub fn supermodularity_check(
    values: &HashMap<u64, f64>,
    ground_set_size: usize,
) -> Result<SupermodularityVerdict> {
    if ground_set_size == 0 || ground_set_size > 16 {
        return Err(Error::invalid("ground set size must lie in 1..=16"));
    }
    let full = 1u64 << ground_set_size;
    let get = |mask: u64| -> Result<f64> {
        values
            .get(&mask)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing value for subset mask {mask:#b}")))
    };
    let mut worst = f64::NEG_INFINITY;
    for upper in 0..full {
        let g_upper = get(upper)?;
        for v in 0..ground_set_size {
            let bit = 1u64 << v;
            if upper & bit != 0 {
                continue;
            }
            let marginal_upper = get(upper | bit)? - g_upper;
            // Enumerate submasks of `upper` (including the empty set).
            let mut sub = upper;
            loop {
                let marginal_sub = get(sub | bit)? - get(sub)?;
                worst = worst.max(marginal_sub - marginal_upper);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & upper;
            }
        }
    }
    let worst_violation = worst.max(0.0);
    Ok(SupermodularityVerdict {
        is_supermodular: worst <= 0.0,
        worst_violation,
    })
}

/// Tabulate a set function over all subsets of `0..n` for the checker.
pub fn tabulate_subsets(n: usize, f: impl Fn(u64) -> f64) -> HashMap<u64, f64> {
    (0..(1u64 << n)).map(|m| (m, f(m))).collect()
}

/// The analytic supermodular surrogate used wherever exhaustive verification
/// must be feasible: `f(S) = c - sum(w_i) + lambda * sum(w_i)^2`.
pub fn surrogate_loss(weights: &[f64], constant: f64, lambda: f64, selected: &[usize]) -> LossTriple {
    let s: f64 = selected.iter().map(|&i| weights[i]).sum();
    LossTriple::new(constant - s + lambda * s * s, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, split, TargetRule};

    fn surrogate_weights(n: usize, seed_value: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = seed::rng(seed_value);
        (0..n).map(|_| rng.random_range(0.1..0.5)).collect()
    }

    #[test]
    fn quadratic_cardinality_is_supermodular() {
        let values = tabulate_subsets(4, |m| (m.count_ones() as f64).powi(2));
        let verdict = supermodularity_check(&values, 4).unwrap();
        assert!(verdict.is_supermodular);
        assert_eq!(verdict.worst_violation, 0.0);
    }

    #[test]
    fn sqrt_cardinality_is_not_supermodular() {
        let values = tabulate_subsets(4, |m| (m.count_ones() as f64).sqrt());
        let verdict = supermodularity_check(&values, 4).unwrap();
        assert!(!verdict.is_supermodular);
        assert!(verdict.worst_violation > 0.0);
    }

    #[test]
    fn modular_function_is_super_and_submodular() {
        // Dyadic weights keep float sums exact.
        let w = [0.5, 0.25, 0.125, 0.0625];
        let value = |m: u64| -> f64 {
            (0..4)
                .filter(|&i| m & (1 << i) != 0)
                .map(|i| w[i as usize])
                .sum()
        };
        let values = tabulate_subsets(4, value);
        let verdict = supermodularity_check(&values, 4).unwrap();
        assert!(verdict.is_supermodular);
        assert_eq!(verdict.worst_violation, 0.0);
        // Negated (submodular direction) also passes with zero violation.
        let neg = tabulate_subsets(4, |m| -value(m));
        let verdict = supermodularity_check(&neg, 4).unwrap();
        assert!(verdict.is_supermodular);
        assert_eq!(verdict.worst_violation, 0.0);
    }

    #[test]
    fn checker_demands_complete_tables() {
        let mut values = tabulate_subsets(3, |m| m.count_ones() as f64);
        values.remove(&5);
        assert!(supermodularity_check(&values, 3).is_err());
    }

    #[test]
    fn greedy_with_near_one_epsilon_selects_nothing() {
        let w = surrogate_weights(8, 3);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        let sizes = vec![1usize; 8];
        let out = greedy_minimize(&objective, &sizes, 8, 0.99, 1.0, SelectionRule::MinResultingLoss)
            .unwrap();
        assert!(out.selected_units.is_empty());
        assert!(out.history.is_empty());
    }

    #[test]
    fn greedy_first_pick_matches_exhaustive_single_addition() {
        let n = 12;
        let w = surrogate_weights(n, 7);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        let sizes = vec![1usize; n];
        let out =
            greedy_minimize(&objective, &sizes, n, 0.0, 1.0, SelectionRule::MinResultingLoss)
                .unwrap();
        let exhaustive_best = (0..n)
            .min_by(|&a, &b| {
                let fa = surrogate_loss(&w, 10.0, 0.05, &[a]).l_tot;
                let fb = surrogate_loss(&w, 10.0, 0.05, &[b]).l_tot;
                fa.total_cmp(&fb).then(a.cmp(&b))
            })
            .unwrap();
        assert_eq!(out.selected_units[0], exhaustive_best);
    }

    #[test]
    fn greedy_history_is_strictly_decreasing() {
        let w = surrogate_weights(10, 11);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        let sizes = vec![1usize; 10];
        let out = greedy_minimize(&objective, &sizes, 10, 0.0, 1.0, SelectionRule::MinResultingLoss)
            .unwrap();
        assert!(!out.history.is_empty());
        let mut prev = out.initial.l_tot;
        for step in &out.history {
            assert!(step.l_tot < prev);
            prev = step.l_tot;
        }
    }

    #[test]
    fn greedy_selection_size_monotone_in_epsilon() {
        let w = surrogate_weights(10, 13);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        let sizes = vec![1usize; 10];
        let mut prev_len = usize::MAX;
        for eps in [0.0, 0.01, 0.05, 0.1] {
            let out =
                greedy_minimize(&objective, &sizes, 10, eps, 1.0, SelectionRule::MinResultingLoss)
                    .unwrap();
            assert!(out.selected_units.len() <= prev_len);
            prev_len = out.selected_units.len();
        }
    }

    #[test]
    fn fraction_cap_bounds_selection() {
        let w = surrogate_weights(10, 17);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        let sizes = vec![1usize; 10];
        let out = greedy_minimize(&objective, &sizes, 10, 0.0, 0.3, SelectionRule::MinResultingLoss)
            .unwrap();
        assert!(out.selected_units.len() <= 3);
    }

    #[test]
    fn marginal_gains_equal_when_chain_degenerate() {
        let w = surrogate_weights(8, 19);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        let g = marginal_gains_with(&objective, &[0, 2], &[0, 2], 5).unwrap();
        assert_eq!(g.m_c_s, g.m_c_k);
        assert_eq!(g.m_t_s, g.m_t_k);
    }

    #[test]
    fn marginal_gains_validate_chain() {
        let w = surrogate_weights(8, 23);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        assert!(marginal_gains_with(&objective, &[0, 1], &[0], 5).is_err());
        assert!(marginal_gains_with(&objective, &[0], &[0, 5], 5).is_err());
    }

    #[test]
    fn surrogate_satisfies_theorem_condition() {
        let n = 12;
        let w = surrogate_weights(n, 29);
        let objective =
            |sel: &[usize]| -> Result<LossTriple> { Ok(surrogate_loss(&w, 10.0, 0.05, sel)) };
        use rand::Rng;
        let mut rng = seed::rng(31);
        for _ in 0..100 {
            let mut pool: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            pool.shuffle(&mut rng);
            let k = rng.random_range(2..=6usize);
            let s = rng.random_range(1..k);
            let s2: Vec<usize> = pool[..k].to_vec();
            let s1: Vec<usize> = s2[..s].to_vec();
            let probe = pool[k];
            let g = marginal_gains_with(&objective, &s1, &s2, probe).unwrap();
            assert!(g.satisfies_condition(), "violated at {s1:?} in {s2:?} + {probe}");
        }
    }

    #[test]
    fn total_test_loss_is_deterministic_and_additive() {
        let data = make_blobs(3, 6, 20, 0.07, 41).unwrap();
        let (train, test) = split(&data, 0.3, 43).unwrap();
        let trigger =
            TriggerSpec::block(6, 0, 2, 0.0, vec![0.95; 6], TargetRule::Fixed(0)).unwrap();
        let test_trojan = make_trojan_test(&test, &trigger).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let a = total_test_loss(&train, &[0, 3, 5], &test, &test_trojan, &trigger, &cfg).unwrap();
        let b = total_test_loss(&train, &[0, 3, 5], &test, &test_trojan, &trigger, &cfg).unwrap();
        assert_eq!(a.l_t.to_bits(), b.l_t.to_bits());
        assert_eq!(a.l_c.to_bits(), b.l_c.to_bits());
        assert_eq!(a.l_tot, a.l_t + a.l_c);
    }

    #[test]
    fn partition_covers_everything_without_overlap() {
        let parts = partition_indices(23, 5, 3);
        assert_eq!(parts.len(), 5);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }
}
