//! Experiment orchestration behind the CLI subcommands: shadow training, the
//! min-max attack pipeline, greedy selection with curve sweeps, poisoning
//! ratio ablations, and the cross-detector comparison table.
//!
//! Every command is deterministic given config + master seed, validates the
//! config before any training starts, and embeds the config hash in each
//! JSON artifact it writes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::baselines::{nc_report, strip_model_score, NcConfig};
use crate::config::{streams, ExperimentConfig, TargetRuleKind};
use crate::data::{
    build_poisoned_dataset, poisoned_subset, Dataset, TargetRule, TriggerSpec,
};
use crate::detector::{auc, from_detector_json, model_score, to_detector_json, DetectorModel};
use crate::error::{Error, Result};
use crate::game::{run_mm_trojan, GameTrace, MmRunResult};
use crate::greedy::{greedy_select, make_trojan_test, GreedyResult};
use crate::metrics::{
    accuracy, attack_success_rate, build_shadow_population, evaluate_generations,
    sample_poison_indices, train_clean_shadow, DetectorGenerations,
    EvalReport, ShadowPopulation,
};
use crate::nn::{from_checkpoint_json, to_checkpoint_json, MlpModel};
use crate::seed::{derive_seed, derive_seed2};
use crate::train::train_classifier;

/// Everything the attack pipelines share: the data split, the configured
/// trigger, the trained vanilla detector, and the holdout clean pool.
#[derive(Clone)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub config_hash: String,
    pub train_data: Dataset,
    pub test_data: Dataset,
    pub trigger: TriggerSpec,
    pub shadows: ShadowPopulation,
    pub vanilla_detector: DetectorModel,
    pub holdout_cleans: Vec<MlpModel>,
}

/// Build the shared pipeline state. Fails fast on config errors.
pub fn build_context(cfg: &ExperimentConfig) -> Result<Context> {
    cfg.validate()?;
    let data = cfg.build_dataset()?;
    let (train_data, test_data) = crate::data::split(
        &data,
        cfg.dataset.test_fraction,
        derive_seed(cfg.seed, streams::SPLIT),
    )?;
    let trigger = cfg.trigger_spec(train_data.feature_dim, train_data.num_classes)?;

    let base_train = cfg.base_train_config(0, 0);
    let shadows = build_shadow_population(
        cfg.shadows.n_trojan,
        cfg.shadows.n_clean,
        &cfg.shadows.jumbo,
        &train_data,
        &base_train,
        derive_seed(cfg.seed, streams::SHADOWS),
    )?;
    let detector_init = cfg.detector_init(train_data.num_classes, train_data.feature_dim)?;
    let vanilla_detector = crate::detector::train_detector(
        &detector_init,
        &shadows.trojan_models(),
        &shadows.clean_models(),
        cfg.detector.epochs,
        cfg.detector.rate,
    )?;
    let holdout_cleans: Vec<MlpModel> = (0..cfg.eval.n_holdout_clean)
        .into_par_iter()
        .map(|i| {
            train_clean_shadow(
                &train_data,
                &base_train,
                derive_seed2(cfg.seed, streams::HOLDOUT_CLEAN, i as u64),
            )
            .map(|s| s.model)
        })
        .collect::<Result<_>>()?;

    Ok(Context {
        cfg: cfg.clone(),
        config_hash: cfg.hash(),
        train_data,
        test_data,
        trigger,
        shadows,
        vanilla_detector,
        holdout_cleans,
    })
}

/// Train a baseline (static) Trojan: poison a seeded subset, train once.
fn train_baseline_trojan(
    ctx: &Context,
    trigger: &TriggerSpec,
    poison_ratio: f64,
    stream_seed: u64,
) -> Result<MlpModel> {
    let idx = sample_poison_indices(
        ctx.train_data.len(),
        poison_ratio,
        derive_seed(stream_seed, 1),
    );
    let poisoned = build_poisoned_dataset(&ctx.train_data, &idx, trigger)?;
    let cfg = ctx
        .cfg
        .base_train_config(derive_seed(stream_seed, 2), derive_seed(stream_seed, 3));
    train_classifier(&poisoned, &cfg)
}

/// Run one full min-max game: pretrain a poisoned model as the adversary's
/// starting point, then co-evolve it against a copy of the vanilla detector.
fn mm_single(
    ctx: &Context,
    trigger: &TriggerSpec,
    poison_ratio: f64,
    stream_seed: u64,
) -> Result<MmRunResult> {
    let idx = sample_poison_indices(
        ctx.train_data.len(),
        poison_ratio,
        derive_seed(stream_seed, 1),
    );
    let init = if std::env::var("TG_MM_RANDOM_INIT").is_ok() {
        let mut dims = vec![ctx.train_data.feature_dim];
        dims.extend_from_slice(&ctx.cfg.train.hidden_dims);
        dims.push(ctx.train_data.num_classes);
        crate::nn::init_model(
            &dims,
            ctx.cfg.train.activation,
            crate::nn::OutputHead::Softmax,
            derive_seed(stream_seed, 2),
        )?
    } else {
        let poisoned = build_poisoned_dataset(&ctx.train_data, &idx, trigger)?;
        let cfg = ctx
            .cfg
            .base_train_config(derive_seed(stream_seed, 2), derive_seed(stream_seed, 3));
        train_classifier(&poisoned, &cfg)?
    };
    let pretrained = init;
    let trojan_set = poisoned_subset(&ctx.train_data, &idx, trigger)?;
    let mut game_cfg = ctx.cfg.game_config();
    game_cfg.seed = derive_seed(stream_seed, 4);
    let clean_pool = ctx.shadows.clean_models();
    run_mm_trojan(
        &pretrained,
        &clean_pool,
        &ctx.vanilla_detector,
        &ctx.train_data,
        &trojan_set,
        &game_cfg,
    )
}

/// Jumbo-sample a trigger for a holdout attack model, forcing the target
/// rule to match the configured attack mode.
fn jumbo_holdout_trigger(
    ctx: &Context,
    rule: TargetRuleKind,
    seed_value: u64,
) -> Result<(TriggerSpec, f64)> {
    let (mut trigger, ratio) = crate::data::sample_jumbo_trigger(
        &ctx.cfg.shadows.jumbo,
        ctx.train_data.feature_dim,
        ctx.train_data.num_classes,
        seed_value,
    )?;
    if rule == TargetRuleKind::AllToAll {
        trigger.target_rule = TargetRule::AllToAll;
    }
    Ok((trigger, ratio))
}

/// Output of one attack pipeline run (baseline or min-max).
pub struct AttackOutcome {
    pub report: EvalReport,
    pub trace: Option<GameTrace>,
    pub target: MlpModel,
    pub generations: DetectorGenerations,
    pub clean_ref_acc: f64,
}

/// Run the attack and evaluate it against the detector generations.
///
/// Positives for the AUC populations match the attack under evaluation:
/// baseline runs are scored against held-out jumbo-triggered static Trojans,
/// min-max runs against extra independently seeded min-max Trojans. A
/// min-max run with zero game iterations degenerates to the baseline run.
pub fn run_attack(ctx: &Context, baseline: bool, poison_ratio: f64) -> Result<AttackOutcome> {
    let effective_baseline = baseline || ctx.cfg.game.iterations == 0;
    let n_extra = ctx.cfg.eval.n_holdout_trojan.saturating_sub(1);

    let (positives, generations, trace) = if effective_baseline {
        let target = train_baseline_trojan(
            ctx,
            &ctx.trigger,
            poison_ratio,
            derive_seed(ctx.cfg.seed, streams::TARGET_TRAIN),
        )?;
        let extras: Vec<MlpModel> = (0..n_extra)
            .into_par_iter()
            .map(|j| {
                let sj = derive_seed2(ctx.cfg.seed, streams::BASELINE_HOLDOUT, j as u64);
                let (trigger, ratio) =
                    jumbo_holdout_trigger(ctx, ctx.cfg.trigger.target_rule, derive_seed(sj, 0))?;
                train_baseline_trojan(ctx, &trigger, ratio, sj)
            })
            .collect::<Result<_>>()?;
        let mut positives = vec![target];
        positives.extend(extras);
        let generations = DetectorGenerations {
            vanilla: ctx.vanilla_detector.clone(),
            t_minus_1: None,
            t: None,
        };
        (positives, generations, None)
    } else {
        let run = mm_single(
            ctx,
            &ctx.trigger,
            poison_ratio,
            derive_seed(ctx.cfg.seed, streams::TARGET_TRAIN),
        )?;
        let extras: Vec<MlpModel> = (0..n_extra)
            .into_par_iter()
            .map(|j| {
                let sj = derive_seed2(ctx.cfg.seed, streams::MM_EXTRA, j as u64);
                let (trigger, ratio) =
                    jumbo_holdout_trigger(ctx, ctx.cfg.trigger.target_rule, derive_seed(sj, 0))?;
                mm_single(ctx, &trigger, ratio, sj).map(|r| r.trojan)
            })
            .collect::<Result<_>>()?;
        let mut positives = vec![run.trojan.clone()];
        positives.extend(extras);
        let generations = DetectorGenerations {
            vanilla: ctx.vanilla_detector.clone(),
            t_minus_1: Some(run.detector_t_minus_1.clone()),
            t: Some(run.detector_t.clone()),
        };
        (positives, generations, Some(run.trace))
    };

    if std::env::var("TG_DEBUG_SCORES").is_ok() {
        let pos: Vec<f64> = positives
            .iter()
            .map(|m| model_score(&ctx.vanilla_detector, m).unwrap_or(f64::NAN))
            .collect();
        let neg: Vec<f64> = ctx
            .holdout_cleans
            .iter()
            .map(|m| model_score(&ctx.vanilla_detector, m).unwrap_or(f64::NAN))
            .collect();
        eprintln!("debug positives (vanilla): {pos:.4?}");
        eprintln!("debug negatives (vanilla): {neg:.4?}");
    }
    let report = evaluate_generations(
        &positives,
        &generations,
        &ctx.holdout_cleans,
        &ctx.test_data,
        &ctx.trigger,
    )?;
    let clean_ref_acc = accuracy(&ctx.holdout_cleans[0], &ctx.test_data)?;
    Ok(AttackOutcome {
        report,
        trace,
        target: positives.into_iter().next().unwrap(),
        generations,
        clean_ref_acc,
    })
}

// ---------------------------------------------------------------------------
// Artifact writing
// ---------------------------------------------------------------------------

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

/// Append the config hash to a checkpoint JSON string before writing.
fn write_checkpoint(path: &Path, checkpoint_json: &str, config_hash: &str) -> Result<()> {
    let mut value: serde_json::Value = serde_json::from_str(checkpoint_json)?;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert(
            "config_hash".to_string(),
            serde_json::Value::String(config_hash.to_string()),
        );
    }
    write_text(path, &format!("{}\n", serde_json::to_string_pretty(&value)?))
}

#[derive(Serialize)]
struct TraceLine<'a> {
    iter: usize,
    #[serde(rename = "L_D")]
    l_d: f64,
    #[serde(rename = "L_T")]
    l_t: f64,
    acc: f64,
    asr: f64,
    auc: f64,
    js: f64,
    config_hash: &'a str,
}

/// One JSON record per game iteration.
pub fn trace_to_jsonl(trace: &GameTrace, config_hash: &str) -> Result<String> {
    let mut out = String::new();
    for r in &trace.records {
        let line = TraceLine {
            iter: r.iter,
            l_d: r.l_d,
            l_t: r.l_t,
            acc: r.acc,
            asr: r.asr,
            auc: r.auc,
            js: r.js,
            config_hash,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ReportArtifact {
    config_hash: String,
    baseline: bool,
    clean_ref_acc: f64,
    report: EvalReport,
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ShadowEntry {
    role: String,
    index: usize,
    seed: u64,
    acc: f64,
    asr: f64,
    poison_ratio: Option<f64>,
    trigger: Option<TriggerSpec>,
    path: String,
}

#[derive(Serialize, Deserialize)]
struct ShadowManifest {
    config_hash: String,
    n_trojan: usize,
    n_clean: usize,
    entries: Vec<ShadowEntry>,
}

/// `train-shadows`: write the shadow population checkpoints plus a manifest
/// with per-shadow seeds, triggers, and test metrics.
pub fn cmd_train_shadows(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let ctx = build_context(cfg)?;
    ensure_dir(out)?;
    let mut entries = Vec::new();
    for (i, shadow) in ctx.shadows.trojans.iter().enumerate() {
        let path = format!("trojan_shadow_{i}.json");
        write_checkpoint(
            &out.join(&path),
            &to_checkpoint_json(&shadow.model)?,
            &ctx.config_hash,
        )?;
        entries.push(ShadowEntry {
            role: "trojan".into(),
            index: i,
            seed: shadow.seed,
            acc: accuracy(&shadow.model, &ctx.test_data)?,
            asr: attack_success_rate(&shadow.model, &ctx.test_data, &shadow.trigger)?,
            poison_ratio: Some(shadow.poison_ratio),
            trigger: Some(shadow.trigger.clone()),
            path,
        });
    }
    for (i, shadow) in ctx.shadows.cleans.iter().enumerate() {
        let path = format!("clean_shadow_{i}.json");
        write_checkpoint(
            &out.join(&path),
            &to_checkpoint_json(&shadow.model)?,
            &ctx.config_hash,
        )?;
        entries.push(ShadowEntry {
            role: "clean".into(),
            index: i,
            seed: shadow.seed,
            acc: accuracy(&shadow.model, &ctx.test_data)?,
            asr: attack_success_rate(&shadow.model, &ctx.test_data, &ctx.trigger)?,
            poison_ratio: None,
            trigger: None,
            path,
        });
    }
    let manifest = ShadowManifest {
        config_hash: ctx.config_hash.clone(),
        n_trojan: ctx.shadows.trojans.len(),
        n_clean: ctx.shadows.cleans.len(),
        entries,
    };
    write_text(
        &out.join("manifest.json"),
        &format!("{}\n", serde_json::to_string_pretty(&manifest)?),
    )?;
    write_checkpoint(
        &out.join("detector_vanilla.json"),
        &to_detector_json(&ctx.vanilla_detector)?,
        &ctx.config_hash,
    )?;
    Ok(())
}

/// `mm-trojan`: run the game (or the baseline attack), evaluate the detector
/// generations, and persist trace, report, and checkpoints.
pub fn cmd_mm_trojan(cfg: &ExperimentConfig, out: &Path, baseline: bool) -> Result<EvalReport> {
    let ctx = build_context(cfg)?;
    let outcome = run_attack(&ctx, baseline, cfg.trigger.poison_ratio)?;
    ensure_dir(out)?;
    if let Some(trace) = &outcome.trace {
        write_text(
            &out.join("trace.jsonl"),
            &trace_to_jsonl(trace, &ctx.config_hash)?,
        )?;
    }
    let artifact = ReportArtifact {
        config_hash: ctx.config_hash.clone(),
        baseline: outcome.trace.is_none(),
        clean_ref_acc: outcome.clean_ref_acc,
        report: outcome.report.clone(),
    };
    write_text(
        &out.join("report.json"),
        &format!("{}\n", serde_json::to_string_pretty(&artifact)?),
    )?;
    write_checkpoint(
        &out.join("trojan_final.json"),
        &to_checkpoint_json(&outcome.target)?,
        &ctx.config_hash,
    )?;
    write_checkpoint(
        &out.join("detector_vanilla.json"),
        &to_detector_json(&outcome.generations.vanilla)?,
        &ctx.config_hash,
    )?;
    if let Some(det) = &outcome.generations.t_minus_1 {
        write_checkpoint(
            &out.join("detector_t_minus_1.json"),
            &to_detector_json(det)?,
            &ctx.config_hash,
        )?;
    }
    if let Some(det) = &outcome.generations.t {
        write_checkpoint(
            &out.join("detector_t.json"),
            &to_detector_json(det)?,
            &ctx.config_hash,
        )?;
    }
    Ok(outcome.report)
}

#[derive(Serialize, Deserialize)]
struct GreedyArtifact {
    config_hash: String,
    result: GreedyResult,
}

/// One row of the alpha sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub l_t: f64,
    pub l_c: f64,
    pub l_tot: f64,
    pub acc: f64,
    pub asr: f64,
}

/// Train at a grid of poisoning fractions over a nested random subset chain
/// and report losses and accuracies per fraction.
pub fn alpha_sweep(ctx: &Context) -> Result<Vec<SweepRow>> {
    use rand::seq::SliceRandom;
    let train = &ctx.train_data;
    let test_trojan = make_trojan_test(&ctx.test_data, &ctx.trigger)?;
    let mut perm: Vec<usize> = (0..train.len()).collect();
    let mut rng = crate::seed::rng(derive_seed(ctx.cfg.seed, streams::SWEEP));
    perm.shuffle(&mut rng);
    let train_cfg = ctx.cfg.base_train_config(
        derive_seed(ctx.cfg.seed, streams::GREEDY_TRAIN),
        derive_seed2(ctx.cfg.seed, streams::GREEDY_TRAIN, 1),
    );
    ctx.cfg
        .greedy
        .alpha_grid
        .par_iter()
        .map(|&alpha| {
            let n_sel = ((train.len() as f64 * alpha).round() as usize).min(train.len());
            let mut idx: Vec<usize> = perm[..n_sel].to_vec();
            idx.sort_unstable();
            let poisoned = build_poisoned_dataset(train, &idx, &ctx.trigger)?;
            let model = train_classifier(&poisoned, &train_cfg)?;
            let l_t = crate::train::mean_ce(&model, &test_trojan)?;
            let l_c = crate::train::mean_ce(&model, &ctx.test_data)?;
            Ok(SweepRow {
                alpha,
                l_t,
                l_c,
                l_tot: l_t + l_c,
                acc: accuracy(&model, &ctx.test_data)?,
                asr: attack_success_rate(&model, &ctx.test_data, &ctx.trigger)?,
            })
        })
        .collect()
}

/// `greedy-select`: run the greedy selection and the alpha sweep, writing the
/// result JSON and the two curve CSVs.
pub fn cmd_greedy(cfg: &ExperimentConfig, out: &Path) -> Result<GreedyResult> {
    let ctx = build_context(cfg)?;
    let test_trojan = make_trojan_test(&ctx.test_data, &ctx.trigger)?;
    let greedy_cfg = cfg.greedy_config();
    let result = greedy_select(
        &ctx.train_data,
        &ctx.test_data,
        &test_trojan,
        &ctx.trigger,
        &greedy_cfg,
    )?;
    ensure_dir(out)?;
    let artifact = GreedyArtifact {
        config_hash: ctx.config_hash.clone(),
        result: result.clone(),
    };
    write_text(
        &out.join("greedy_result.json"),
        &format!("{}\n", serde_json::to_string_pretty(&artifact)?),
    )?;

    let rows = alpha_sweep(&ctx)?;
    let mut sweep = String::from("alpha,L_T,L_C,L_tot\n");
    let mut acc_sweep = String::from("alpha,acc,asr\n");
    for r in &rows {
        sweep.push_str(&format!("{},{},{},{}\n", r.alpha, r.l_t, r.l_c, r.l_tot));
        acc_sweep.push_str(&format!("{},{},{}\n", r.alpha, r.acc, r.asr));
    }
    write_text(&out.join("sweep.csv"), &sweep)?;
    write_text(&out.join("accuracy_sweep.csv"), &acc_sweep)?;
    Ok(result)
}

#[derive(Serialize, Deserialize)]
struct AblateArtifact {
    config_hash: String,
    alphas: Vec<f64>,
    reports: Vec<EvalReport>,
}

/// `ablate`: run the full min-max pipeline at each poisoning ratio and emit
/// the `alpha,acc,asr,auc` table (AUC is the vanilla-detector column).
pub fn cmd_ablate(cfg: &ExperimentConfig, out: &Path, alphas: &[f64]) -> Result<Vec<EvalReport>> {
    if alphas.is_empty() {
        return Err(Error::Config("ablate needs at least one alpha".into()));
    }
    for &a in alphas {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!("ablate alpha {a} must lie in (0,1]")));
        }
    }
    let ctx = build_context(cfg)?;
    let reports: Vec<EvalReport> = alphas
        .iter()
        .map(|&alpha| run_attack(&ctx, false, alpha).map(|o| o.report))
        .collect::<Result<_>>()?;
    ensure_dir(out)?;
    let mut csv = String::from("alpha,acc,asr,auc\n");
    for (a, r) in alphas.iter().zip(&reports) {
        csv.push_str(&format!("{},{},{},{}\n", a, r.acc, r.asr, r.auc_0));
    }
    write_text(&out.join("ablate.csv"), &csv)?;
    let artifact = AblateArtifact {
        config_hash: ctx.config_hash.clone(),
        alphas: alphas.to_vec(),
        reports: reports.clone(),
    };
    write_text(
        &out.join("ablate.json"),
        &format!("{}\n", serde_json::to_string_pretty(&artifact)?),
    )?;
    Ok(reports)
}

#[derive(Serialize, Deserialize)]
struct EvalModelEntry {
    path: String,
    trigger: Option<TriggerSpec>,
}

#[derive(Serialize, Deserialize)]
struct EvalModelsManifest {
    config_hash: String,
    detector_path: String,
    baseline: Vec<EvalModelEntry>,
    mm: Vec<EvalModelEntry>,
    clean: Vec<EvalModelEntry>,
}

/// Detector-vs-attack AUC table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorTable {
    pub baseline_meta_auc: f64,
    pub baseline_nc_auc: f64,
    pub baseline_strip_auc: f64,
    pub mm_meta_auc: f64,
    pub mm_nc_auc: f64,
    pub mm_strip_auc: f64,
}

struct EvalPopulations {
    detector: DetectorModel,
    baseline: Vec<(MlpModel, TriggerSpec)>,
    mm: Vec<(MlpModel, TriggerSpec)>,
    clean: Vec<MlpModel>,
    clean_trigger: TriggerSpec,
}

fn auto_populations(ctx: &Context) -> Result<EvalPopulations> {
    let n = ctx.cfg.eval.n_holdout_trojan;
    let baseline: Vec<(MlpModel, TriggerSpec)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let sj = derive_seed2(ctx.cfg.seed, streams::BASELINE_HOLDOUT, 0x100 + j as u64);
            let (trigger, ratio) = jumbo_holdout_trigger(ctx, TargetRuleKind::Fixed, derive_seed(sj, 0))?;
            let model = train_baseline_trojan(ctx, &trigger, ratio, sj)?;
            Ok((model, trigger))
        })
        .collect::<Result<_>>()?;
    let mm: Vec<(MlpModel, TriggerSpec)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let sj = derive_seed2(ctx.cfg.seed, streams::MM_EXTRA, 0x100 + j as u64);
            let (trigger, ratio) =
                jumbo_holdout_trigger(ctx, TargetRuleKind::AllToAll, derive_seed(sj, 0))?;
            let run = mm_single(ctx, &trigger, ratio, sj)?;
            Ok((run.trojan, trigger))
        })
        .collect::<Result<_>>()?;
    Ok(EvalPopulations {
        detector: ctx.vanilla_detector.clone(),
        baseline,
        mm,
        clean: ctx.holdout_cleans.clone(),
        clean_trigger: ctx.trigger.clone(),
    })
}

fn load_populations(ctx: &Context, dir: &Path) -> Result<EvalPopulations> {
    let manifest_path = dir.join("eval_models.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("missing eval manifest {}: {e}", manifest_path.display()),
        ))
    })?;
    let manifest: EvalModelsManifest = serde_json::from_str(&text)?;
    let load_model = |rel: &str| -> Result<MlpModel> {
        let p = dir.join(rel);
        let text = std::fs::read_to_string(&p).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("missing checkpoint {}: {e}", p.display()),
            ))
        })?;
        from_checkpoint_json(&text)
    };
    let with_trigger = |entries: &[EvalModelEntry]| -> Result<Vec<(MlpModel, TriggerSpec)>> {
        entries
            .iter()
            .map(|e| {
                let model = load_model(&e.path)?;
                let trigger = e
                    .trigger
                    .clone()
                    .ok_or_else(|| Error::Config(format!("entry {} lacks a trigger", e.path)))?;
                Ok((model, trigger))
            })
            .collect()
    };
    let det_text = std::fs::read_to_string(dir.join(&manifest.detector_path)).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("missing detector checkpoint: {e}"),
        ))
    })?;
    Ok(EvalPopulations {
        detector: from_detector_json(&det_text)?,
        baseline: with_trigger(&manifest.baseline)?,
        mm: with_trigger(&manifest.mm)?,
        clean: manifest
            .clean
            .iter()
            .map(|e| load_model(&e.path))
            .collect::<Result<_>>()?,
        clean_trigger: ctx.trigger.clone(),
    })
}

fn save_populations(pops: &EvalPopulations, config_hash: &str, out: &Path) -> Result<()> {
    let mut manifest = EvalModelsManifest {
        config_hash: config_hash.to_string(),
        detector_path: "detector_vanilla.json".into(),
        baseline: Vec::new(),
        mm: Vec::new(),
        clean: Vec::new(),
    };
    write_checkpoint(
        &out.join("detector_vanilla.json"),
        &to_detector_json(&pops.detector)?,
        config_hash,
    )?;
    for (i, (model, trigger)) in pops.baseline.iter().enumerate() {
        let path = format!("baseline_trojan_{i}.json");
        write_checkpoint(&out.join(&path), &to_checkpoint_json(model)?, config_hash)?;
        manifest.baseline.push(EvalModelEntry {
            path,
            trigger: Some(trigger.clone()),
        });
    }
    for (i, (model, trigger)) in pops.mm.iter().enumerate() {
        let path = format!("mm_trojan_{i}.json");
        write_checkpoint(&out.join(&path), &to_checkpoint_json(model)?, config_hash)?;
        manifest.mm.push(EvalModelEntry {
            path,
            trigger: Some(trigger.clone()),
        });
    }
    for (i, model) in pops.clean.iter().enumerate() {
        let path = format!("clean_{i}.json");
        write_checkpoint(&out.join(&path), &to_checkpoint_json(model)?, config_hash)?;
        manifest.clean.push(EvalModelEntry {
            path,
            trigger: None,
        });
    }
    write_text(
        &out.join("eval_models.json"),
        &format!("{}\n", serde_json::to_string_pretty(&manifest)?),
    )?;
    Ok(())
}

/// `eval-detectors`: score baseline and min-max attack populations against
/// the meta-detector, NC-lite, and STRIP-lite, emitting the comparison CSV.
pub fn cmd_eval_detectors(cfg: &ExperimentConfig, out: &Path) -> Result<DetectorTable> {
    let ctx = build_context(cfg)?;
    let loaded = cfg.eval.models_dir.is_some();
    let pops = match &cfg.eval.models_dir {
        Some(dir) => load_populations(&ctx, dir)?,
        None => auto_populations(&ctx)?,
    };

    let b = &ctx.cfg.baselines;
    let test_xs: Vec<Vec<f64>> = ctx.test_data.samples.iter().map(|s| s.x.clone()).collect();
    if test_xs.len() < b.n_probes + b.strip_n_blends {
        return Err(Error::Config(
            "test set too small for the configured probe and blend counts".into(),
        ));
    }
    let probes: Vec<Vec<f64>> = test_xs[..b.n_probes].to_vec();
    let blend_pool: Vec<Vec<f64>> = test_xs[b.n_probes..b.n_probes + b.strip_n_blends].to_vec();

    let meta_scores = |models: &[&MlpModel]| -> Result<Vec<f64>> {
        models.iter().map(|m| model_score(&pops.detector, m)).collect()
    };
    let nc_scores = |models: &[&MlpModel]| -> Result<Vec<f64>> {
        models
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                let nc_cfg = NcConfig {
                    lambda: b.nc_lambda,
                    steps: b.nc_steps,
                    rate: b.nc_rate,
                    seed: derive_seed2(ctx.cfg.seed, 0x9C, i as u64),
                };
                nc_report(m, &probes, &nc_cfg).map(|r| r.model_score)
            })
            .collect()
    };
    let strip_scores = |entries: &[(&MlpModel, &TriggerSpec)]| -> Result<Vec<f64>> {
        entries
            .par_iter()
            .map(|(m, trigger)| {
                strip_model_score(m, &probes, trigger, &blend_pool, b.strip_n_blends)
            })
            .collect()
    };

    let baseline_models: Vec<&MlpModel> = pops.baseline.iter().map(|(m, _)| m).collect();
    let mm_models: Vec<&MlpModel> = pops.mm.iter().map(|(m, _)| m).collect();
    let clean_models: Vec<&MlpModel> = pops.clean.iter().collect();

    let meta_clean = meta_scores(&clean_models)?;
    let nc_clean = nc_scores(&clean_models)?;
    let clean_strip_entries: Vec<(&MlpModel, &TriggerSpec)> = pops
        .clean
        .iter()
        .map(|m| (m, &pops.clean_trigger))
        .collect();
    let strip_clean = strip_scores(&clean_strip_entries)?;

    let baseline_strip_entries: Vec<(&MlpModel, &TriggerSpec)> =
        pops.baseline.iter().map(|(m, t)| (m, t)).collect();
    let mm_strip_entries: Vec<(&MlpModel, &TriggerSpec)> =
        pops.mm.iter().map(|(m, t)| (m, t)).collect();

    let table = DetectorTable {
        baseline_meta_auc: auc(&meta_scores(&baseline_models)?, &meta_clean)?,
        baseline_nc_auc: auc(&nc_scores(&baseline_models)?, &nc_clean)?,
        baseline_strip_auc: auc(&strip_scores(&baseline_strip_entries)?, &strip_clean)?,
        mm_meta_auc: auc(&meta_scores(&mm_models)?, &meta_clean)?,
        mm_nc_auc: auc(&nc_scores(&mm_models)?, &nc_clean)?,
        mm_strip_auc: auc(&strip_scores(&mm_strip_entries)?, &strip_clean)?,
    };

    ensure_dir(out)?;
    let mut csv = String::from("attack,mntd_auc,nc_auc,strip_auc\n");
    csv.push_str(&format!(
        "baseline_trojan,{},{},{}\n",
        table.baseline_meta_auc, table.baseline_nc_auc, table.baseline_strip_auc
    ));
    csv.push_str(&format!(
        "mm_trojan,{},{},{}\n",
        table.mm_meta_auc, table.mm_nc_auc, table.mm_strip_auc
    ));
    write_text(&out.join("table2.csv"), &csv)?;

    #[derive(Serialize)]
    struct EvalArtifact<'a> {
        config_hash: &'a str,
        table: &'a DetectorTable,
    }
    write_text(
        &out.join("eval_detectors.json"),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&EvalArtifact {
                config_hash: &ctx.config_hash,
                table: &table,
            })?
        ),
    )?;
    if !loaded {
        save_populations(&pops, &ctx.config_hash, out)?;
    }
    Ok(table)
}
