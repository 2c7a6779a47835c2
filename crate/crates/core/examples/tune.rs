//! Scratch harness for tuning the desk-scale setup. Not part of the build.

use trojan_game::config::ExperimentConfig;
use trojan_game::detector::model_score;
use trojan_game::harness::{build_context, run_attack};

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}
fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = env_usize("SEED", 0) as u64;
    cfg.detector.query_var = env_f64("QVAR", cfg.detector.query_var);
    cfg.detector.query_mean = env_f64("QMEAN", cfg.detector.query_mean);
    cfg.detector.epochs = env_usize("DET_EPOCHS", cfg.detector.epochs);
    cfg.detector.rate = env_f64("DET_RATE", cfg.detector.rate);
    cfg.train.epochs = env_usize("TRAIN_EPOCHS", cfg.train.epochs);
    cfg.dataset.cluster_spread = env_f64("SPREAD", cfg.dataset.cluster_spread);
    cfg.dataset.classes = env_usize("K", cfg.dataset.classes);
    cfg.game.gamma_d = env_f64("GAMMA_D", cfg.game.gamma_d);
    cfg.game.gamma_t = env_f64("GAMMA_T", cfg.game.gamma_t);
    cfg.game.iterations = env_usize("ITERS", cfg.game.iterations);
    cfg.game.inner_trojan_epochs = env_usize("INNER_T", cfg.game.inner_trojan_epochs);
    cfg.game.inner_detector_epochs = env_usize("INNER_D", cfg.game.inner_detector_epochs);
    cfg.trigger.poison_ratio = env_f64("RATIO", cfg.trigger.poison_ratio);
    cfg.trigger.block_size = env_usize("BLOCK", cfg.trigger.block_size);
    cfg.detector.n_queries = env_usize("NQ", cfg.detector.n_queries);
    cfg.shadows.jumbo.poison_ratio_min = env_f64("JRMIN", cfg.shadows.jumbo.poison_ratio_min);
    cfg.shadows.jumbo.mask_size_min = env_usize("JMMIN", cfg.shadows.jumbo.mask_size_min);
    cfg.shadows.jumbo.mask_size_max = env_usize("JMMAX", cfg.shadows.jumbo.mask_size_max);
    cfg.shadows.n_trojan = env_usize("NSHADOW", cfg.shadows.n_trojan);
    cfg.shadows.n_clean = env_usize("NSHADOW", cfg.shadows.n_clean);
    cfg.train.rate = env_f64("TRAIN_RATE", cfg.train.rate);
    if let Ok(h) = std::env::var("HID") {
        cfg.train.hidden_dims = if h.is_empty() {
            vec![]
        } else {
            h.split(',').map(|v| v.parse().unwrap()).collect()
        };
    }

    let ctx = build_context(&cfg).unwrap();

    // Raw output-population statistics on the detector's query set.
    let queries = trojan_game::detector::sample_queries(&ctx.vanilla_detector.query).unwrap();
    let stats = |models: &[trojan_game::MlpModel], label: &str| {
        let mut max_probs = Vec::new();
        let mut entropies = Vec::new();
        for m in models {
            for q in &queries {
                let z = trojan_game::nn::forward(m, q).unwrap();
                let mx = z.iter().cloned().fold(0.0_f64, f64::max);
                let ent: f64 = z.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
                max_probs.push(mx);
                entropies.push(ent);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "  {label}: mean max-prob {:.4}, mean entropy {:.4}",
            mean(&max_probs),
            mean(&entropies)
        );
    };
    stats(&ctx.shadows.trojan_models(), "trojan shadows");
    stats(&ctx.shadows.clean_models(), "clean shadows ");

    println!("== separability of vanilla detector ==");
    for (i, s) in ctx.shadows.trojans.iter().enumerate() {
        println!(
            "  shadow trojan {i}: score {:.4} (ratio {:.2})",
            model_score(&ctx.vanilla_detector, &s.model).unwrap(),
            s.poison_ratio
        );
    }
    for (i, m) in ctx.holdout_cleans.iter().enumerate() {
        println!(
            "  holdout clean {i}: score {:.4}",
            model_score(&ctx.vanilla_detector, m).unwrap()
        );
    }

    let t0 = std::time::Instant::now();
    let baseline = run_attack(&ctx, true, cfg.trigger.poison_ratio).unwrap();
    println!(
        "baseline: {:?} clean_ref_acc={:.4} [{:?}]",
        baseline.report,
        baseline.clean_ref_acc,
        t0.elapsed()
    );
    println!(
        "  baseline target score: {:.4}",
        model_score(&ctx.vanilla_detector, &baseline.target).unwrap()
    );
    let clean_scores: Vec<f64> = ctx
        .holdout_cleans
        .iter()
        .map(|m| model_score(&ctx.vanilla_detector, m).unwrap())
        .collect();
    println!("  clean holdout scores: {clean_scores:.4?}");

    if env_usize("MM", 1) == 1 {
        let t0 = std::time::Instant::now();
        let mm = run_attack(&ctx, false, cfg.trigger.poison_ratio).unwrap();
        println!(
            "mm: {:?} clean_ref_acc={:.4} [{:?}]",
            mm.report,
            mm.clean_ref_acc,
            t0.elapsed()
        );
        if let Some(trace) = &mm.trace {
            for r in &trace.records {
                println!(
                    "  iter {:>2}: L_D={:>8.4} L_T={:>8.4} acc={:.3} asr={:.3} auc={:.3} js={:.4}",
                    r.iter, r.l_d, r.l_t, r.acc, r.asr, r.auc, r.js
                );
            }
        }
    }
}
