//! `easq ablate`: train and evaluate all four structural variants over a
//! seed list, then summarize per-variant metric means with standard errors
//! and sign tests against the full model.

use std::collections::BTreeMap;
use std::path::Path;

use easq_core::evaluator::EvalReport;
use easq_core::simenv::sign_test_p;
use easq_core::trainer::Ablation;

use crate::config::{write_config_echo, RunConfig};
use crate::error::CliError;
use crate::io::{ensure_out_dir, load_data_dir, write_text, LoadedData};
use crate::pipeline::train_and_eval;

pub const VARIANTS: [(Ablation, &str); 4] = [
    (Ablation::Full, "full"),
    (Ablation::NoLora, "no_lora"),
    (Ablation::NoMoe, "no_moe"),
    (Ablation::NoDpo, "no_dpo"),
];

const METRICS: [&str; 7] = ["hr1", "hr5", "hr10", "ndcg5", "ndcg10", "ndcg20", "mrr"];

fn metric_values(r: &EvalReport) -> [f64; 7] {
    [r.hr1, r.hr5, r.hr10, r.ndcg5, r.ndcg10, r.ndcg20, r.mrr]
}

/// Runs one variant for one seed (both model init and trainer stream use the
/// seed). Also used by the sweep command.
pub fn run_variant_seed(
    base: &RunConfig,
    data: &LoadedData,
    variant: Ablation,
    seed: u64,
) -> Result<EvalReport, CliError> {
    let mut cfg = base.clone();
    cfg.model.seed = seed;
    cfg.train.seed = seed;
    cfg.train.ablation = variant;
    Ok(train_and_eval(&cfg, data)?.report)
}

pub fn run(cfg: &RunConfig, data_dir: &Path, out: &Path, seeds: &[u64], force: bool) -> Result<(), CliError> {
    if seeds.len() < 3 {
        return Err(CliError::Config(format!(
            "ablate needs at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    ensure_out_dir(out, force)?;
    let data = load_data_dir(data_dir)?;

    let mut rows = String::from("variant,seed,");
    rows.push_str(&METRICS.join(","));
    rows.push('\n');
    let mut results: BTreeMap<&str, Vec<[f64; 7]>> = BTreeMap::new();
    for (variant, name) in VARIANTS {
        for &seed in seeds {
            let report = run_variant_seed(cfg, &data, variant, seed)?;
            let vals = metric_values(&report);
            rows.push_str(&format!(
                "{name},{seed},{}\n",
                vals.map(|v| v.to_string()).join(",")
            ));
            results.entry(name).or_default().push(vals);
            println!("ablate: {name} seed {seed}: ndcg@5 = {:.4}", report.ndcg5);
        }
    }
    write_text(&out.join("ablation_runs.csv"), &rows)?;

    let mut summary = String::from("variant,metric,mean,stderr\n");
    for (variant, name) in VARIANTS {
        let _ = variant;
        let runs = &results[name];
        for (mi, metric) in METRICS.iter().enumerate() {
            let vals: Vec<f64> = runs.iter().map(|r| r[mi]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (vals.len() as f64 - 1.0).max(1.0);
            let se = (var / vals.len() as f64).sqrt();
            summary.push_str(&format!("{name},{metric},{mean},{se}\n"));
        }
    }
    write_text(&out.join("ablation_summary.csv"), &summary)?;

    // Paired sign test: seeds where the full model beats each ablation.
    let mut sign = String::from("variant,metric,full_wins,full_losses,p\n");
    let full = &results["full"];
    for (_, name) in VARIANTS.iter().skip(1) {
        let runs = &results[name];
        for (mi, metric) in METRICS.iter().enumerate() {
            let mut wins = 0;
            let mut losses = 0;
            for (f, a) in full.iter().zip(runs) {
                if f[mi] > a[mi] {
                    wins += 1;
                } else if f[mi] < a[mi] {
                    losses += 1;
                }
            }
            sign.push_str(&format!(
                "{name},{metric},{wins},{losses},{}\n",
                sign_test_p(wins, losses)
            ));
        }
    }
    write_text(&out.join("ablation_signtest.csv"), &sign)?;
    write_config_echo(out, cfg)?;
    println!(
        "ablate: {} runs -> {}",
        VARIANTS.len() * seeds.len(),
        out.display()
    );
    Ok(())
}
