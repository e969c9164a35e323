//! `easq eval`: rank held-out questionnaire candidates with a checkpointed
//! model and report HR/NDCG/MRR.

use std::path::Path;

use easq_core::evaluator::{evaluate, EvalReport};
use easq_core::trainer::load_checkpoint;

use crate::config::{write_config_echo, RunConfig};
use crate::error::CliError;
use crate::io::{ensure_out_dir, item_catalog, load_data_dir, split_by_time, write_text};

pub fn run(cfg: &RunConfig, checkpoint: &Path, data_dir: &Path, out: &Path, force: bool) -> Result<(), CliError> {
    ensure_out_dir(out, force)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let (mut model, _, _) = ckpt.build_model()?;
    let data = load_data_dir(data_dir)?;
    let split = split_by_time(&data, cfg.eval.holdout_frac);
    let catalog = item_catalog(&data.interactions);
    let report = evaluate(&mut model, &catalog, &split.eval_responses, &cfg.eval)?;
    write_report(out, &report)?;
    write_config_echo(out, cfg)?;
    println!(
        "eval: n_users={} n_instances={} hr@10={:.4} ndcg@5={:.4} mrr={:.4}",
        report.n_users, report.n_instances, report.hr10, report.ndcg5, report.mrr
    );
    Ok(())
}

pub fn write_report(out: &Path, report: &EvalReport) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Data(format!("serializing report: {e}")))?;
    write_text(&out.join("eval_report.json"), &json)?;
    let csv = format!("{}\n{}\n", EvalReport::csv_header(), report.csv_row());
    write_text(&out.join("eval_report.csv"), &csv)?;
    Ok(())
}
