//! Shared train-then-evaluate pipeline used by the train, eval, ablate and
//! sweep commands.

use easq_core::evaluator::{evaluate, EvalReport};
use easq_core::model::EasqModel;
use easq_core::trainer::{apply_ablation, make_batches, StepLog, Trainer};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{item_catalog, split_by_time, LoadedData};

pub struct RunOutcome {
    pub report: EvalReport,
    pub logs: Vec<StepLog>,
}

/// Trains a fresh model on the chronological training window and evaluates
/// it on the holdout window. Entirely in memory.
pub fn train_and_eval(cfg: &RunConfig, data: &LoadedData) -> Result<RunOutcome, CliError> {
    let split = split_by_time(data, cfg.eval.holdout_frac);
    let model_cfg = apply_ablation(&cfg.model, cfg.train.ablation);
    let model = EasqModel::new(model_cfg, data.meta.n_users, data.meta.n_items)?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let batches = make_batches(
        &split.train_interactions,
        &split.train_responses,
        cfg.train.batch_size,
    );
    let logs = trainer.train_online(batches)?;
    let catalog = item_catalog(&data.interactions);
    let report = evaluate(&mut trainer.model, &catalog, &split.eval_responses, &cfg.eval)?;
    Ok(RunOutcome { report, logs })
}

/// One CSV row per training step, with the fixed header.
pub const TRAIN_LOG_HEADER: &str =
    "step,loss_main,loss_satis,loss_dpo,n_behavior_pairs,n_satis_pairs,n_dpo_pairs";

pub fn train_log_csv(logs: &[StepLog]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            l.step,
            l.loss_main,
            l.loss_satis,
            l.loss_dpo,
            l.n_behavior_pairs,
            l.n_satis_pairs,
            l.n_dpo_pairs
        ));
    }
    out
}
