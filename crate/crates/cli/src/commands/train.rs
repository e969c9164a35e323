//! `easq train`: online training over a generated data directory.

use std::path::Path;

use easq_core::model::EasqModel;
use easq_core::trainer::{apply_ablation, load_checkpoint, make_batches, Trainer};

use crate::config::{write_config_echo, RunConfig};
use crate::error::CliError;
use crate::io::{ensure_out_dir, load_data_dir, split_by_time, write_text};
use crate::pipeline::train_log_csv;

pub const FINAL_CHECKPOINT: &str = "checkpoint_final.easq";

pub fn run(
    cfg: &RunConfig,
    data_dir: &Path,
    out: &Path,
    force: bool,
    resume: Option<&Path>,
) -> Result<(), CliError> {
    ensure_out_dir(out, force)?;
    let data = load_data_dir(data_dir)?;
    let split = split_by_time(&data, cfg.eval.holdout_frac);
    let model_cfg = apply_ablation(&cfg.model, cfg.train.ablation);

    let mut trainer = match resume {
        Some(ckpt_path) => {
            let ckpt = load_checkpoint(ckpt_path)?;
            if ckpt.config() != &model_cfg {
                return Err(CliError::Config(format!(
                    "checkpoint {} was trained with a different model config",
                    ckpt_path.display()
                )));
            }
            Trainer::from_checkpoint(&ckpt, cfg.train.clone())?
        }
        None => {
            let model = EasqModel::new(model_cfg, data.meta.n_users, data.meta.n_items)?;
            Trainer::new(model, cfg.train.clone())?
        }
    };

    let batches = make_batches(
        &split.train_interactions,
        &split.train_responses,
        cfg.train.batch_size,
    );
    let snapshot_every = cfg.train.eval_every;
    let mut logs = Vec::new();
    let mut index = 0u64;
    for batch in &batches {
        if batch.interactions.is_empty() {
            continue;
        }
        if cfg.train.steps > 0 && trainer.global_step() >= cfg.train.steps as u64 {
            break;
        }
        if index < trainer.global_step() {
            trainer.observe_batch(batch);
        } else if let Some(log) = trainer.step_batch(batch)? {
            if snapshot_every > 0 && trainer.global_step() % snapshot_every as u64 == 0 {
                trainer.save(&out.join(format!("checkpoint_step{}.easq", trainer.global_step())))?;
            }
            logs.push(log);
        }
        index += 1;
    }

    trainer.save(&out.join(FINAL_CHECKPOINT))?;
    write_text(&out.join("train_log.csv"), &train_log_csv(&logs))?;
    write_config_echo(out, cfg)?;
    println!(
        "train: {} steps (now at step {}), final checkpoint -> {}",
        logs.len(),
        trainer.global_step(),
        out.join(FINAL_CHECKPOINT).display()
    );
    Ok(())
}
