//! `easq gen-data`: synthesize interaction and questionnaire logs.

use std::path::Path;

use easq_core::simenv::{generate_dataset, init_world};

use crate::config::{write_config_echo, RunConfig};
use crate::error::CliError;
use crate::io::{
    ensure_out_dir, write_jsonl, write_text, WorldMeta, INTERACTIONS_FILE, QUESTIONNAIRE_FILE,
    WORLD_META_FILE,
};

pub fn run(cfg: &RunConfig, out: &Path, force: bool, debug: bool) -> Result<(), CliError> {
    ensure_out_dir(out, force)?;
    let world = init_world(&cfg.sim, cfg.sim.seed)?;
    let mut data = generate_dataset(&world);
    if !debug {
        for ev in &mut data.interactions {
            ev.s_true = None;
        }
    }
    write_jsonl(&out.join(INTERACTIONS_FILE), &data.interactions)?;
    write_jsonl(&out.join(QUESTIONNAIRE_FILE), &data.responses)?;
    let meta = WorldMeta {
        seed: cfg.sim.seed,
        n_users: cfg.sim.n_users,
        n_items: cfg.sim.n_items,
        rho_hook: cfg.sim.rho_hook,
    };
    let meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CliError::Data(format!("serializing world meta: {e}")))?;
    write_text(&out.join(WORLD_META_FILE), &meta_json)?;
    write_config_echo(out, cfg)?;

    let answered = data.responses.iter().filter(|r| r.answered()).count();
    println!(
        "gen-data: {} interactions, {} triggered questionnaire rows, {} answered -> {}",
        data.interactions.len(),
        data.responses.len(),
        answered,
        out.display()
    );
    Ok(())
}
