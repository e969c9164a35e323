//! `easq sweep`: grid over one dotted config key (e.g. `model.lambda2`),
//! training and evaluating per value and seed, emitting a CSV for
//! sensitivity curves.

use std::path::Path;

use crate::config::{override_config, write_config_echo, RunConfig};
use crate::error::CliError;
use crate::io::{ensure_out_dir, load_data_dir, write_text};
use crate::pipeline::train_and_eval;

pub fn run(
    cfg: &RunConfig,
    data_dir: &Path,
    out: &Path,
    param: &str,
    values: &[String],
    seeds: &[u64],
    force: bool,
) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    if seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one seed".into()));
    }
    ensure_out_dir(out, force)?;
    let data = load_data_dir(data_dir)?;

    let mut rows =
        String::from("param,value,seed,hr1,hr5,hr10,ndcg5,ndcg10,ndcg20,mrr,n_users,n_instances\n");
    for value in values {
        let swept = override_config(cfg, param, value)?;
        for &seed in seeds {
            let mut run_cfg = swept.clone();
            run_cfg.model.seed = seed;
            run_cfg.train.seed = seed;
            let r = train_and_eval(&run_cfg, &data)?.report;
            rows.push_str(&format!(
                "{param},{value},{seed},{},{},{},{},{},{},{},{},{}\n",
                r.hr1, r.hr5, r.hr10, r.ndcg5, r.ndcg10, r.ndcg20, r.mrr, r.n_users, r.n_instances
            ));
            println!("sweep: {param}={value} seed {seed}: ndcg@5 = {:.4}", r.ndcg5);
        }
    }
    write_text(&out.join("sweep.csv"), &rows)?;
    write_config_echo(out, cfg)?;
    Ok(())
}
