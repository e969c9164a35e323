//! Data-file IO: line-delimited JSON logs, the world metadata sidecar, and
//! the chronological train/eval split.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use easq_core::simenv::{InteractionEvent, QuestionnaireResponse};

use crate::error::CliError;

pub const INTERACTIONS_FILE: &str = "interactions.jsonl";
pub const QUESTIONNAIRE_FILE: &str = "questionnaire.jsonl";
pub const WORLD_META_FILE: &str = "world_meta.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldMeta {
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    pub rho_hook: f64,
}

/// Refuses to reuse a non-empty output directory unless forced.
pub fn ensure_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .map_err(|e| CliError::Data(format!("reading {}: {e}", dir.display())))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))?;
    }
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| CliError::Data(format!("serializing record: {e}")))?;
        writeln!(w, "{line}").map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
    }
    w.flush()
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Reads a JSONL file, reporting the 1-based line number of the first bad
/// record.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| {
            CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub interactions: Vec<InteractionEvent>,
    pub responses: Vec<QuestionnaireResponse>,
    pub meta: WorldMeta,
}

pub fn load_data_dir(dir: &Path) -> Result<LoadedData, CliError> {
    let meta_path = dir.join(WORLD_META_FILE);
    let meta_text = std::fs::read_to_string(&meta_path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", meta_path.display())))?;
    let meta: WorldMeta = serde_json::from_str(&meta_text)
        .map_err(|e| CliError::Data(format!("{}: {e}", meta_path.display())))?;
    let mut interactions: Vec<InteractionEvent> = read_jsonl(&dir.join(INTERACTIONS_FILE))?;
    let mut responses: Vec<QuestionnaireResponse> = read_jsonl(&dir.join(QUESTIONNAIRE_FILE))?;
    interactions.sort_by_key(|e| (e.ts, e.user_id, e.item_id));
    responses.sort_by_key(|r| (r.ts, r.user_id, r.item_id));
    Ok(LoadedData {
        interactions,
        responses,
        meta,
    })
}

/// Chronological split: the first `1 - holdout_frac` of interactions (and
/// the responses in their time range) train; the rest evaluates.
pub struct TimeSplit {
    pub train_interactions: Vec<InteractionEvent>,
    pub train_responses: Vec<QuestionnaireResponse>,
    pub eval_interactions: Vec<InteractionEvent>,
    pub eval_responses: Vec<QuestionnaireResponse>,
}

pub fn split_by_time(data: &LoadedData, holdout_frac: f64) -> TimeSplit {
    let n = data.interactions.len();
    let cut = ((1.0 - holdout_frac) * n as f64).floor() as usize;
    let cut = cut.min(n);
    let (train_i, eval_i) = data.interactions.split_at(cut);
    let boundary_ts = eval_i.first().map(|e| e.ts);
    let (mut train_r, mut eval_r) = (Vec::new(), Vec::new());
    for r in &data.responses {
        match boundary_ts {
            Some(b) if r.ts >= b => eval_r.push(r.clone()),
            _ => train_r.push(r.clone()),
        }
    }
    TimeSplit {
        train_interactions: train_i.to_vec(),
        train_responses: train_r,
        eval_interactions: eval_i.to_vec(),
        eval_responses: eval_r,
    }
}

/// Item-id → duration map over a set of interactions.
pub fn item_catalog(interactions: &[InteractionEvent]) -> BTreeMap<u64, f64> {
    let mut catalog = BTreeMap::new();
    for ev in interactions {
        catalog.entry(ev.item_id).or_insert(ev.duration_s);
    }
    catalog
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}
