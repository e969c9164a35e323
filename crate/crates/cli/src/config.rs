//! Run configuration: a hierarchical TOML file plus `--set dotted.key=value`
//! overrides. Unknown keys are hard errors, and the fully resolved config is
//! echoed into every output directory so a run can be reproduced from its
//! artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use easq_core::evaluator::EvalConfig;
use easq_core::model::EasqConfig;
use easq_core::simenv::SimConfig;
use easq_core::trainer::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: EasqConfig,
    pub train: TrainConfig,
    pub sim: SimConfig,
    pub eval: EvalConfig,
}

/// Parses `KEY=VALUE` and inserts the value at the dotted path, creating
/// intermediate tables. Values are parsed as bool, integer, float, then
/// string, in that order.
fn apply_set(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{spec}`")))?;
    let value = parse_value(raw);
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("--set key `{path}` has empty segments")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::Config(format!("--set key `{path}`: `{k}` is not a table"))
            })?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}

/// Loads (or defaults) the config file and applies overrides.
pub fn load_run_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("config parse error in {}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for s in sets {
        apply_set(&mut table, s)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    cfg.model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    cfg.sim
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Applies a single dotted override to an already-resolved config (used by
/// the sweep command).
pub fn override_config(cfg: &RunConfig, key: &str, value: &str) -> Result<RunConfig, CliError> {
    let serialized =
        toml::to_string(cfg).map_err(|e| CliError::Config(format!("config echo failed: {e}")))?;
    let mut table: toml::Table = serialized.parse().expect("round-trip of own config");
    apply_set(&mut table, &format!("{key}={value}"))?;
    let out: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Config(format!("invalid override {key}={value}: {e}")))?;
    out.model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(out)
}

/// Writes the resolved config into an output directory.
pub fn write_config_echo(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let text =
        toml::to_string_pretty(cfg).map_err(|e| CliError::Config(format!("config echo: {e}")))?;
    std::fs::write(dir.join("config_echo.toml"), text)
        .map_err(|e| CliError::Data(format!("writing config echo: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = load_run_config(None, &[]).unwrap();
        assert_eq!(cfg.model.emb_dim_id, 64);
        assert_eq!(cfg.eval.list_size, 100);
    }

    #[test]
    fn dotted_overrides_apply() {
        let cfg = load_run_config(
            None,
            &[
                "model.lambda1=0".to_string(),
                "model.lambda2=0.25".to_string(),
                "train.batch_size=16".to_string(),
                "model.router_kind=topk_softmax".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.lambda1, 0.0);
        assert_eq!(cfg.model.lambda2, 0.25);
        assert_eq!(cfg.train.batch_size, 16);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        assert!(matches!(
            load_run_config(None, &["model.no_such_knob=1".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            load_run_config(None, &["not_a_section.x=1".into()]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = load_run_config(None, &["model.lambda1=0.75".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_config_echo(dir.path(), &cfg).unwrap();
        let back = load_run_config(Some(&dir.path().join("config_echo.toml")), &[]).unwrap();
        assert_eq!(cfg, back);
    }
}
