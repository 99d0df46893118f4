use std::path::Path;

use serde_json::Value;
use xcb_core::data::NUM_ATTRIBUTES;
use xcb_core::io::read_to_string;
use xcb_core::models::ModelKind;
use xcb_core::training::TrainConfig;

use crate::args::ConfigArgs;
use crate::CliError;

/// Sets the field at dotted `path` inside `root`. The value is read as JSON
/// when it parses, otherwise as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("`{}` is not a section", keys[..i].join("."))))?;
        if !obj.contains_key(*key) {
            return Err(CliError::Usage(format!("unknown configuration key `{path}`")));
        }
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*key).expect("checked above");
    }
    Err(CliError::Usage("empty override key".into()))
}

/// Default config for the chosen kind (or the config file), then `--model`,
/// `--seed` and the dotted overrides, in that order.
pub fn resolve(args: &ConfigArgs, default_kind: ModelKind) -> Result<TrainConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => load(path)?,
        None => TrainConfig::for_kind(args.model.unwrap_or(default_kind)),
    };
    if let Some(kind) = args.model {
        if cfg.model.kind != kind {
            cfg.model.kind = kind;
            if kind == ModelKind::Cbm {
                cfg.model.latent_dim = NUM_ATTRIBUTES;
            }
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.overrides.is_empty() {
        let mut v = serde_json::to_value(&cfg).map_err(xcb_core::Error::from)?;
        for o in &args.overrides {
            apply_override(&mut v, o)?;
        }
        cfg = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("invalid override: {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(path: &Path) -> Result<TrainConfig, CliError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
