pub mod build_stream;
pub mod eval_classify;
pub mod eval_stream;
pub mod extract;
pub mod finetune;
pub mod gen_synthetic;
pub mod inspect_model;
pub mod train_embedding;

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use crate::config::ExperimentConfig;

/// Resolve a path argument against --flag, then config, then
/// $MKWS_DATA_ROOT, erroring with the flag name when nothing applies.
pub fn resolve_path(
    flag_value: Option<&Path>,
    config_value: Option<PathBuf>,
    cfg: &ExperimentConfig,
    flag_name: &str,
) -> Result<PathBuf> {
    if let Some(p) = flag_value {
        return Ok(p.to_path_buf());
    }
    if let Some(p) = config_value {
        return Ok(p);
    }
    if let Some(p) = cfg.data_root() {
        return Ok(p);
    }
    bail!("missing --{flag_name} (no config value or MKWS_DATA_ROOT either)")
}

pub fn noise_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    if let Some(p) = cfg.noise_dir.clone() {
        return Ok(p);
    }
    bail!("missing --noise-dir (and config has no noise_dir)")
}
