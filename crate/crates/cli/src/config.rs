//! Flat-JSON config files and the defaults < file < flags resolution rule.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Load a command's config file when given; `T` is the command's flat
/// option set with every field optional.
pub fn load_file<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let body = fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            serde_json::from_str(&body)
                .with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

/// Resolve one setting: an explicit flag beats the file value beats the
/// default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Write the effective configuration next to the command's outputs so a run
/// can be reproduced from the directory alone.
pub fn echo_effective<T: Serialize>(out_dir: &Path, effective: &T) -> Result<()> {
    let path = out_dir.join("effective_config.json");
    let body = serde_json::to_string_pretty(effective)?;
    fs::write(&path, body + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Parse a comma-separated list such as `10,20,50`.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad list entry '{part}': {e}"))
        })
        .collect()
}

/// Parse `train,val,test` fractions such as `0.8,0.1,0.1`.
pub fn parse_split(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated fractions".into());
    }
    let mut values = [0.0; 3];
    for (v, p) in values.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad fraction '{p}': {e}"))?;
    }
    Ok((values[0], values[1], values[2]))
}
