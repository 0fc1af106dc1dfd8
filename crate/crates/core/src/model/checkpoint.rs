//! Checkpoint persistence: a single JSON object holding the config and the
//! flat row-major contents of every matrix, written atomically
//! (write-then-rename). Floats round-trip exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{GlnConfig, GlnParams, LayerParams, ModelError};

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    /// All kernels concatenated, each flattened row-major.
    #[serde(rename = "W")]
    kernels: Vec<f64>,
    #[serde(rename = "U")]
    local_mix: Vec<f64>,
    #[serde(rename = "Z")]
    global_mix: Vec<f64>,
    #[serde(rename = "M")]
    node_mix: Vec<f64>,
    #[serde(rename = "Q")]
    pair_mix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: GlnConfig,
    layers: Vec<LayerRecord>,
}

fn flatten(m: &Array2<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

fn unflatten(data: &[f64], rows: usize, cols: usize, what: &str) -> Result<Array2<f64>, ModelError> {
    if data.len() != rows * cols {
        return Err(ModelError::BadCheckpoint(format!(
            "{what}: expected {rows}x{cols} = {} values, got {}",
            rows * cols,
            data.len()
        )));
    }
    Array2::from_shape_vec((rows, cols), data.to_vec())
        .map_err(|e| ModelError::BadCheckpoint(e.to_string()))
}

/// Serialize parameters to `path`; the file appears atomically.
pub fn save_checkpoint(params: &GlnParams, path: &Path) -> Result<(), ModelError> {
    let record = CheckpointFile {
        format_version: 1,
        config: params.config.clone(),
        layers: params
            .layers
            .iter()
            .map(|l| LayerRecord {
                kernels: l.kernels.iter().flat_map(flatten).collect(),
                local_mix: flatten(&l.local_mix),
                global_mix: flatten(&l.global_mix),
                node_mix: flatten(&l.node_mix),
                pair_mix: flatten(&l.pair_mix),
            })
            .collect(),
    };
    let body = serde_json::to_string(&record).expect("checkpoint serializes");
    let io_err = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// Load a checkpoint, validating the format version and every shape against
/// the embedded config.
pub fn load_checkpoint(path: &Path) -> Result<GlnParams, ModelError> {
    let body = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let record: CheckpointFile =
        serde_json::from_str(&body).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
    if record.format_version != 1 {
        return Err(ModelError::BadCheckpoint(format!(
            "unsupported format version {}",
            record.format_version
        )));
    }
    let config = record.config;
    config.validate()?;
    if record.layers.len() != config.layer_count {
        return Err(ModelError::BadCheckpoint(format!(
            "expected {} layers, got {}",
            config.layer_count,
            record.layers.len()
        )));
    }
    let (n, h, k) = (config.n, config.hidden_dim, config.kernel_count);
    let layers = record
        .layers
        .iter()
        .enumerate()
        .map(|(l, rec)| {
            let d_in = config.layer_input_dim(l);
            let per_kernel = d_in * h;
            if rec.kernels.len() != k * per_kernel {
                return Err(ModelError::BadCheckpoint(format!(
                    "layer {l}: expected {k} kernels of {per_kernel} values",
                )));
            }
            let kernels = rec
                .kernels
                .chunks(per_kernel)
                .map(|chunk| unflatten(chunk, d_in, h, "kernel"))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(LayerParams {
                kernels,
                local_mix: unflatten(&rec.local_mix, h, h, "local mix")?,
                global_mix: unflatten(&rec.global_mix, h, h, "global mix")?,
                pair_mix: unflatten(&rec.pair_mix, h, h, "pair mix")?,
                node_mix: unflatten(&rec.node_mix, n, n, "node mix")?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GlnParams { config, layers })
}
