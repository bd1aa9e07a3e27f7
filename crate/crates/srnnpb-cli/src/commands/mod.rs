pub mod analyze;
pub mod generate;
pub mod recognize;
pub mod train;

use std::path::Path;

use crate::checkpoint::{checkpoint_id, load_checkpoint, Header};
use crate::CliResult;
use srnnpb::model::ModelParams;

/// Load a checkpoint and compute its content id for report provenance.
pub fn load_tagged(path: &Path) -> CliResult<(ModelParams, Header, String)> {
    let (params, header) = load_checkpoint(path)?;
    let id = checkpoint_id(path)?;
    Ok((params, header, id))
}

/// Parse "a,b,c" into floats.
pub fn parse_float_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect()
}
