//! Output helpers: every JSON artifact embeds the resolved configuration
//! under a `meta` key.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::{CliError, CliResult};

pub fn meta(subcommand: &str, resolved: Value) -> Value {
    json!({
        "tool": "enkf-cal",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config": resolved,
    })
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serializing output: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Validation(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

pub fn vector_json(v: &DVector<f64>) -> Value {
    Value::from(v.iter().cloned().collect::<Vec<f64>>())
}

pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect();
    Value::from(rows)
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
