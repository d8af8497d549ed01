//! Scenario, matrix and norm-kind arguments.

use std::collections::BTreeMap;
use std::path::Path;

use lognorm_core::system::ScenarioSpec;
use lognorm_core::{builtin_scenario, Matrix, NormKind, Scenario};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::output::read_to_string;

/// `key=value` pairs; values are parsed as JSON, falling back to strings.
pub fn parse_params(pairs: &[String]) -> CliResult<BTreeMap<String, Value>> {
    pairs
        .iter()
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("parameter `{p}` is not key=value")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            Ok((k.trim().to_string(), value))
        })
        .collect()
}

/// A builtin scenario name or a path to a scenario JSON file.
pub fn load(source: &str, params: &[String]) -> CliResult<Scenario> {
    let overrides = parse_params(params)?;
    let path = Path::new(source);
    if source.ends_with(".json") || path.is_file() {
        let text = read_to_string(path)?;
        let mut spec: ScenarioSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{source}: invalid scenario: {e}")))?;
        spec.params.extend(overrides);
        return Ok(Scenario::from_spec(&spec)?);
    }
    Ok(builtin_scenario(source, &overrides)?)
}

/// Inline JSON rows, or a path to a file holding them.
pub fn parse_matrix(arg: &str) -> CliResult<Matrix> {
    let text = if arg.trim_start().starts_with('[') {
        arg.to_string()
    } else {
        read_to_string(Path::new(arg.trim_start_matches('@')))?
    };
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid matrix: {e}")))?;
    Ok(Matrix::from_rows(&rows)?)
}

pub fn parse_vector(arg: &str) -> CliResult<Vec<f64>> {
    serde_json::from_str(arg).map_err(|e| CliError::usage(format!("invalid vector `{arg}`: {e}")))
}

/// Comma-separated standard norm kinds.
pub fn parse_kinds(arg: &str) -> CliResult<Vec<NormKind>> {
    let kinds = arg
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.parse::<NormKind>()
                .map_err(|e| CliError::usage(e.to_string()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(CliError::usage("no norm kinds given"));
    }
    Ok(kinds)
}
