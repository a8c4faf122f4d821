//! Shared I/O helpers for the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bnsearch::bn::format::{parse_network, ParsedNetwork};
use bnsearch::dataset::{load_csv, Dataset, LabelPolicy};
use bnsearch::scoring::PriorKind;

use crate::{CliError, CliResult};

pub fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn ensure_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn load_network_file(path: &Path) -> CliResult<ParsedNetwork> {
    let text = read_to_string(path)?;
    parse_network(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn load_dataset(path: &Path, variables: &[bnsearch::bn::Variable]) -> CliResult<Dataset> {
    load_csv(path, LabelPolicy::Declared(variables))
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn parse_prior(name: &str) -> CliResult<PriorKind> {
    match name {
        "k2" => Ok(PriorKind::K2),
        "bdeu" => Ok(PriorKind::Bdeu),
        other => Err(CliError::Validation(format!(
            "unknown prior '{other}' (expected k2 or bdeu)"
        ))),
    }
}

pub fn prior_name(prior: PriorKind) -> &'static str {
    match prior {
        PriorKind::K2 => "k2",
        PriorKind::Bdeu => "bdeu",
    }
}

/// Sorted `key=value` block used for manifests and config echoes.
pub fn key_value_block(pairs: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (key, value) in pairs {
        out.push_str(&format!("{key}={value}\n"));
    }
    out
}

/// Parse a `key=value` file ('#' comments, blank lines allowed).
pub fn parse_key_value_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Validation(format!(
                "{}:{}: expected key=value",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
