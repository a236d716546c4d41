//! Small helpers shared by the plain-text and CSV readers/writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Non-empty, non-comment lines with their 1-based line numbers.
pub(crate) fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(n, l)| (n + 1, l.trim().to_string()))
        .collect())
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("expected a number, found `{field}`")))
}

pub(crate) fn parse_usize(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(path, line, format!("expected an integer, found `{field}`")))
}

pub(crate) fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}
