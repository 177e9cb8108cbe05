//! Shared text-format helpers: float formatting that survives a round trip,
//! buffered file access, and field parsing with file/line context.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits so that parsing the text
/// reproduces the original bits for every finite `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_f64(path: &Path, line: usize, field: &str, text: &str) -> Result<f64> {
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{field}: not a number: {text:?}")))?;
    if !value.is_finite() {
        return Err(Error::parse(
            path,
            line,
            format!("{field}: non-finite value {text:?}"),
        ));
    }
    Ok(value)
}

pub(crate) fn parse_usize(path: &Path, line: usize, field: &str, text: &str) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{field}: not a non-negative integer: {text:?}")))
}
