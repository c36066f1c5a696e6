use std::path::Path;

use crate::error::{Error, Result};

/// One prompt per non-blank line.
pub fn parse_calibration(text: &str) -> Result<Vec<String>> {
    let prompts: Vec<String> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(str::to_owned)
        .collect();
    if prompts.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    Ok(prompts)
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text)
}
