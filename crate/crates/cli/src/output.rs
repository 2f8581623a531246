//! Artifact writing: CSV and JSON files under the output directory.

use std::path::PathBuf;

use crate::AppError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn wants_csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn wants_json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

pub struct OutputContext {
    pub dir: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    /// Raw config text, hashed into the metadata.
    pub raw_config: String,
}

impl OutputContext {
    pub fn write(&self, filename: &str, contents: &str) -> Result<PathBuf, AppError> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| AppError::io(format!("cannot create {}: {e}", self.dir.display())))?;
        let path = self.dir.join(filename);
        std::fs::write(&path, contents)
            .map_err(|e| AppError::io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json_value(
        &self,
        filename: &str,
        value: &serde_json::Value,
    ) -> Result<PathBuf, AppError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| AppError::io(format!("serialization failed: {e}")))?;
        text.push('\n');
        self.write(filename, &text)
    }
}
