//! Dataset manifest: CSV with `image_path,class_id,caption` columns.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_path: PathBuf,
    pub class_id: String,
    #[serde(default)]
    pub caption: String,
}

/// Reads a manifest; relative image paths resolve against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = std::fs::File::open(path)?;
    parse_manifest(file, &base)
}

pub fn parse_manifest(reader: impl std::io::Read, base: &Path) -> Result<Vec<ManifestRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.deserialize::<ManifestRow>() {
        let mut row = record.map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if row.image_path.is_relative() {
            row.image_path = base.join(&row.image_path);
        }
        rows.push(row);
    }
    Ok(rows)
}
