//! Versioned JSON documents written and read by the command line.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// `{"format_version": 1, ...body}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<B> {
    pub format_version: u32,
    #[serde(flatten)]
    pub body: B,
}

impl<B> Versioned<B> {
    pub fn new(body: B) -> Self {
        Versioned {
            format_version: FORMAT_VERSION,
            body,
        }
    }
}

pub fn to_json_string<B: Serialize>(body: &B) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Versioned::new(body))? + "\n")
}

pub fn from_json_str<B: DeserializeOwned>(text: &str) -> Result<B> {
    let doc: Versioned<B> = serde_json::from_str(text)?;
    check_version(doc.format_version)?;
    Ok(doc.body)
}

pub fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported format_version {version} (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

pub fn save_json<B: Serialize>(path: &Path, body: &B) -> Result<()> {
    write_text(path, &to_json_string(body)?)
}

pub fn load_json<B: DeserializeOwned>(path: &Path) -> Result<B> {
    let text = read_text(path)?;
    from_json_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
