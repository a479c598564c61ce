//! JSON artifact I/O with exact float round-tripping.
//!
//! Checkpoints, datasets, and generators are interchanged as JSON. The one
//! non-default choice: floats are written with 17 significant digits
//! (`%.16e`), which is always enough for an `f64` to survive
//! serialize → parse bit-for-bit. Two artifacts are therefore equal as files
//! exactly when they are equal as values, which the reproducibility tests
//! lean on.

use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// `serde_json` formatter that pins float formatting to 17 significant
/// digits instead of the default shortest-round-trip representation.
struct ExactFloatFormatter;

impl serde_json::ser::Formatter for ExactFloatFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.16e}", value)
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.8e}", value)
    }
}

/// Serialize to a JSON string with exact float formatting.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloatFormatter);
    value.serialize(&mut ser).map_err(|e| Error::Artifact {
        path: "<memory>".into(),
        reason: e.to_string(),
    })?;
    // serde_json only emits valid UTF-8.
    Ok(String::from_utf8(out).expect("serializer produced invalid UTF-8"))
}

/// Parse a value from a JSON string.
pub fn from_json_str<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Artifact {
        path: "<memory>".into(),
        reason: e.to_string(),
    })
}

/// Write `value` as JSON to `path`, creating parent directories as needed.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut text = to_json_string(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Artifact {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Read a JSON artifact from `path`.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Artifact {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Artifact {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
