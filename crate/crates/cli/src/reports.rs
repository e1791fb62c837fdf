//! JSON report serialization with a provenance wrapper. Numbers pass
//! through the shortest-round-trip formatter, so nothing is truncated and
//! identical inputs produce identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::fields_io::{FieldIoError, TOOL_VERSION};

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    tool_version: &'static str,
    config_hash: &'a str,
    data: &'a T,
}

pub fn render_json<T: Serialize>(config_hash: &str, body: &T) -> String {
    let wrapped = Wrapped {
        tool_version: TOOL_VERSION,
        config_hash,
        data: body,
    };
    let mut text = serde_json::to_string_pretty(&wrapped).expect("report serialization");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize>(
    path: &Path,
    config_hash: &str,
    body: &T,
) -> Result<(), FieldIoError> {
    std::fs::write(path, render_json(config_hash, body)).map_err(|source| FieldIoError::Io {
        path: path.display().to_string(),
        source,
    })
}
