//! Artifact writers. Every file starts with a provenance comment and is
//! written to a sibling temporary file first, then renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Int,
    Float,
    Text,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn int(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Int,
        }
    }

    pub fn float(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Float,
        }
    }

    pub fn text(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Text,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn kind(&self) -> ColumnKind {
        match self {
            Cell::Int(_) => ColumnKind::Int,
            Cell::Float(_) => ColumnKind::Float,
            Cell::Text(_) => ColumnKind::Text,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Identifies the run that produced an artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: String) -> Self {
        Self {
            seed,
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn comment(&self) -> String {
        format!(
            "# seed={},config_hash={},version={}\n",
            self.seed, self.config_hash, self.version
        )
    }
}

pub fn render_table(rows: &[Vec<Cell>], schema: &[Column], provenance: &Provenance) -> Result<String> {
    let mut out = provenance.comment();
    let header: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, row) in rows.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(HarnessError::Runtime(format!(
                "row {r} has {} cells for {} columns",
                row.len(),
                schema.len()
            )));
        }
        if let Some((cell, col)) = row.iter().zip(schema).find(|(cell, col)| cell.kind() != col.kind) {
            return Err(HarnessError::Runtime(format!(
                "row {r}: column {} expects {:?}, got {:?}",
                col.name,
                col.kind,
                cell.kind()
            )));
        }
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_table(rows: &[Vec<Cell>], schema: &[Column], path: &Path, provenance: &Provenance) -> Result<()> {
    let text = render_table(rows, schema, provenance)?;
    write_atomic(path, text.as_bytes())
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    record: &'a T,
}

/// Pretty JSON with the provenance fields next to the record.
pub fn write_json<T: Serialize>(record: &T, path: &Path, provenance: &Provenance) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Envelope { provenance, record })
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    tmp.set_file_name(format!(".{name}.partial"));
    let mut file = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    file.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
