//! Deterministic CSV emission: fixed column orders, headers always written,
//! line-feed endings, shortest round-trip float formatting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct CsvFile {
    path: PathBuf,
    buffer: String,
}

impl CsvFile {
    pub fn new(dir: &Path, name: &str, header: &str) -> Self {
        let mut buffer = String::new();
        buffer.push_str(header);
        buffer.push('\n');
        Self {
            path: dir.join(name),
            buffer,
        }
    }

    pub fn row(&mut self, fields: &[CsvField]) {
        for (i, field) in fields.iter().enumerate() {
            if i > 0 {
                self.buffer.push(',');
            }
            match field {
                CsvField::Float(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
                CsvField::Int(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
                CsvField::Str(s) => self.buffer.push_str(s),
                CsvField::Empty => {}
            }
        }
        self.buffer.push('\n');
    }

    pub fn write(self) -> Result<PathBuf, String> {
        std::fs::write(&self.path, self.buffer.as_bytes())
            .map_err(|e| format!("cannot write {}: {e}", self.path.display()))?;
        Ok(self.path)
    }
}

pub enum CsvField<'a> {
    Float(f64),
    Int(i64),
    Str(&'a str),
    Empty,
}

pub fn float(v: f64) -> CsvField<'static> {
    CsvField::Float(v)
}

pub fn int(v: i64) -> CsvField<'static> {
    CsvField::Int(v)
}

pub fn text(s: &str) -> CsvField<'_> {
    CsvField::Str(s)
}
