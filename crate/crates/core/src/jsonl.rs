//! Line-delimited JSON record files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
}

impl JsonlError {
    /// 1-based line number for record-level errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            JsonlError::Record { line, .. } => Some(*line),
            JsonlError::Io { .. } => None,
        }
    }
}

/// Parses every non-blank line of `text` as one `T`, tagging errors with
/// `origin` and the 1-based line number.
pub fn parse_str<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| JsonlError::Record {
            path: origin.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Like [`parse_str`] but keeps per-line results instead of stopping at the
/// first bad line. Blank lines are skipped.
pub fn parse_lines<T: DeserializeOwned>(text: &str) -> Vec<(usize, Result<T, serde_json::Error>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| (idx + 1, serde_json::from_str(l)))
        .collect()
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let text = read_text(path)?;
    parse_str(&text, &path.display().to_string())
}

pub fn read_text(path: &Path) -> Result<String, JsonlError> {
    fs::read_to_string(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One compact JSON object per line, `\n` terminated.
pub fn to_string<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        // Serializing plain data structs cannot fail.
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes `contents` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Appends records to a line-delimited file, creating it if needed.
pub fn append_file<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(to_string(records).as_bytes())?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize, Serialize, PartialEq)]
    struct Row {
        id: String,
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_str::<Row>("{\"id\":\"a\"}\n\n{\"id\":3}\n", "x.jsonl").unwrap_err();
        assert_eq!(err.line(), Some(3));
        assert!(err.to_string().starts_with("x.jsonl:3:"));
    }

    #[test]
    fn skips_blank_lines() {
        let rows: Vec<Row> = parse_str("\n{\"id\":\"a\"}\n   \n", "-").unwrap();
        assert_eq!(rows, vec![Row { id: "a".into() }]);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = std::env::temp_dir().join(format!("emoforge-jsonl-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.jsonl");
        write_atomic(&path, b"one\n").unwrap();
        write_atomic(&path, b"two\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two\n");
        let leftovers: Vec<_> = fs::read_dir(&dir).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }
}
