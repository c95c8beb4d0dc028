//! Output helpers: atomic writes, CSV tables and sorted-key JSON.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Write `bytes` to a temporary file next to `path`, then rename it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Serialize rows to CSV bytes with the given header. Floats use the
/// shortest representation that round-trips.
pub fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |source| Error::Csv {
        path: "<memory>".into(),
        source,
    };
    writer.write_record(header).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))
}

pub fn write_csv<R: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = R>,
) -> Result<()> {
    let bytes = csv_bytes(header, rows)?;
    write_atomic(path, &bytes)
}

/// Pretty JSON with lexicographically sorted keys.
pub fn json_sorted<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Map is a BTreeMap without the preserve_order feature, so
    // round-tripping through Value sorts every object.
    let value = serde_json::to_value(value)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        zeta: f64,
        alpha: Option<f64>,
    }

    #[test]
    fn json_keys_sorted() {
        let text = json_sorted(&Row { zeta: 1.0, alpha: None }).unwrap();
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
    }

    #[test]
    fn csv_round_trip_precision() {
        let x = 0.1 + 0.2;
        let bytes = csv_bytes(&["a", "b"], [(x, 1e-300)]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let line = text.lines().nth(1).unwrap();
        let parsed: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert_eq!(parsed, x);
        assert!(text.starts_with("a,b\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn atomic_write_creates_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "hello");
        let leftovers: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
