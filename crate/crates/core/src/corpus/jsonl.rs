//! One-JSON-object-per-line record files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reads every record of a JSONL file. Blank lines are skipped; a malformed
/// line is reported with its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::MalformedLine {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RawTitlePair;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![
            RawTitlePair::new("fruit cake , 13 oz", Some("fruit cake")),
            RawTitlePair::new("diaper bag", None),
            RawTitlePair::new("shower liner", Some("shower liner")),
        ];
        write_jsonl(&path, &pairs).unwrap();
        let back: Vec<RawTitlePair> = read_jsonl(&path).unwrap();
        assert_eq!(back, pairs);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"long":"fruit cake , 13 oz","short":"fruit cake"}"#));
        assert!(text.contains(r#""short":null"#));
    }

    #[test]
    fn bad_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"long\":\"a\",\"short\":null}\n{not json}\n").unwrap();
        let err = read_jsonl::<RawTitlePair>(&path).unwrap_err();
        match err {
            Error::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
        assert!(err_string(&path).contains(":2:"));
    }

    fn err_string(path: &Path) -> String {
        read_jsonl::<RawTitlePair>(path).unwrap_err().to_string()
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_jsonl::<RawTitlePair>(&path).unwrap().is_empty());
    }
}
