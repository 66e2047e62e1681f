//! Feature-table CSV format.
//!
//! Layout: a `# ceabench-schema=N` comment line, a header row
//! (`patient_id,window_start_s,<feature names>,label`), then one row per
//! window. Floats carry 17 significant digits so parsing them back is
//! lossless; NaN cells are written as empty fields.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::domain::{FeatureRow, FeatureSchema, FeatureTable};
use crate::error::{Error, Result};

pub const SCHEMA_COMMENT_PREFIX: &str = "# ceabench-schema=";

/// Lossless float text: empty for NaN, 17 significant digits otherwise.
fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("line {line}: unparsable number `{field}`")))
}

pub fn write_table(table: &FeatureTable, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}{}", SCHEMA_COMMENT_PREFIX, table.schema.version)?;

    let mut w = csv::WriterBuilder::new().from_writer(out);
    let mut header: Vec<&str> = Vec::with_capacity(table.schema.len() + 3);
    header.push("patient_id");
    header.push("window_start_s");
    header.extend(table.schema.names.iter().map(String::as_str));
    header.push("label");
    w.write_record(&header).map_err(csv_error)?;

    for row in &table.rows {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        record.push(row.patient_id.clone());
        record.push(format!("{:.16e}", row.window_start_s));
        record.extend(row.values.iter().map(|&v| fmt_value(v)));
        record.push(row.label.clone());
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Reads the schema-version comment from the first line.
pub(crate) fn read_schema_version(reader: &mut impl BufRead, path: &Path) -> Result<u32> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let first = first.trim_end();
    let version = first
        .strip_prefix(SCHEMA_COMMENT_PREFIX)
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| {
            Error::Format(format!(
                "{}: expected a `{}N` first line, found `{first}`",
                path.display(),
                SCHEMA_COMMENT_PREFIX
            ))
        })?;
    Ok(version)
}

pub fn read_table(path: &Path) -> Result<FeatureTable> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut reader = BufReader::new(File::open(path)?);
    let version = read_schema_version(&mut reader, path)?;

    let mut csv_reader =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = csv_reader.headers().map_err(csv_error)?.clone();
    if header.len() < 3 || &header[0] != "patient_id" || &header[1] != "window_start_s" {
        return Err(Error::Schema(format!(
            "{}: header must start with patient_id,window_start_s",
            path.display()
        )));
    }
    if &header[header.len() - 1] != "label" {
        return Err(Error::Schema(format!("{}: header must end with label", path.display())));
    }
    let names: Vec<String> = header.iter().skip(2).take(header.len() - 3).map(String::from).collect();
    let schema = FeatureSchema { version, names };

    let mut table = FeatureTable::new(schema);
    for (idx, record) in csv_reader.records().enumerate() {
        // Line 1 is the comment, line 2 the header.
        let line = idx + 3;
        let record = record.map_err(csv_error)?;
        if record.len() != header.len() {
            return Err(Error::Schema(format!(
                "line {line}: {} value columns, schema expects {}",
                record.len().saturating_sub(3),
                header.len() - 3
            )));
        }
        let mut values = Vec::with_capacity(header.len() - 3);
        for field in record.iter().skip(2).take(header.len() - 3) {
            values.push(parse_value(field, line)?);
        }
        let row = FeatureRow {
            patient_id: record[0].to_string(),
            window_start_s: parse_value(&record[1], line)?,
            values,
            label: record[header.len() - 1].to_string(),
        };
        table.push(row).map_err(|e| match e {
            Error::Vocabulary(l) => Error::Vocabulary(format!("line {line}: {l}")),
            other => other,
        })?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::FeatureSchema;

    fn sample_table() -> FeatureTable {
        let mut t = FeatureTable::new(FeatureSchema::v1());
        let mut values: Vec<f64> = (0..47).map(|i| (i as f64 + 0.1) / 3.0).collect();
        values[5] = f64::NAN;
        values[40] = 1.0 / 3.0;
        t.push(FeatureRow {
            patient_id: "C001".into(),
            window_start_s: 120.0,
            values,
            label: "clamped_artery".into(),
        })
        .unwrap();
        t.push(FeatureRow {
            patient_id: "C002".into(),
            window_start_s: 180.0,
            values: (0..47).map(|i| (i as f64).exp().recip()).collect(),
            label: "shunt".into(),
        })
        .unwrap();
        t
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = sample_table();
        write_table(&table, &path).unwrap();
        let back = read_table(&path).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn missing_schema_comment_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "patient_id,window_start_s,label\n").unwrap();
        assert!(matches!(read_table(&path), Err(Error::Format(_))));
    }

    #[test]
    fn short_row_reports_column_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = sample_table();
        write_table(&table, &path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        // Drop one field from the first data row.
        let lines: Vec<&str> = text.lines().collect();
        let mut broken = lines.clone();
        let row: Vec<&str> = lines[2].split(',').collect();
        let short = row[..row.len() - 2].join(",");
        let with_label = format!("{short},clamped_artery");
        broken[2] = &with_label;
        text = broken.join("\n");
        std::fs::write(&path, text).unwrap();
        match read_table(&path) {
            Err(Error::Schema(msg)) => assert!(msg.contains("46"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_vocabulary_error_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = sample_table();
        write_table(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("shunt", "tea_break");
        std::fs::write(&path, text).unwrap();
        match read_table(&path) {
            Err(Error::Vocabulary(msg)) => assert!(msg.contains("line 4"), "{msg}"),
            other => panic!("expected vocabulary error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_missing_input() {
        assert!(matches!(
            read_table(Path::new("/nonexistent/t.csv")),
            Err(Error::MissingInput(_))
        ));
    }
}
