//! On-disk patient layout: one directory per patient holding ecg.csv,
//! eeg.csv, abp.csv, nirs_left.csv, nirs_right.csv, spo2.csv, events.csv,
//! and demographics.csv. Signal files carry explicit timestamps; the sample
//! rate is re-inferred on read and snapped to integer rates. Sample values
//! are written with 17 significant digits, so reading a directory back
//! reproduces the exact doubles that were written.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::domain::{
    Demographics, EventAnnotation, MultiChannelSeries, PatientRecord, SampleSeries,
};
use crate::error::{Error, Result};
use crate::features::table_io::{read_schema_version, SCHEMA_COMMENT_PREFIX};

const SCHEMA_VERSION: u32 = 1;

fn open_checked(path: &Path) -> Result<BufReader<File>> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut reader = BufReader::new(File::open(path)?);
    let version = read_schema_version(&mut reader, path)?;
    if version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "{}: schema version {version}, this build reads {SCHEMA_VERSION}",
            path.display()
        )));
    }
    Ok(reader)
}

fn write_series(path: &Path, series: &SampleSeries) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SCHEMA_COMMENT_PREFIX}{SCHEMA_VERSION}")?;
    writeln!(out, "time_s,value")?;
    for (i, v) in series.values.iter().enumerate() {
        writeln!(out, "{:.6},{:.16e}", series.time_at(i), v)?;
    }
    out.flush()?;
    Ok(())
}

/// Snaps a rate inferred from timestamps to the nearest integer when the
/// mismatch is within rounding noise of the printed times.
fn snap_rate(raw: f64) -> f64 {
    let rounded = raw.round();
    if rounded > 0.0 && (raw - rounded).abs() <= 1e-6 * rounded.max(1.0) {
        rounded
    } else {
        raw
    }
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{}: line {line}: bad number `{field}`", path.display())))
}

fn read_series(path: &Path) -> Result<SampleSeries> {
    let reader = open_checked(path)?;
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if idx == 0 {
            if line.trim_end() != "time_s,value" {
                return Err(Error::Format(format!(
                    "{}: expected `time_s,value` header, found `{line}`",
                    path.display()
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (t, v) = line.split_once(',').ok_or_else(|| {
            Error::Format(format!("{}: line {line_no}: expected two fields", path.display()))
        })?;
        times.push(parse_f64(t, path, line_no)?);
        values.push(parse_f64(v, path, line_no)?);
    }
    if values.len() < 2 {
        return Err(Error::Format(format!(
            "{}: need at least 2 samples to infer the rate",
            path.display()
        )));
    }
    let span = times[times.len() - 1] - times[0];
    if span <= 0.0 {
        return Err(Error::Format(format!("{}: timestamps do not increase", path.display())));
    }
    let rate = snap_rate((values.len() - 1) as f64 / span);
    Ok(SampleSeries::new(rate, times[0], values))
}

fn write_eeg(path: &Path, eeg: &MultiChannelSeries) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SCHEMA_COMMENT_PREFIX}{SCHEMA_VERSION}")?;
    writeln!(out, "time_s,{}", eeg.channel_names.join(","))?;
    for i in 0..eeg.len() {
        write!(out, "{:.6}", eeg.start_s + i as f64 / eeg.rate_hz)?;
        for ch in &eeg.channels {
            write!(out, ",{:.16e}", ch[i])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn read_eeg(path: &Path) -> Result<MultiChannelSeries> {
    let reader = open_checked(path)?;
    let mut channel_names: Vec<String> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let mut channels: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if idx == 0 {
            let mut fields = line.trim_end().split(',');
            if fields.next() != Some("time_s") {
                return Err(Error::Format(format!(
                    "{}: header must start with time_s",
                    path.display()
                )));
            }
            channel_names = fields.map(String::from).collect();
            if channel_names.is_empty() {
                return Err(Error::Format(format!("{}: no channels in header", path.display())));
            }
            channels = vec![Vec::new(); channel_names.len()];
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t = fields.next().ok_or_else(|| {
            Error::Format(format!("{}: line {line_no}: empty row", path.display()))
        })?;
        times.push(parse_f64(t, path, line_no)?);
        for (c, slot) in channels.iter_mut().enumerate() {
            let field = fields.next().ok_or_else(|| {
                Error::Format(format!(
                    "{}: line {line_no}: {} channel fields, header names {}",
                    path.display(),
                    c,
                    channel_names.len()
                ))
            })?;
            slot.push(parse_f64(field, path, line_no)?);
        }
        if fields.next().is_some() {
            return Err(Error::Format(format!(
                "{}: line {line_no}: more fields than header columns",
                path.display()
            )));
        }
    }
    if times.len() < 2 {
        return Err(Error::Format(format!(
            "{}: need at least 2 samples to infer the rate",
            path.display()
        )));
    }
    let span = times[times.len() - 1] - times[0];
    if span <= 0.0 {
        return Err(Error::Format(format!("{}: timestamps do not increase", path.display())));
    }
    Ok(MultiChannelSeries {
        rate_hz: snap_rate((times.len() - 1) as f64 / span),
        start_s: times[0],
        channel_names,
        channels,
    })
}

fn write_events(path: &Path, events: &[EventAnnotation]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SCHEMA_COMMENT_PREFIX}{SCHEMA_VERSION}")?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(["start_s", "end_s", "label"]).map_err(csv_error)?;
    for ev in events {
        w.write_record([format!("{:.6}", ev.start_s), format!("{:.6}", ev.end_s), ev.label.clone()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn read_events(path: &Path) -> Result<Vec<EventAnnotation>> {
    let reader = open_checked(path)?;
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut events = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let line = idx + 3;
        let record = record.map_err(csv_error)?;
        if record.len() != 3 {
            return Err(Error::Format(format!(
                "{}: line {line}: expected start_s,end_s,label",
                path.display()
            )));
        }
        events.push(EventAnnotation {
            start_s: parse_f64(&record[0], path, line)?,
            end_s: parse_f64(&record[1], path, line)?,
            label: record[2].to_string(),
        });
    }
    Ok(events)
}

fn write_demographics(path: &Path, id: &str, demo: &Demographics) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{SCHEMA_COMMENT_PREFIX}{SCHEMA_VERSION}")?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(["patient_id", "age_years", "sex", "operated_side"]).map_err(csv_error)?;
    w.write_record([
        id.to_string(),
        demo.age_years.to_string(),
        demo.sex.to_string(),
        demo.operated_side.to_string(),
    ])
    .map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

fn read_demographics(path: &Path) -> Result<(String, Demographics)> {
    let reader = open_checked(path)?;
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let record = csv_reader
        .records()
        .next()
        .ok_or_else(|| Error::Format(format!("{}: no demographics row", path.display())))?
        .map_err(csv_error)?;
    if record.len() != 4 {
        return Err(Error::Format(format!(
            "{}: expected patient_id,age_years,sex,operated_side",
            path.display()
        )));
    }
    let age: u32 = record[1]
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad age `{}`", path.display(), &record[1])))?;
    Ok((
        record[0].to_string(),
        Demographics {
            age_years: age,
            sex: record[2].parse()?,
            operated_side: record[3].parse()?,
        },
    ))
}

/// Writes `root/<patient id>/` with the full per-patient file set.
pub fn write_patient_dir(record: &PatientRecord, root: &Path) -> Result<PathBuf> {
    if record.id.is_empty() {
        return Err(Error::param("id", "patient id must not be empty"));
    }
    let dir = root.join(&record.id);
    std::fs::create_dir_all(&dir)?;
    write_series(&dir.join("ecg.csv"), &record.ecg)?;
    write_eeg(&dir.join("eeg.csv"), &record.eeg)?;
    write_series(&dir.join("abp.csv"), &record.abp)?;
    write_series(&dir.join("nirs_left.csv"), &record.nirs_left)?;
    write_series(&dir.join("nirs_right.csv"), &record.nirs_right)?;
    write_series(&dir.join("spo2.csv"), &record.spo2)?;
    write_events(&dir.join("events.csv"), &record.events)?;
    write_demographics(&dir.join("demographics.csv"), &record.id, &record.demographics)?;
    Ok(dir)
}

/// Reads one patient directory back into a record.
pub fn read_patient_dir(dir: &Path) -> Result<PatientRecord> {
    let (id, demographics) = read_demographics(&dir.join("demographics.csv"))?;
    Ok(PatientRecord {
        id,
        demographics,
        ecg: read_series(&dir.join("ecg.csv"))?,
        eeg: read_eeg(&dir.join("eeg.csv"))?,
        abp: read_series(&dir.join("abp.csv"))?,
        nirs_left: read_series(&dir.join("nirs_left.csv"))?,
        nirs_right: read_series(&dir.join("nirs_right.csv"))?,
        spo2: read_series(&dir.join("spo2.csv"))?,
        events: read_events(&dir.join("events.csv"))?,
    })
}

/// Reads every patient subdirectory under `root`, sorted by directory name.
pub fn read_cohort(root: &Path) -> Result<Vec<PatientRecord>> {
    if !root.is_dir() {
        return Err(Error::MissingInput(root.display().to_string()));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| read_patient_dir(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Sex, Side, EEG_CHANNELS};

    fn sample_record() -> PatientRecord {
        let seconds = 30;
        PatientRecord {
            id: "C001".into(),
            demographics: Demographics { age_years: 64, sex: Sex::Male, operated_side: Side::Right },
            ecg: SampleSeries::new(
                128.0,
                0.0,
                (0..128 * seconds).map(|i| (i as f64 * 0.11).sin()).collect(),
            ),
            eeg: MultiChannelSeries {
                rate_hz: 128.0,
                start_s: 0.0,
                channel_names: EEG_CHANNELS.iter().map(|s| s.to_string()).collect(),
                channels: (0..6)
                    .map(|c| (0..128 * seconds).map(|i| ((c + i) as f64 * 0.07).cos()).collect())
                    .collect(),
            },
            abp: SampleSeries::new(10.0, 0.0, (0..10 * seconds).map(|i| 80.0 + (i % 7) as f64).collect()),
            nirs_left: SampleSeries::new(1.0, 0.0, (0..seconds).map(|i| 70.0 + (i % 3) as f64).collect()),
            nirs_right: SampleSeries::new(1.0, 0.0, vec![68.0; seconds as usize]),
            spo2: SampleSeries::new(1.0, 0.0, vec![98.0; seconds as usize]),
            events: vec![
                EventAnnotation { start_s: 0.0, end_s: 15.0, label: "pre_induction".into() },
                EventAnnotation { start_s: 15.0, end_s: 30.0, label: "pre_clamp_anaesthesia".into() },
            ],
        }
    }

    #[test]
    fn round_trip_recovers_structure_and_rates() {
        let tmp = tempfile::tempdir().unwrap();
        let rec = sample_record();
        write_patient_dir(&rec, tmp.path()).unwrap();
        let back = read_patient_dir(&tmp.path().join("C001")).unwrap();
        assert_eq!(back.id, rec.id);
        assert_eq!(back.demographics, rec.demographics);
        assert_eq!(back.ecg.rate_hz, 128.0);
        assert_eq!(back.abp.rate_hz, 10.0);
        assert_eq!(back.spo2.rate_hz, 1.0);
        assert_eq!(back.ecg.len(), rec.ecg.len());
        assert_eq!(back.eeg.channel_names, rec.eeg.channel_names);
        assert_eq!(back.events, rec.events);
        // 17 significant digits round-trip doubles exactly.
        assert_eq!(back.ecg.values, rec.ecg.values);
        assert_eq!(back.eeg.channels, rec.eeg.channels);
    }

    #[test]
    fn write_read_write_is_byte_stable() {
        let tmp = tempfile::tempdir().unwrap();
        let rec = sample_record();
        write_patient_dir(&rec, &tmp.path().join("a")).unwrap();
        let back = read_patient_dir(&tmp.path().join("a").join("C001")).unwrap();
        write_patient_dir(&back, &tmp.path().join("b")).unwrap();
        for name in ["ecg.csv", "eeg.csv", "abp.csv", "nirs_left.csv", "nirs_right.csv", "spo2.csv", "events.csv", "demographics.csv"] {
            let a = std::fs::read(tmp.path().join("a").join("C001").join(name)).unwrap();
            let b = std::fs::read(tmp.path().join("b").join("C001").join(name)).unwrap();
            assert_eq!(a, b, "{name} changed across a read/write cycle");
        }
    }

    #[test]
    fn cohort_reads_in_name_order() {
        let tmp = tempfile::tempdir().unwrap();
        let mut rec = sample_record();
        rec.id = "C002".into();
        write_patient_dir(&rec, tmp.path()).unwrap();
        rec.id = "C001".into();
        write_patient_dir(&rec, tmp.path()).unwrap();
        let cohort = read_cohort(tmp.path()).unwrap();
        let ids: Vec<&str> = cohort.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["C001", "C002"]);
    }

    #[test]
    fn missing_file_and_bad_header_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(read_patient_dir(tmp.path()), Err(Error::MissingInput(_))));
        let rec = sample_record();
        let dir = write_patient_dir(&rec, tmp.path()).unwrap();
        std::fs::write(dir.join("ecg.csv"), "time_s,value\n0,1\n1,2\n").unwrap();
        assert!(matches!(read_patient_dir(&dir), Err(Error::Format(_))));
    }
}
