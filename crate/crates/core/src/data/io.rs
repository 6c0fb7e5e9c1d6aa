//! Comma-separated file formats.
//!
//! | file    | header                              |
//! |---------|-------------------------------------|
//! | events  | `peak_time,class`                   |
//! | samples | `id,timestamp,mask,f0,...,f{D-1}`   |
//! | labels  | `id,label`                          |
//! | preds   | `id,class` or `id,p_O,p_C,p_M,p_X`  |
//!
//! Timestamps are ISO-8601 UTC (`2011-06-01T00:00:00Z`); `mask` is ten `0`/`1`
//! characters with `1` meaning the channel is present.

use std::fs::File;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::labeling::FlareEvent;
use crate::error::{FlareError, Result};
use crate::types::{FlareClass, ProbDist, Sample, NUM_CHANNELS};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .map(|n| n.and_utc())
        .map_err(|_| format!("invalid ISO-8601 timestamp {s:?}"))
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> FlareError {
    FlareError::Parse {
        path: path_str(path),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> FlareError {
    match e.position() {
        Some(pos) => parse_err(path, pos.line(), e.to_string()),
        None => FlareError::Csv {
            path: path_str(path),
            source: e,
        },
    }
}

/// Reads all records after checking the header, returning each with its
/// 1-based line number.
fn read_records(path: &Path) -> Result<(StringRecord, Vec<(u64, StringRecord)>)> {
    let file = File::open(path).map_err(|source| FlareError::Io {
        path: path_str(path),
        source,
    })?;
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, header: &StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| FlareError::Io {
        path: path_str(path),
        source,
    })?;
    Ok(WriterBuilder::new().from_writer(file))
}

fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    let map = |e: csv::Error| csv_err(path, e);
    w.write_record(header).map_err(map)?;
    for row in rows {
        w.write_record(&row).map_err(map)?;
    }
    w.flush().map_err(|source| FlareError::Io {
        path: path_str(path),
        source,
    })
}

fn class_field(path: &Path, line: u64, s: &str) -> Result<FlareClass> {
    s.parse().map_err(|e: String| parse_err(path, line, e))
}

pub fn write_events(path: &Path, events: &[FlareEvent]) -> Result<()> {
    write_rows(
        path,
        &["peak_time".into(), "class".into()],
        events
            .iter()
            .map(|e| vec![format_timestamp(&e.peak_time), e.flare_class.to_string()]),
    )
}

pub fn read_events(path: &Path) -> Result<Vec<FlareEvent>> {
    let (header, rows) = read_records(path)?;
    expect_header(path, &header, &["peak_time", "class"])?;
    rows.iter()
        .map(|(line, rec)| {
            Ok(FlareEvent {
                peak_time: parse_timestamp(&rec[0]).map_err(|m| parse_err(path, *line, m))?,
                flare_class: class_field(path, *line, &rec[1])?,
            })
        })
        .collect()
}

fn mask_string(mask: &[bool; NUM_CHANNELS]) -> String {
    mask.iter().map(|p| if *p { '1' } else { '0' }).collect()
}

fn parse_mask(s: &str) -> std::result::Result<[bool; NUM_CHANNELS], String> {
    let s = s.trim();
    if s.len() != NUM_CHANNELS {
        return Err(format!("mask {s:?} must have {NUM_CHANNELS} characters"));
    }
    let mut mask = [false; NUM_CHANNELS];
    for (m, ch) in mask.iter_mut().zip(s.chars()) {
        *m = match ch {
            '1' => true,
            '0' => false,
            other => return Err(format!("mask character {other:?} is not 0 or 1")),
        };
    }
    Ok(mask)
}

/// Writes samples without labels. All samples must share a feature width.
pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    if let Some(s) = samples.iter().find(|s| s.features.len() != dim) {
        return Err(FlareError::DimensionMismatch {
            expected: dim,
            got: s.features.len(),
        });
    }
    let mut header: Vec<String> = vec!["id".into(), "timestamp".into(), "mask".into()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    write_rows(
        path,
        &header,
        samples.iter().map(|s| {
            let mut row = vec![
                s.id.clone(),
                format_timestamp(&s.timestamp),
                mask_string(&s.channel_mask),
            ];
            row.extend(s.features.iter().map(f64::to_string));
            row
        }),
    )
}

/// Reads samples; labels are left empty.
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let (header, rows) = read_records(path)?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let dim = names.len().saturating_sub(3);
    let mut expected = vec!["id".to_string(), "timestamp".into(), "mask".into()];
    expected.extend((0..dim).map(|j| format!("f{j}")));
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    expect_header(path, &header, &expected)?;

    rows.iter()
        .map(|(line, rec)| {
            let features = rec
                .iter()
                .skip(3)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| {
                            parse_err(path, *line, format!("invalid feature value {v:?}"))
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Sample {
                id: rec[0].trim().to_string(),
                timestamp: parse_timestamp(&rec[1]).map_err(|m| parse_err(path, *line, m))?,
                channel_mask: parse_mask(&rec[2]).map_err(|m| parse_err(path, *line, m))?,
                features,
                label: None,
            })
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[(String, FlareClass)]) -> Result<()> {
    write_rows(
        path,
        &["id".into(), "label".into()],
        labels.iter().map(|(id, c)| vec![id.clone(), c.to_string()]),
    )
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, FlareClass)>> {
    let (header, rows) = read_records(path)?;
    expect_header(path, &header, &["id", "label"])?;
    rows.iter()
        .map(|(line, rec)| {
            Ok((
                rec[0].trim().to_string(),
                class_field(path, *line, &rec[1])?,
            ))
        })
        .collect()
}

/// A model output: either a hard class or a probability distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Hard(FlareClass),
    Probabilistic(ProbDist),
}

impl Prediction {
    pub fn class(&self) -> FlareClass {
        match self {
            Prediction::Hard(c) => *c,
            Prediction::Probabilistic(p) => p.argmax(),
        }
    }
}

const PROB_HEADER: [&str; 5] = ["id", "p_O", "p_C", "p_M", "p_X"];

pub fn write_predictions(path: &Path, preds: &[(String, Prediction)]) -> Result<()> {
    let probabilistic = matches!(preds.first(), Some((_, Prediction::Probabilistic(_))));
    let header: Vec<String> = if probabilistic {
        PROB_HEADER.iter().map(|s| s.to_string()).collect()
    } else {
        vec!["id".into(), "class".into()]
    };
    let rows = preds
        .iter()
        .map(|(id, p)| match (probabilistic, p) {
            (true, Prediction::Probabilistic(d)) => {
                let mut row = vec![id.clone()];
                row.extend(d.as_array().iter().map(f64::to_string));
                Ok(row)
            }
            (false, Prediction::Hard(c)) => Ok(vec![id.clone(), c.to_string()]),
            _ => Err(FlareError::InvalidConfig(
                "cannot mix hard and probabilistic predictions in one file".into(),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &header, rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<(String, Prediction)>> {
    let (header, rows) = read_records(path)?;
    let probabilistic = header.len() == PROB_HEADER.len();
    if probabilistic {
        expect_header(path, &header, &PROB_HEADER)?;
    } else {
        expect_header(path, &header, &["id", "class"])?;
    }
    rows.iter()
        .map(|(line, rec)| {
            let id = rec[0].trim().to_string();
            if !probabilistic {
                return Ok((id, Prediction::Hard(class_field(path, *line, &rec[1])?)));
            }
            let mut p = [0.0; 4];
            for (k, v) in p.iter_mut().enumerate() {
                *v = rec[k + 1].trim().parse().map_err(|_| {
                    parse_err(
                        path,
                        *line,
                        format!("invalid probability {:?}", &rec[k + 1]),
                    )
                })?;
            }
            let dist = ProbDist::new(p).map_err(|e| parse_err(path, *line, e.to_string()))?;
            Ok((id, Prediction::Probabilistic(dist)))
        })
        .collect()
}
