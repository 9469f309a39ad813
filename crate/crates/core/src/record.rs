//! On-disk formats: CSI record files, ground-truth sidecars and per-window
//! result streams.
//!
//! A record file is comma-separated text with a `#` header:
//!
//! ```text
//! # csi-record v1
//! # sample_rate=100
//! # antennas=2
//! # subcarriers=30
//! # carrier_frequency=5240000000
//! timestamp_s,antenna,subcarrier,re,im
//! 0,1,1,0.8123,-0.1177
//! ```
//!
//! Antenna and subcarrier indices are 1-based. Floats are written in shortest
//! round-trip form, so reading a written file reproduces the frames bit for bit.
//! Files starting with the gzip magic bytes are decompressed transparently.

use crate::csi::{ComplexSample, CsiError, CsiFrame};
use crate::rate::{RateError, WindowEstimate};
use crate::sim::{GroundTruth, Simulation};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "csi-record";
const COLUMNS: &str = "timestamp_s,antenna,subcarrier,re,im";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("incomplete frame at t={timestamp} starting on line {line}: {found} of {expected} rows")]
    IncompleteFrame {
        line: usize,
        timestamp: f64,
        found: usize,
        expected: usize,
    },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: CsiError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RecordError {
    /// Line number of the offending row, when the error comes from parsing.
    pub fn line(&self) -> Option<usize> {
        match self {
            RecordError::Parse { line, .. } | RecordError::IncompleteFrame { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> RecordError {
    RecordError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub version: u32,
    pub sample_rate: f64,
    pub antennas: usize,
    pub subcarriers: usize,
    pub carrier_frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiRecord {
    pub header: RecordHeader,
    pub frames: Vec<CsiFrame>,
}

pub fn write_record<W: Write>(mut out: W, header: &RecordHeader, frames: &[CsiFrame]) -> Result<(), RecordError> {
    writeln!(out, "# {MAGIC} v{}", header.version)?;
    writeln!(out, "# sample_rate={}", header.sample_rate)?;
    writeln!(out, "# antennas={}", header.antennas)?;
    writeln!(out, "# subcarriers={}", header.subcarriers)?;
    writeln!(out, "# carrier_frequency={}", header.carrier_frequency)?;
    writeln!(out, "{COLUMNS}")?;
    for (index, frame) in frames.iter().enumerate() {
        if frame.antennas() != header.antennas || frame.subcarriers() != header.subcarriers {
            return Err(RecordError::Frame {
                index,
                source: CsiError::ShapeMismatch {
                    expected_antennas: header.antennas,
                    expected_subcarriers: header.subcarriers,
                    antennas: frame.antennas(),
                    subcarriers: frame.subcarriers(),
                },
            });
        }
        for a in 0..frame.antennas() {
            for s in 0..frame.subcarriers() {
                let v = frame.get(a, s);
                writeln!(out, "{},{},{},{},{}", frame.timestamp, a + 1, s + 1, v.re, v.im)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes to `path`, gzip-compressed when the name ends in `.gz`.
pub fn write_record_file(path: &Path, header: &RecordHeader, frames: &[CsiFrame]) -> Result<(), RecordError> {
    let file = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        write_record(&mut enc, header, frames)?;
        enc.finish()?.flush()?;
        Ok(())
    } else {
        write_record(file, header, frames)
    }
}

pub fn read_record_file(path: &Path) -> Result<CsiRecord, RecordError> {
    read_record(File::open(path)?)
}

/// Parses a record, decompressing first if the stream is gzip.
pub fn read_record<R: Read>(input: R) -> Result<CsiRecord, RecordError> {
    let mut buffered = BufReader::new(input);
    let gz = buffered.fill_buf()?.starts_with(&GZIP_MAGIC);
    if gz {
        parse_record(BufReader::new(MultiGzDecoder::new(buffered)))
    } else {
        parse_record(buffered)
    }
}

fn parse_header(lines: &mut impl Iterator<Item = (usize, io::Result<String>)>) -> Result<RecordHeader, RecordError> {
    let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut version = None;
    loop {
        let Some((n, line)) = lines.next() else {
            return Err(parse_err(0, "missing column header"));
        };
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(body) = line.strip_prefix('#') {
            let body = body.trim();
            if let Some(v) = body.strip_prefix(MAGIC) {
                let v = v
                    .trim()
                    .strip_prefix('v')
                    .ok_or_else(|| parse_err(n, "bad version tag"))?;
                version = Some(
                    v.parse::<u32>()
                        .map_err(|_| parse_err(n, format!("bad version {v:?}")))?,
                );
            } else if let Some((k, v)) = body.split_once('=') {
                fields.insert(k.trim().to_string(), (n, v.trim().to_string()));
            }
            continue;
        }
        if line != COLUMNS {
            return Err(parse_err(n, format!("expected column header {COLUMNS:?}")));
        }
        break;
    }
    let version = version.ok_or_else(|| parse_err(1, format!("missing '# {MAGIC} v{FORMAT_VERSION}' line")))?;
    if version != FORMAT_VERSION {
        return Err(parse_err(1, format!("unsupported version {version}")));
    }
    fn get<T: std::str::FromStr>(fields: &BTreeMap<String, (usize, String)>, key: &str) -> Result<T, RecordError> {
        let (n, v) = fields
            .get(key)
            .ok_or_else(|| parse_err(0, format!("header missing {key}")))?;
        v.parse().map_err(|_| parse_err(*n, format!("bad {key} {v:?}")))
    }
    let header = RecordHeader {
        version,
        sample_rate: get(&fields, "sample_rate")?,
        antennas: get(&fields, "antennas")?,
        subcarriers: get(&fields, "subcarriers")?,
        carrier_frequency: get(&fields, "carrier_frequency")?,
    };
    if !(header.sample_rate > 0.0) || header.antennas == 0 || header.subcarriers == 0 {
        return Err(parse_err(0, "header values must be positive"));
    }
    Ok(header)
}

struct PendingFrame {
    timestamp: f64,
    first_line: usize,
    values: Vec<Option<ComplexSample>>,
    filled: usize,
}

fn parse_record<R: BufRead>(input: R) -> Result<CsiRecord, RecordError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = parse_header(&mut lines)?;
    let (na, ns) = (header.antennas, header.subcarriers);
    let per_frame = na * ns;
    let mut frames = Vec::new();
    let mut pending: Option<PendingFrame> = None;

    let finish = |p: PendingFrame, frames: &mut Vec<CsiFrame>| -> Result<(), RecordError> {
        if p.filled != per_frame {
            return Err(RecordError::IncompleteFrame {
                line: p.first_line,
                timestamp: p.timestamp,
                found: p.filled,
                expected: per_frame,
            });
        }
        let values = p.values.into_iter().map(|v| v.expect("filled")).collect();
        let index = frames.len();
        let frame =
            CsiFrame::new(p.timestamp, na, ns, values).map_err(|source| RecordError::Frame { index, source })?;
        frames.push(frame);
        Ok(())
    };

    for (n, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(parse_err(n, format!("expected 5 columns, found {}", cols.len())));
        }
        let num = |i: usize, what: &str| -> Result<f64, RecordError> {
            let v: f64 = cols[i]
                .parse()
                .map_err(|_| parse_err(n, format!("bad {what} {:?}", cols[i])))?;
            if !v.is_finite() {
                return Err(parse_err(n, format!("non-finite {what}")));
            }
            Ok(v)
        };
        let index = |i: usize, what: &str, max: usize| -> Result<usize, RecordError> {
            let v: usize = cols[i]
                .parse()
                .map_err(|_| parse_err(n, format!("bad {what} {:?}", cols[i])))?;
            if v == 0 || v > max {
                return Err(parse_err(n, format!("{what} {v} outside 1..={max}")));
            }
            Ok(v - 1)
        };
        let t = num(0, "timestamp")?;
        let a = index(1, "antenna", na)?;
        let s = index(2, "subcarrier", ns)?;
        let v = ComplexSample::new(num(3, "re")?, num(4, "im")?);

        if let Some(p) = &pending {
            if t != p.timestamp {
                if t < p.timestamp {
                    return Err(parse_err(n, format!("timestamp {t} before {}", p.timestamp)));
                }
                finish(pending.take().expect("pending"), &mut frames)?;
            }
        }
        let p = pending.get_or_insert_with(|| PendingFrame {
            timestamp: t,
            first_line: n,
            values: vec![None; per_frame],
            filled: 0,
        });
        let slot = &mut p.values[a * ns + s];
        if slot.is_some() {
            return Err(parse_err(
                n,
                format!("duplicate row for antenna {} subcarrier {}", a + 1, s + 1),
            ));
        }
        *slot = Some(v);
        p.filled += 1;
    }
    if let Some(p) = pending {
        finish(p, &mut frames)?;
    }
    Ok(CsiRecord { header, frames })
}

// ---------------------------------------------------------------------------
// Ground truth sidecar

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub seed: u64,
    pub target_present: bool,
    pub duration_s: f64,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

impl TruthSidecar {
    pub fn new(seed: u64, sim: &Simulation) -> Self {
        Self {
            seed,
            target_present: sim.truth.rate_bpm.is_some(),
            duration_s: sim.frames.len() as f64 / sim.truth.sample_rate,
            truth: sim.truth.clone(),
        }
    }
}

/// `<record>.truth.json` next to the record file.
pub fn sidecar_path(record: &Path) -> PathBuf {
    let mut name = record.as_os_str().to_owned();
    name.push(".truth.json");
    PathBuf::from(name)
}

pub fn write_sidecar(path: &Path, sidecar: &TruthSidecar) -> Result<(), RecordError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, sidecar)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<TruthSidecar, RecordError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

// ---------------------------------------------------------------------------
// Result stream

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Ok,
    NonStationary,
    NoPeak,
    Error,
}

/// One line of the result stream. Subcarrier indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowRecord {
    pub window_start: f64,
    pub window_end: f64,
    pub status: WindowStatus,
    pub rate_bpm: Option<f64>,
    pub first_peak_lag: Option<usize>,
    pub in_band: Option<bool>,
    pub subcarriers: Vec<usize>,
    pub bnr: BTreeMap<usize, f64>,
    pub stationary: bool,
    pub message: Option<String>,
}

impl From<&WindowEstimate> for WindowRecord {
    fn from(w: &WindowEstimate) -> Self {
        let mut rec = WindowRecord {
            window_start: w.start_time,
            window_end: w.end_time,
            status: WindowStatus::Ok,
            rate_bpm: None,
            first_peak_lag: None,
            in_band: None,
            subcarriers: Vec::new(),
            bnr: BTreeMap::new(),
            stationary: true,
            message: None,
        };
        match &w.outcome {
            Ok(r) => {
                rec.rate_bpm = Some(r.rate_bpm);
                rec.first_peak_lag = Some(r.first_peak_lag);
                rec.in_band = Some(r.in_band);
                rec.subcarriers = r.contributing_subcarriers.iter().map(|s| s + 1).collect();
                rec.bnr = r.per_subcarrier_bnr.iter().map(|(&s, &b)| (s + 1, b)).collect();
                rec.stationary = r.stationary;
            }
            Err(RateError::NonStationary) => {
                rec.status = WindowStatus::NonStationary;
                rec.stationary = false;
            }
            Err(RateError::NoPeak) => rec.status = WindowStatus::NoPeak,
            Err(e) => {
                rec.status = WindowStatus::Error;
                rec.message = Some(e.to_string());
            }
        }
        rec
    }
}

pub fn write_results<W: Write>(mut out: W, windows: &[WindowEstimate]) -> Result<(), RecordError> {
    for w in windows {
        serde_json::to_writer(&mut out, &WindowRecord::from(w))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Validates a result stream line by line; returns the parsed records.
///
/// Every line must be a JSON object with exactly the [`WindowRecord`] fields,
/// windows must be ordered by start time, and `ok` records must carry a rate.
pub fn check_results<R: BufRead>(input: R) -> Result<Vec<WindowRecord>, RecordError> {
    let mut out: Vec<WindowRecord> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WindowRecord = serde_json::from_str(&line).map_err(|e| parse_err(n, e.to_string()))?;
        if !(rec.window_end >= rec.window_start) {
            return Err(parse_err(n, "window_end before window_start"));
        }
        if let Some(prev) = out.last() {
            if rec.window_start < prev.window_start {
                return Err(parse_err(n, "windows out of order"));
            }
        }
        match rec.status {
            WindowStatus::Ok => {
                let (Some(rate), Some(lag)) = (rec.rate_bpm, rec.first_peak_lag) else {
                    return Err(parse_err(n, "ok record without rate"));
                };
                if !(rate.is_finite() && rate > 0.0) || lag == 0 || rec.subcarriers.is_empty() {
                    return Err(parse_err(n, "ok record with invalid rate, lag or subcarrier set"));
                }
                if rec.subcarriers.iter().any(|s| !rec.bnr.contains_key(s)) {
                    return Err(parse_err(n, "contributing subcarrier without BNR"));
                }
            }
            WindowStatus::NonStationary => {
                if rec.stationary || rec.rate_bpm.is_some() {
                    return Err(parse_err(n, "non_stationary record must be unlabeled and rate-free"));
                }
            }
            WindowStatus::NoPeak | WindowStatus::Error => {
                if rec.rate_bpm.is_some() {
                    return Err(parse_err(n, "failed window carries a rate"));
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}
