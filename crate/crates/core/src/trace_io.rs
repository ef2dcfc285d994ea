//! Trace files.
//!
//! CSV: header `time_s,volts`, one row per sample.
//!
//! Binary: a 16-byte little-endian header followed by the samples as `f64`:
//!
//! | bytes  | field                 |
//! |--------|-----------------------|
//! | 0..3   | magic `NVT`           |
//! | 3      | version (`u8`)        |
//! | 4..12  | sample rate (`f64`)   |
//! | 12..16 | sample count (`u32`)  |
//!
//! Either format gets a sidecar `<file>.meta` of `key=value` lines holding
//! the seed and the scenario fingerprint.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::synthesis::TimeTrace;

pub const MAGIC: [u8; 3] = *b"NVT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Binary,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Binary => "bin",
        }
    }
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "binary" | "bin" => Ok(Self::Binary),
            other => Err(Error::Format(format!("unknown trace format `{other}`"))),
        }
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Writes the trace and its sidecar metadata.
pub fn write_trace(trace: &TimeTrace, path: &Path, format: TraceFormat) -> Result<()> {
    match format {
        TraceFormat::Csv => write_csv(trace, path)?,
        TraceFormat::Binary => write_binary(trace, path)?,
    }
    write_meta(trace, path, format)
}

fn write_csv(trace: &TimeTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["time_s", "volts"]).map_err(csv_error)?;
    for (i, v) in trace.samples.iter().enumerate() {
        w.write_record([trace.time(i).to_string(), v.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_binary(trace: &TimeTrace, path: &Path) -> Result<()> {
    let count = u32::try_from(trace.len()).map_err(|_| {
        Error::Format(format!(
            "{} samples do not fit the binary header",
            trace.len()
        ))
    })?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&trace.sample_rate.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for v in &trace.samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn write_meta(trace: &TimeTrace, path: &Path, format: TraceFormat) -> Result<()> {
    let text = format!(
        "format={}\nsample_rate={}\nlength={}\nseed={}\nfingerprint={}\n",
        format.extension(),
        trace.sample_rate,
        trace.len(),
        trace.seed,
        trace.fingerprint
    );
    std::fs::write(meta_path(path), text)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Reads a trace, detecting the format from the magic bytes. Seed and
/// fingerprint come from the sidecar when present (otherwise 0 and empty).
pub fn read_trace(path: &Path) -> Result<TimeTrace> {
    let mut head = [0u8; 3];
    let n = File::open(path)?.read(&mut head)?;
    let mut trace = if n == 3 && head == MAGIC {
        read_binary(path)?
    } else {
        read_csv(path)?
    };
    if let Ok(text) = std::fs::read_to_string(meta_path(path)) {
        for line in text.lines() {
            match line.split_once('=') {
                Some(("seed", v)) => {
                    trace.seed = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad seed `{v}`")))?
                }
                Some(("fingerprint", v)) => trace.fingerprint = v.trim().to_string(),
                _ => {}
            }
        }
    }
    Ok(trace)
}

pub fn read_binary(path: &Path) -> Result<TimeTrace> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file shorter than the 16-byte header".into()))?;
    if header[..3] != MAGIC {
        return Err(Error::Format("bad magic, not a trace file".into()));
    }
    if header[3] != VERSION {
        return Err(Error::Format(format!(
            "unsupported trace version {}",
            header[3]
        )));
    }
    let sample_rate = f64::from_le_bytes(header[4..12].try_into().unwrap());
    let count = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::Format(format!("invalid sample rate {sample_rate}")));
    }
    let mut bytes = Vec::with_capacity(count * 8);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "header declares {count} samples, file holds {} bytes of data",
            bytes.len()
        )));
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    finite(&samples)?;
    Ok(TimeTrace {
        sample_rate,
        samples,
        seed: 0,
        fingerprint: String::new(),
    })
}

pub fn read_csv(path: &Path) -> Result<TimeTrace> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "volts" {
        return Err(Error::Format("expected CSV header `time_s,volts`".into()));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_error)?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number `{s}`")))
        };
        times.push(parse(&row[0])?);
        samples.push(parse(&row[1])?);
    }
    if times.len() < 2 {
        return Err(Error::Format(
            "need at least two samples to infer the sample rate".into(),
        ));
    }
    finite(&samples)?;
    let span = times[times.len() - 1] - times[0];
    let sample_rate = (times.len() - 1) as f64 / span;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::Format("time column is not increasing".into()));
    }
    Ok(TimeTrace {
        sample_rate,
        samples,
        seed: 0,
        fingerprint: String::new(),
    })
}

fn finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Format(format!("sample {i} is not finite"))),
        None => Ok(()),
    }
}
