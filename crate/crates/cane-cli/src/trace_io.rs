//! Trace files: UTF-8 text, one `<time_s> <capacity_kbps>` pair per line,
//! `#`-prefixed comment lines and blank lines ignored.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use cane_core::trace::BandwidthTrace;

#[derive(Debug)]
pub enum TraceFileError {
    Io(std::io::Error),
    /// 1-based line number of the unparsable line.
    MalformedLine(usize),
    /// 1-based line number where time failed to increase.
    NonMonotoneTime(usize),
    NonPositiveCapacity(usize),
    EmptyTrace,
}

impl fmt::Display for TraceFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceFileError::Io(e) => write!(f, "io error: {e}"),
            TraceFileError::MalformedLine(n) => write!(f, "line {n}: malformed sample"),
            TraceFileError::NonMonotoneTime(n) => {
                write!(f, "line {n}: time not strictly increasing")
            }
            TraceFileError::NonPositiveCapacity(n) => {
                write!(f, "line {n}: capacity must be positive")
            }
            TraceFileError::EmptyTrace => write!(f, "trace file has no samples"),
        }
    }
}

impl std::error::Error for TraceFileError {}

impl From<std::io::Error> for TraceFileError {
    fn from(e: std::io::Error) -> Self {
        TraceFileError::Io(e)
    }
}

/// Parses a two-column trace file; the trace is named after the file stem.
pub fn load_trace(path: &Path) -> Result<BandwidthTrace, TraceFileError> {
    let text = fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    parse_trace(name, &text)
}

pub fn parse_trace(name: &str, text: &str) -> Result<BandwidthTrace, TraceFileError> {
    let mut samples = Vec::new();
    let mut line_of_sample = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (t, c) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(c), None) => (t, c),
            _ => return Err(TraceFileError::MalformedLine(line_no)),
        };
        let t: f64 = t.parse().map_err(|_| TraceFileError::MalformedLine(line_no))?;
        let c: f64 = c.parse().map_err(|_| TraceFileError::MalformedLine(line_no))?;
        if !t.is_finite() || !c.is_finite() || t < 0.0 {
            return Err(TraceFileError::MalformedLine(line_no));
        }
        samples.push((t, c));
        line_of_sample.push(line_no);
    }
    BandwidthTrace::new(name, samples).map_err(|e| match e {
        cane_core::trace::TraceError::EmptyTrace => TraceFileError::EmptyTrace,
        cane_core::trace::TraceError::NonMonotoneTime(i) => {
            TraceFileError::NonMonotoneTime(line_of_sample[i - 1])
        }
        cane_core::trace::TraceError::NonPositiveCapacity(i) => {
            TraceFileError::NonPositiveCapacity(line_of_sample[i - 1])
        }
        cane_core::trace::TraceError::InvalidParams(_) => TraceFileError::EmptyTrace,
    })
}

/// Writes a trace in the two-column format.
pub fn save_trace(trace: &BandwidthTrace, path: &Path) -> Result<(), TraceFileError> {
    let mut out = String::new();
    for &(t, c) in &trace.samples {
        out.push_str(&format!("{} {}\n", fmt_f64(t), fmt_f64(c)));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Shortest round-trippable decimal form.
pub(crate) fn fmt_f64(v: f64) -> String {
    let mut buffer = ryu_like(v);
    if buffer.ends_with(".0") {
        buffer.truncate(buffer.len() - 2);
    }
    buffer
}

fn ryu_like(v: f64) -> String {
    // `{}` on f64 already prints the shortest representation that parses back
    format!("{v}")
}
