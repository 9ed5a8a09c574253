//! Input readers and output writers.
//!
//! tct-binary layout: the magic bytes `TCT1`, three little-endian `u64`
//! dimensions `(trials, channels, times)`, then `trials * channels * times`
//! little-endian `f64` samples in trial, channel, time order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;

use super::config::InputFormat;
use crate::causality::CausalityTrace;
use crate::ensemble::TimeSeriesEnsemble;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TCT1";
const HEADER_LEN: usize = 4 + 3 * 8;

/// A loaded recording together with its channel names.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub ensemble: TimeSeriesEnsemble,
    pub channel_names: Vec<String>,
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn into_ensemble(path: &Path, data: Array3<f64>, sampling_rate: f64) -> Result<TimeSeriesEnsemble> {
    TimeSeriesEnsemble::new(data, sampling_rate).map_err(|e| format_error(path, e.to_string()))
}

/// Reads a recording. CSV files hold one continuous trial with a header of
/// channel names; tct channels are named `ch1`, `ch2`, ...
pub fn read_recording(path: &Path, format: InputFormat, sampling_rate: f64) -> Result<Recording> {
    match format {
        InputFormat::Csv => read_csv(path, sampling_rate),
        InputFormat::Tct => {
            let ensemble = read_tct(path, sampling_rate)?;
            let channel_names = (1..=ensemble.n_channels()).map(|i| format!("ch{i}")).collect();
            Ok(Recording {
                ensemble,
                channel_names,
            })
        }
    }
}

/// Reads a recording with a sampling rate of 1.
pub fn read_timeseries(path: &Path, format: InputFormat) -> Result<TimeSeriesEnsemble> {
    Ok(read_recording(path, format, 1.0)?.ensemble)
}

fn read_csv(path: &Path, sampling_rate: f64) -> Result<Recording> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => format_error(path, format!("{other:?}")),
        })?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| format_error(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(format_error(path, "header must name every column"));
    }
    let mut channels = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_error(path, e.to_string()))?;
        for (ch, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_error(path, format!("row {}, column {:?}: {field:?} is not a number", row + 2, names[ch])))?;
            if !v.is_finite() {
                return Err(format_error(path, format!("row {}, column {:?}: non-finite value", row + 2, names[ch])));
            }
            channels[ch].push(v);
        }
    }
    let t = channels[0].len();
    let flat: Vec<f64> = channels.into_iter().flatten().collect();
    let data = Array3::from_shape_vec((1, names.len(), t), flat).map_err(|e| format_error(path, e.to_string()))?;
    Ok(Recording {
        ensemble: into_ensemble(path, data, sampling_rate)?,
        channel_names: names,
    })
}

fn read_tct(path: &Path, sampling_rate: f64) -> Result<TimeSeriesEnsemble> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_tct(&bytes, sampling_rate).map_err(|message| format_error(path, message))
}

fn decode_tct(bytes: &[u8], sampling_rate: f64) -> std::result::Result<TimeSeriesEnsemble, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err("missing TCT1 magic".into());
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().expect("8 bytes"));
    let (r, c, t) = (dim(0), dim(1), dim(2));
    let expected = r
        .checked_mul(c)
        .and_then(|n| n.checked_mul(t))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| format!("dimensions [{r}, {c}, {t}] overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(format!(
            "dimensions [{r}, {c}, {t}] need {expected} payload bytes, found {}",
            payload.len()
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let data = Array3::from_shape_vec((r as usize, c as usize, t as usize), values).map_err(|e| e.to_string())?;
    TimeSeriesEnsemble::new(data, sampling_rate).map_err(|e| e.to_string())
}

pub fn encode_tct(ensemble: &TimeSeriesEnsemble) -> Vec<u8> {
    let (r, c, t) = ensemble.data().dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * r * c * t);
    out.extend_from_slice(MAGIC);
    for d in [r, c, t] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in ensemble.data().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_tct(path: &Path, ensemble: &TimeSeriesEnsemble) -> Result<()> {
    std::fs::write(path, encode_tct(ensemble)).map_err(|e| Error::io(path, e))
}

/// Writes `time_index,time_seconds,value,boot_mean,boot_std`, leaving the
/// bootstrap columns empty when the trace has none. `time_seconds` is zero
/// at `alignment_index`.
pub fn write_trace_csv(path: &Path, trace: &CausalityTrace, alignment_index: usize, sampling_rate: f64) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "time_index,time_seconds,value,boot_mean,boot_std").map_err(io_err)?;
    for (j, (&t, &v)) in trace.times.iter().zip(&trace.values).enumerate() {
        let seconds = (t as f64 - alignment_index as f64) / sampling_rate;
        let boot = |col: &Option<Vec<f64>>| col.as_ref().map(|c| c[j].to_string()).unwrap_or_default();
        writeln!(
            w,
            "{t},{seconds},{v},{},{}",
            boot(&trace.boot_mean),
            boot(&trace.boot_std)
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Writes `trial,time` rows.
pub fn write_events_csv(path: &Path, events: &[crate::events::EventIndex]) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "trial,time").map_err(io_err)?;
    for e in events {
        writeln!(w, "{},{}", e.trial, e.time).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
