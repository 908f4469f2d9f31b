//! Per-episode metrics CSV.
//!
//! The first line is a schema marker (`#sisplan-metrics v1`), followed by the
//! header and one row per (run, episode). Empty cells mean "not available".

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::EpisodeMetrics;

pub const SCHEMA_LINE: &str = "#sisplan-metrics v1";

pub const HEADER: [&str; 10] = [
    "run_id",
    "episode",
    "return",
    "mean_step_time_ms",
    "mean_n_gs",
    "mean_n_ials",
    "mean_lhat",
    "train_loss",
    "buffer_size",
    "failed",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: usize,
    pub episode: usize,
    #[serde(rename = "return")]
    pub total_return: f64,
    pub mean_step_time_ms: Option<f64>,
    pub mean_n_gs: Option<f64>,
    pub mean_n_ials: Option<f64>,
    pub mean_lhat: Option<f64>,
    pub train_loss: Option<f64>,
    pub buffer_size: usize,
    pub failed: bool,
}

impl MetricsRow {
    pub fn from_episode(run_id: usize, m: &EpisodeMetrics) -> Self {
        MetricsRow {
            run_id,
            episode: m.episode,
            total_return: m.total_return,
            mean_step_time_ms: m.mean_step_time_ms(),
            mean_n_gs: m.mean_n_gs(),
            mean_n_ials: m.mean_n_ials(),
            mean_lhat: m.mean_lhat(),
            train_loss: m.train_loss,
            buffer_size: m.buffer_size,
            failed: m.failed,
        }
    }

    pub fn without_timing(&self) -> Self {
        MetricsRow {
            mean_step_time_ms: None,
            ..self.clone()
        }
    }
}

pub fn to_csv_bytes(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(SCHEMA_LINE.as_bytes());
    out.push(b'\n');
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    super::io::write_atomic(path, &to_csv_bytes(rows)?)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim_end() != SCHEMA_LINE {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected schema line {SCHEMA_LINE:?}"),
        });
    }
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 2,
            reason: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
