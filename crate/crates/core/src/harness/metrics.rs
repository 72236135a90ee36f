use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{AlgoKind, EpisodeRecord};

pub const METRICS_COLUMNS: [&str; 6] = ["env_step", "episode_index", "episode_logs", "episode_length", "algo", "seed"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: u64,
    pub episode_index: u64,
    pub episode_logs: usize,
    pub episode_length: usize,
    pub algo: String,
    pub seed: u64,
}

impl MetricsRow {
    pub fn from_record(record: &EpisodeRecord, algo: AlgoKind, seed: u64) -> Self {
        Self {
            env_step: record.env_step,
            episode_index: record.episode_index,
            episode_logs: record.logs,
            episode_length: record.length,
            algo: algo.to_string(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub max_logs: usize,
    pub mean_logs_per_episode: f64,
    pub n_episodes: usize,
    /// Metrics file the summary was computed from, if any.
    pub curve: Option<PathBuf>,
}

pub fn compute_summary(rows: &[MetricsRow]) -> Result<RunSummary, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Summary("no episodes to summarize".into()));
    }
    let total: usize = rows.iter().map(|r| r.episode_logs).sum();
    Ok(RunSummary {
        max_logs: rows.iter().map(|r| r.episode_logs).max().unwrap_or(0),
        mean_logs_per_episode: total as f64 / rows.len() as f64,
        n_episodes: rows.len(),
        curve: None,
    })
}

/// CSV with a header row, written even when `rows` is empty.
pub fn write_csv<W: Write>(rows: &[MetricsRow], writer: W) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    out.write_record(METRICS_COLUMNS)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<MetricsRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

pub fn export_metrics(rows: &[MetricsRow], format: MetricsFormat, path: &Path) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = BufWriter::new(File::create(path).map_err(io)?);
    match format {
        MetricsFormat::Csv => write_csv(rows, &mut file).map_err(|e| HarnessError::Csv {
            path: path.display().to_string(),
            source: e,
        })?,
        MetricsFormat::Json => {
            serde_json::to_writer_pretty(&mut file, rows).map_err(|e| HarnessError::Json {
                path: path.display().to_string(),
                source: e,
            })?;
            file.write_all(b"\n").map_err(io)?;
        }
    }
    file.flush().map_err(io)
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let file = File::open(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file).map_err(|e| HarnessError::Csv {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64, logs: usize) -> MetricsRow {
        MetricsRow {
            env_step: 100 * (i + 1),
            episode_index: i,
            episode_logs: logs,
            episode_length: 100,
            algo: "sqil".into(),
            seed: 3,
        }
    }

    #[test]
    fn summary_arithmetic() {
        let s = compute_summary(&[row(0, 1), row(1, 4), row(2, 2)]).unwrap();
        assert_eq!(s.max_logs, 4);
        assert!((s.mean_logs_per_episode - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.n_episodes, 3);
        let s = compute_summary(&[row(0, 3)]).unwrap();
        assert_eq!((s.max_logs, s.mean_logs_per_episode), (3, 3.0));
        let s = compute_summary(&[row(0, 0), row(1, 0)]).unwrap();
        assert_eq!((s.max_logs, s.mean_logs_per_episode), (0, 0.0));
        assert!(compute_summary(&[]).is_err());
    }

    #[test]
    fn csv_golden_and_round_trip() {
        let rows = vec![row(0, 1), row(1, 4), row(2, 2)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let expected = "env_step,episode_index,episode_logs,episode_length,algo,seed\n\
                        100,0,1,100,sqil,3\n\
                        200,1,4,100,sqil,3\n\
                        300,2,2,100,sqil,3\n";
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), expected);
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn empty_csv_has_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "env_step,episode_index,episode_logs,episode_length,algo,seed\n"
        );
    }

    #[test]
    fn json_export_uses_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        export_metrics(&[row(0, 2)], MetricsFormat::Json, &path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let obj = v[0].as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut want = METRICS_COLUMNS.to_vec();
        want.sort_unstable();
        assert_eq!(keys, want);
        assert_eq!(obj["episode_logs"], 2);
    }
}
