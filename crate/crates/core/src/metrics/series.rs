use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum SeriesError {
    #[error("{path}: sample {index} has ts_ms {ts} not after the previous {prev}")]
    NonMonotonic {
        path: PathBuf,
        index: usize,
        ts: u64,
        prev: u64,
    },
    #[error("{path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl SeriesError {
    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => SeriesError::Io {
                path: path.to_path_buf(),
                source,
            },
            kind => SeriesError::Csv {
                path: path.to_path_buf(),
                line,
                message: format!("{kind:?}"),
            },
        }
    }
}

/// A CSV row with a timestamp column.
pub trait Sample: Serialize + DeserializeOwned {
    fn ts_ms(&self) -> u64;
}

/// Timestamped rows for one metric at one tap.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries<R> {
    pub tap: String,
    pub metric: String,
    pub rows: Vec<R>,
}

pub(crate) fn check_monotonic<R: Sample>(path: &Path, rows: &[R]) -> Result<(), SeriesError> {
    for (index, w) in rows.windows(2).enumerate() {
        if w[1].ts_ms() <= w[0].ts_ms() {
            return Err(SeriesError::NonMonotonic {
                path: path.to_path_buf(),
                index: index + 1,
                ts: w[1].ts_ms(),
                prev: w[0].ts_ms(),
            });
        }
    }
    Ok(())
}

/// Writes `series` as CSV with a header row, rejecting timestamps that do
/// not strictly increase.
pub fn write_series<R: Sample>(series: &MetricSeries<R>, path: &Path) -> Result<(), SeriesError> {
    check_monotonic(path, &series.rows)?;
    let file = File::create(path).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in &series.rows {
        w.serialize(r).map_err(|e| SeriesError::csv(path, e))?;
    }
    w.flush().map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses every row of a CSV file with a header. Errors carry the 1-based
/// line number. Timestamp order is not checked.
pub fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, SeriesError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SeriesError::csv(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<R>, _>>()
        .map_err(|e| SeriesError::csv(path, e))
}

/// Reads a series file, rejecting timestamps that do not strictly increase.
pub fn read_series<R: Sample>(path: &Path) -> Result<Vec<R>, SeriesError> {
    let rows = read_rows(path)?;
    check_monotonic(path, &rows)?;
    Ok(rows)
}
