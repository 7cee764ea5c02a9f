use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,split,loss,metric,lr";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub split: String,
    pub loss: f64,
    /// Accuracy for node runs, MAE for molecule runs.
    pub metric: f64,
    pub lr: f64,
}

impl MetricRow {
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{},{}", self.step, self.split, self.loss, self.metric, self.lr)
    }
}

/// Metrics file; every record is flushed as it is written.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    /// Creates (truncating) the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path).map_err(|e| Error::io(path, e))?;
        let mut w = MetricsWriter { path: path.to_path_buf(), out: BufWriter::new(file) };
        w.line(METRICS_HEADER)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").and_then(|_| self.out.flush()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        self.line(&row.to_csv())
    }
}
