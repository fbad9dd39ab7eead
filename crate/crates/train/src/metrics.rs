use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::io_err;
use crate::{LossRecord, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MetricRow {
    Loss {
        step: u64,
        #[serde(flatten)]
        record: LossRecord,
    },
    Eval {
        step: u64,
        direction: String,
        bleu: f64,
    },
}

/// Ordered metrics stream, kept in memory and optionally mirrored to a
/// JSON-lines file.
#[derive(Default)]
pub struct Metrics {
    rows: Vec<MetricRow>,
    file: Option<(PathBuf, BufWriter<File>)>,
}

impl Metrics {
    pub fn memory() -> Self {
        Self::default()
    }

    /// Appends to `path`, creating it if needed.
    pub fn to_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::options()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            rows: Vec::new(),
            file: Some((path.into(), BufWriter::new(f))),
        })
    }

    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        if let Some((path, w)) = &mut self.file {
            let line = serde_json::to_string(&row).expect("metric rows always serialize");
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn loss(&mut self, step: u64, record: LossRecord) -> Result<()> {
        self.push(MetricRow::Loss { step, record })
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn losses(&self) -> impl DoubleEndedIterator<Item = (u64, &LossRecord)> {
        self.rows.iter().filter_map(|r| match r {
            MetricRow::Loss { step, record } => Some((*step, record)),
            _ => None,
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some((path, w)) = &mut self.file {
            w.flush().map_err(io_err(path))?;
        }
        Ok(())
    }
}

impl Drop for Metrics {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
