//! Series ingestion, normalization, windowing, and synthetic generators.

mod csv_io;
mod normalize;
mod synthetic;
mod windows;

use ndarray::Array2;

pub use csv_io::{load_csv, read_scores_csv, write_csv, write_scores_csv, CsvOptions, LabelColumn};
pub use normalize::{apply_normalize, fit_normalize, NormStats};
pub use synthetic::{generate_synthetic, AnomalyKind, SyntheticSpec};
pub use windows::{assemble_point_scores, windows, Aggregation, WindowIndex};

use crate::error::{Error, Result};

/// A `T × C` multivariate series with optional per-timestep binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub name: String,
    values: Array2<f64>,
    labels: Option<Vec<u8>>,
}

impl TimeSeries {
    pub fn new(
        name: impl Into<String>,
        values: Array2<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != values.nrows() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} timesteps",
                    l.len(),
                    values.nrows()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::Config("labels must be 0 or 1".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("series contains non-finite values".into()));
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(TimeSeries {
            name: name.into(),
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<u8>>) -> Result<Self> {
        let v = std::mem::take(&mut self.values);
        TimeSeries::new(self.name, v, labels)
    }

    /// Contiguous labeled spans as inclusive `(start, end)` pairs.
    pub fn anomaly_spans(&self) -> Vec<(usize, usize)> {
        self.labels.as_deref().map(label_spans).unwrap_or_default()
    }
}

/// Maximal runs of 1s in a binary label vector, inclusive bounds.
pub fn label_spans(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l != 0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, labels.len() - 1));
    }
    spans
}
