use std::ops::Range;

use ndarray::s;

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::numerics::Batch3;

/// Start offsets of the sliding windows over a series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowIndex {
    pub window: usize,
    pub stride: usize,
    pub starts: Vec<usize>,
}

impl WindowIndex {
    pub fn new(len: usize, window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "window ({window}) and stride ({stride}) must be positive"
            )));
        }
        if len < window {
            return Err(Error::Config(format!(
                "series length {len} is shorter than window length {window}"
            )));
        }
        let starts = (0..=len - window).step_by(stride).collect();
        Ok(WindowIndex {
            window,
            stride,
            starts,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Copies the windows at `positions` (indices into `starts`) into a batch.
    pub fn gather(
        &self,
        series: &TimeSeries,
        positions: impl IntoIterator<Item = usize>,
    ) -> Batch3 {
        let c = series.channels();
        let w = self.window;
        let vals = series.values();
        let mut data = Vec::new();
        let mut n = 0;
        for p in positions {
            let start = self.starts[p];
            let slice = vals.slice(s![start..start + w, ..]);
            data.extend(slice.iter().copied());
            n += 1;
        }
        Batch3::from_vec(n, w, c, data).expect("window gather sizes are consistent")
    }

    pub fn gather_range(&self, series: &TimeSeries, range: Range<usize>) -> Batch3 {
        self.gather(series, range)
    }
}

/// Every window of length `window` at the given stride, materialized.
pub fn windows(series: &TimeSeries, window: usize, stride: usize) -> Result<(Batch3, WindowIndex)> {
    let index = WindowIndex::new(series.len(), window, stride)?;
    let batch = index.gather_range(series, 0..index.len());
    Ok((batch, index))
}

/// How overlapping window scores are combined at each timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::Config(format!(
                "unknown aggregation {other:?} (expected mean or max)"
            ))),
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        })
    }
}

/// Spreads per-window scores back onto timesteps.
///
/// Each covered timestep gets the mean (or max) of the windows covering it.
/// Uncovered timesteps copy the nearest covered one, preferring the earlier
/// side on ties.
pub fn assemble_point_scores(
    window_scores: &[f64],
    index: &WindowIndex,
    len: usize,
    aggregation: Aggregation,
) -> Result<Vec<f64>> {
    if index.is_empty() || window_scores.is_empty() {
        return Err(Error::Config("no windows to assemble".into()));
    }
    if window_scores.len() != index.len() {
        return Err(Error::Dimension(format!(
            "{} window scores for {} windows",
            window_scores.len(),
            index.len()
        )));
    }
    let w = index.window;
    if let Some(&last) = index.starts.last() {
        if last + w > len {
            return Err(Error::Config(format!(
                "window at {last} of length {w} exceeds series length {len}"
            )));
        }
    }

    let mut out = vec![f64::NAN; len];
    match aggregation {
        Aggregation::Mean => {
            // Accumulate offsets from the first covering score so that equal
            // scores average back to themselves exactly.
            let mut anchor = vec![f64::NAN; len];
            let mut offset = vec![0.0; len];
            let mut count = vec![0usize; len];
            for (&start, &score) in index.starts.iter().zip(window_scores) {
                for t in start..start + w {
                    if count[t] == 0 {
                        anchor[t] = score;
                    } else {
                        offset[t] += score - anchor[t];
                    }
                    count[t] += 1;
                }
            }
            for t in 0..len {
                if count[t] > 0 {
                    out[t] = anchor[t] + offset[t] / count[t] as f64;
                }
            }
        }
        Aggregation::Max => {
            for (&start, &score) in index.starts.iter().zip(window_scores) {
                for o in &mut out[start..start + w] {
                    if o.is_nan() || score > *o {
                        *o = score;
                    }
                }
            }
        }
    }
    fill_uncovered(&mut out);
    Ok(out)
}

fn fill_uncovered(out: &mut [f64]) {
    let n = out.len();
    let mut prev = vec![None; n];
    let mut last = None;
    for t in 0..n {
        if !out[t].is_nan() {
            last = Some(t);
        }
        prev[t] = last;
    }
    let mut next = None;
    for t in (0..n).rev() {
        if !out[t].is_nan() {
            next = Some(t);
            continue;
        }
        let nearest = match (prev[t], next) {
            (Some(p), Some(q)) => {
                if t - p <= q - t {
                    p
                } else {
                    q
                }
            }
            (Some(p), None) => p,
            (None, Some(q)) => q,
            (None, None) => return,
        };
        out[t] = out[nearest];
    }
}
