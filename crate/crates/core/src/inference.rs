//! Scoring clean windows with a trained network.

use ndarray::s;

use crate::data::{assemble_point_scores, Aggregation, TimeSeries, WindowIndex};
use crate::error::{Error, Result};
use crate::model::JuReNet;
use crate::numerics::Batch3;
use crate::scoring::{score_window, ScoreStats, ScoreWeights};

/// Raw structural score of every window in `batch`, processed `chunk` windows
/// at a time.
pub fn score_windows(
    net: &JuReNet,
    batch: &Batch3,
    weights: &ScoreWeights,
    chunk: usize,
) -> Result<Vec<f64>> {
    let chunk = chunk.max(1);
    let (b, _, _) = batch.dims();
    let mut out = Vec::with_capacity(b);
    let mut start = 0;
    while start < b {
        let end = (start + chunk).min(b);
        let part = Batch3::new(batch.array().slice(s![start..end, .., ..]).to_owned());
        let repair = net.repair(&part)?;
        for i in 0..end - start {
            let score = score_window(&part.window(i), &repair.window(i), weights)?;
            if !score.is_finite() {
                return Err(Error::Numeric(format!(
                    "window {} scored {score}",
                    start + i
                )));
            }
            out.push(score);
        }
        start = end;
    }
    Ok(out)
}

/// Raw window scores of a series, streamed in batches.
pub fn score_series_windows(
    net: &JuReNet,
    series: &TimeSeries,
    index: &WindowIndex,
    weights: &ScoreWeights,
    chunk: usize,
) -> Result<Vec<f64>> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(index.len());
    let mut start = 0;
    while start < index.len() {
        let end = (start + chunk).min(index.len());
        let batch = index.gather_range(series, start..end);
        out.extend(score_windows(net, &batch, weights, chunk)?);
        start = end;
    }
    Ok(out)
}

/// Median/IQR of the raw scores of every `stride`-spaced window of a
/// (normalized) training series.
pub fn fit_score_stats(
    net: &JuReNet,
    series: &TimeSeries,
    window: usize,
    stride: usize,
    weights: &ScoreWeights,
    chunk: usize,
) -> Result<ScoreStats> {
    let index = WindowIndex::new(series.len(), window, stride)?;
    let all = index.gather_range(series, 0..index.len());
    ScoreStats::from_scores(&score_windows(net, &all, weights, chunk)?)
}

/// Per-timestep robust z-scores for an already normalized series.
pub fn point_scores(
    net: &JuReNet,
    series: &TimeSeries,
    window: usize,
    stride: usize,
    weights: &ScoreWeights,
    stats: &ScoreStats,
    aggregation: Aggregation,
) -> Result<Vec<f64>> {
    if series.channels() != net.dims().channels {
        return Err(Error::Config(format!(
            "series has {} channels but the model was trained on {}",
            series.channels(),
            net.dims().channels
        )));
    }
    let index = WindowIndex::new(series.len(), window, stride)?;
    let raw = score_series_windows(net, series, &index, weights, 256)?;
    let z: Vec<f64> = raw.iter().map(|&r| stats.normalize(r)).collect();
    assemble_point_scores(&z, &index, series.len(), aggregation)
}
