use super::TimeSeries;
use crate::error::{Error, Result};

/// Per-channel mean and population standard deviation of a training series.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Channels whose spread is below this (relative to their level) are treated
/// as constant.
const CONSTANT_TOLERANCE: f64 = 1e-12;

impl NormStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// `true` for channels that are passed through centered but unscaled.
    pub fn constant_channels(&self) -> Vec<bool> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| is_constant(*m, *s))
            .collect()
    }
}

fn is_constant(mean: f64, std: f64) -> bool {
    std <= CONSTANT_TOLERANCE * mean.abs().max(1.0)
}

pub fn fit_normalize(train: &TimeSeries) -> Result<NormStats> {
    let t = train.len();
    if t < 2 {
        return Err(Error::Config(format!(
            "normalization needs at least 2 timesteps, got {t}"
        )));
    }
    let mut mean = Vec::with_capacity(train.channels());
    let mut std = Vec::with_capacity(train.channels());
    for col in train.values().columns() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            mean.push(first);
            std.push(0.0);
            continue;
        }
        let m = col.sum() / t as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t as f64;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(NormStats { mean, std })
}

/// z-normalizes `series` with `stats` computed elsewhere (normally on the
/// training series). Never refits.
pub fn apply_normalize(series: &TimeSeries, stats: &NormStats) -> Result<TimeSeries> {
    if series.channels() != stats.channels() {
        return Err(Error::Config(format!(
            "series has {} channels but normalization statistics cover {}",
            series.channels(),
            stats.channels()
        )));
    }
    let mut values = series.values().clone();
    for (c, mut col) in values.columns_mut().into_iter().enumerate() {
        let (m, s) = (stats.mean[c], stats.std[c]);
        if is_constant(m, s) {
            col.mapv_inplace(|v| v - m);
        } else {
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
    TimeSeries::new(
        series.name.clone(),
        values,
        series.labels().map(<[u8]>::to_vec),
    )
}
