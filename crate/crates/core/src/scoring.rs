//! Parameter-free structural discrepancy between a window and its repair.
//!
//! `score = w_amp·s_amp + w_diff·s_diff + w_trend·s_trend + w_corr·s_corr`
//! with default weights `(1, 1/2, 1/2, 1/4)`.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Weights of the four discrepancy terms plus the moving-average length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreWeights {
    pub w_amp: f64,
    pub w_diff: f64,
    pub w_trend: f64,
    pub w_corr: f64,
    pub trend_window: usize,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            w_amp: 1.0,
            w_diff: 0.5,
            w_trend: 0.5,
            w_corr: 0.25,
            trend_window: 10,
        }
    }
}

impl ScoreWeights {
    pub fn amplitude_only() -> Self {
        ScoreWeights {
            w_amp: 1.0,
            w_diff: 0.0,
            w_trend: 0.0,
            w_corr: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_amp, self.w_diff, self.w_trend, self.w_corr];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "score weights must be non-negative: {w:?}"
            )));
        }
        if self.trend_window == 0 {
            return Err(Error::Config("trend window must be at least 1".into()));
        }
        Ok(())
    }
}

/// The four discrepancy terms of one window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreComponents {
    pub amp: f64,
    pub diff: f64,
    pub trend: f64,
    pub corr: f64,
}

impl ScoreComponents {
    pub fn combine(&self, w: &ScoreWeights) -> f64 {
        w.w_amp * self.amp + w.w_diff * self.diff + w.w_trend * self.trend + w.w_corr * self.corr
    }
}

fn same_shape(x: &ArrayView2<f64>, xhat: &ArrayView2<f64>) -> Result<()> {
    if x.dim() != xhat.dim() {
        return Err(Error::Dimension(format!(
            "window {:?} and repair {:?} differ in shape",
            x.dim(),
            xhat.dim()
        )));
    }
    Ok(())
}

/// Mean absolute amplitude error.
pub fn s_amp(x: &ArrayView2<f64>, xhat: &ArrayView2<f64>) -> Result<f64> {
    same_shape(x, xhat)?;
    if x.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = x.iter().zip(xhat.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / x.len() as f64)
}

/// Mean absolute first-difference error.
pub fn s_diff(x: &ArrayView2<f64>, xhat: &ArrayView2<f64>) -> Result<f64> {
    same_shape(x, xhat)?;
    let (w, c) = x.dim();
    if w < 2 {
        return Err(Error::Dimension(format!(
            "s_diff needs at least 2 timesteps, got {w}"
        )));
    }
    let mut total = 0.0;
    for t in 0..w - 1 {
        for ch in 0..c {
            let dx = x[[t + 1, ch]] - x[[t, ch]];
            let dh = xhat[[t + 1, ch]] - xhat[[t, ch]];
            total += (dx - dh).abs();
        }
    }
    Ok(total / ((w - 1) * c).max(1) as f64)
}

/// Centered moving average of one channel; the window is truncated at the
/// edges and averaged over the valid overlap only. For even lengths the extra
/// tap goes to the right.
fn moving_average(x: &ArrayView2<f64>, ch: usize, len: usize, out: &mut [f64]) {
    let w = x.nrows();
    let left = (len - 1) / 2;
    let right = len - 1 - left;
    let mut prefix = vec![0.0; w + 1];
    for t in 0..w {
        prefix[t + 1] = prefix[t] + x[[t, ch]];
    }
    for (t, o) in out.iter_mut().enumerate() {
        let lo = t.saturating_sub(left);
        let hi = (t + right).min(w - 1);
        *o = (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64;
    }
}

/// Mean absolute difference between the moving-average trends of `x` and `xhat`.
pub fn s_trend(x: &ArrayView2<f64>, xhat: &ArrayView2<f64>, trend_window: usize) -> Result<f64> {
    same_shape(x, xhat)?;
    let (w, c) = x.dim();
    if trend_window == 0 || trend_window > w {
        return Err(Error::Config(format!(
            "trend window {trend_window} must lie in 1..={w}"
        )));
    }
    if trend_window == 1 {
        return s_amp(x, xhat);
    }
    let mut mx = vec![0.0; w];
    let mut mh = vec![0.0; w];
    let mut total = 0.0;
    for ch in 0..c {
        moving_average(x, ch, trend_window, &mut mx);
        moving_average(xhat, ch, trend_window, &mut mh);
        total += mx.iter().zip(&mh).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / (w * c) as f64)
}

/// Pearson correlation matrix over the rows of a `W × C` window, row-major
/// `C × C`. A zero-variance channel has correlation 0 with every other channel.
pub fn correlation_matrix(x: &ArrayView2<f64>) -> Vec<f64> {
    let (w, c) = x.dim();
    let n = w as f64;
    let means: Vec<f64> = (0..c).map(|ch| x.column(ch).sum() / n).collect();
    let mut cov = vec![0.0; c * c];
    for row in x.rows() {
        for i in 0..c {
            let di = row[i] - means[i];
            for j in i..c {
                cov[i * c + j] += di * (row[j] - means[j]);
            }
        }
    }
    let mut corr = vec![0.0; c * c];
    for i in 0..c {
        for j in i..c {
            let denom = (cov[i * c + i] * cov[j * c + j]).sqrt();
            let r = if denom > 0.0 && denom.is_finite() {
                (cov[i * c + j] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            corr[i * c + j] = r;
            corr[j * c + i] = r;
        }
    }
    corr
}

/// RMS change of the strict upper triangle of the channel correlation matrix.
pub fn s_corr(x: &ArrayView2<f64>, xhat: &ArrayView2<f64>) -> Result<f64> {
    same_shape(x, xhat)?;
    let c = x.ncols();
    if c < 2 || x.nrows() == 0 {
        return Ok(0.0);
    }
    let rx = correlation_matrix(x);
    let rh = correlation_matrix(xhat);
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..c {
        for j in i + 1..c {
            let d = rx[i * c + j] - rh[i * c + j];
            total += d * d;
            count += 1;
        }
    }
    Ok((total / count as f64).sqrt())
}

pub fn score_components(
    x: &ArrayView2<f64>,
    xhat: &ArrayView2<f64>,
    trend_window: usize,
) -> Result<ScoreComponents> {
    Ok(ScoreComponents {
        amp: s_amp(x, xhat)?,
        diff: s_diff(x, xhat)?,
        trend: s_trend(x, xhat, trend_window)?,
        corr: s_corr(x, xhat)?,
    })
}

/// Weighted structural discrepancy of one window.
pub fn score_window(
    x: &ArrayView2<f64>,
    xhat: &ArrayView2<f64>,
    weights: &ScoreWeights,
) -> Result<f64> {
    weights.validate()?;
    same_shape(x, xhat)?;
    // Zero-weight terms are skipped so their preconditions do not apply.
    let mut total = 0.0;
    if weights.w_amp > 0.0 {
        total += weights.w_amp * s_amp(x, xhat)?;
    }
    if weights.w_diff > 0.0 {
        total += weights.w_diff * s_diff(x, xhat)?;
    }
    if weights.w_trend > 0.0 {
        total += weights.w_trend * s_trend(x, xhat, weights.trend_window)?;
    }
    if weights.w_corr > 0.0 {
        total += weights.w_corr * s_corr(x, xhat)?;
    }
    Ok(total)
}

/// Guard against a zero interquartile range.
pub const IQR_EPSILON: f64 = 1e-9;

/// Median and interquartile range of training-window scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    pub median: f64,
    pub iqr: f64,
}

/// Quantile with linear interpolation between order statistics
/// (position `q·(n-1)` in the sorted sample).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

impl ScoreStats {
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("no training scores to summarize".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("non-finite training score".into()));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let iqr = (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)).max(0.0);
        Ok(ScoreStats {
            median: quantile_sorted(&sorted, 0.5),
            iqr,
        })
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.median) / self.iqr.max(IQR_EPSILON)
    }
}

/// Robust z-scores `(raw - median) / max(iqr, ε)`.
pub fn normalize_scores(raw: &[f64], stats: &ScoreStats) -> Vec<f64> {
    raw.iter().map(|&r| stats.normalize(r)).collect()
}
