//! Ranking metrics, range-aware VUS, the UCR hit score, and the Wilcoxon
//! signed-rank test.

mod curves;
mod report;
mod wilcoxon;

pub use curves::{
    auc_pr, auc_roc, dilate_labels, ucr_hit, ucr_score, vus, Vus, DEFAULT_VUS_BUFFERS,
    UCR_TOLERANCE,
};
pub use report::{MetricReport, SeriesMetrics};
pub use wilcoxon::{wilcoxon_signed_rank, Wilcoxon, EXACT_MAX_N};

use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::Config(format!(
            "label at index {i} is {}, expected 0 or 1",
            labels[i]
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("score at index {i} is NaN")));
    }
    Ok(())
}
