use super::check_inputs;
use crate::data::label_spans;
use crate::error::{Error, Result};

/// Buffer lengths averaged by [`vus`] unless told otherwise.
pub const DEFAULT_VUS_BUFFERS: [usize; 11] = [0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

/// Slack on either side of the labeled span for [`ucr_hit`].
pub const UCR_TOLERANCE: usize = 100;

/// Areas from one sweep over thresholds, highest score first, with equal
/// scores forming a single step.
struct Areas {
    roc: f64,
    ap: f64,
}

/// `pos[i]` and `neg[i]` are how much point `i` counts as a positive and as a
/// negative. Binary labels give the ordinary curves.
fn weighted_areas(scores: &[f64], pos: &[f64], neg: &[f64]) -> (Areas, f64, f64) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let total_pos: f64 = pos.iter().sum();
    let total_neg: f64 = neg.iter().sum();

    let (mut tp, mut fp) = (0.0, 0.0);
    let mut roc = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut dtp, mut dfp) = (0.0, 0.0);
        while i < order.len() && scores[order[i]] == s {
            dtp += pos[order[i]];
            dfp += neg[order[i]];
            i += 1;
        }
        roc += dfp * (2.0 * tp + dtp) / 2.0;
        tp += dtp;
        fp += dfp;
        if dtp > 0.0 {
            ap += dtp * (tp / (tp + fp));
        }
    }
    let areas = Areas {
        roc: roc / (total_pos * total_neg),
        ap: ap / total_pos,
    };
    (areas, total_pos, total_neg)
}

fn binary_weights(labels: &[u8]) -> (Vec<f64>, Vec<f64>) {
    let pos = labels.iter().map(|&l| l as f64).collect();
    let neg = labels.iter().map(|&l| 1.0 - l as f64).collect();
    (pos, neg)
}

/// Area under the ROC curve; ties between a positive and a negative count
/// one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (pos, neg) = binary_weights(labels);
    let (a, p, n) = weighted_areas(scores, &pos, &neg);
    if p == 0.0 || n == 0.0 {
        return Err(Error::Undefined(
            "AUC-ROC needs both positive and negative labels".into(),
        ));
    }
    Ok(a.roc)
}

/// Average precision: precision at each threshold weighted by the recall it
/// adds.
pub fn auc_pr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (pos, neg) = binary_weights(labels);
    let (a, p, _) = weighted_areas(scores, &pos, &neg);
    if p == 0.0 {
        return Err(Error::Undefined(
            "AUC-PR needs at least one positive label".into(),
        ));
    }
    Ok(a.ap)
}

/// Soft positive weights: each labeled range keeps weight 1 and is extended by
/// `buffer / 2` points on each side, decaying linearly. Overlaps take the max.
pub fn dilate_labels(labels: &[u8], buffer: usize) -> Vec<f64> {
    let mut w: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let half = buffer / 2;
    if half == 0 {
        return w;
    }
    let n = labels.len();
    for (start, end) in label_spans(labels) {
        for d in 1..=half {
            let weight = 1.0 - d as f64 / (half + 1) as f64;
            if let Some(i) = start.checked_sub(d) {
                w[i] = w[i].max(weight);
            }
            if end + d < n {
                w[end + d] = w[end + d].max(weight);
            }
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vus {
    pub pr: f64,
    pub roc: f64,
}

/// Volume under the PR and ROC surfaces: both areas computed with
/// [`dilate_labels`] positives, averaged over `buffers`. Negatives are the
/// points labeled 0, each with weight 1.
pub fn vus(scores: &[f64], labels: &[u8], buffers: &[usize]) -> Result<Vus> {
    check_inputs(scores, labels)?;
    if buffers.is_empty() {
        return Err(Error::Config("VUS needs at least one buffer length".into()));
    }
    let neg: Vec<f64> = labels.iter().map(|&l| 1.0 - l as f64).collect();
    if !labels.contains(&1) || !labels.contains(&0) {
        return Err(Error::Undefined(
            "VUS needs both positive and negative labels".into(),
        ));
    }
    let (mut pr, mut roc) = (0.0, 0.0);
    for &b in buffers {
        let pos = dilate_labels(labels, b);
        let (a, _, _) = weighted_areas(scores, &pos, &neg);
        pr += a.ap;
        roc += a.roc;
    }
    let k = buffers.len() as f64;
    Ok(Vus {
        pr: pr / k,
        roc: roc / k,
    })
}

/// Whether the top-scoring point (earliest on ties) lies within
/// [`UCR_TOLERANCE`] of the single labeled span.
pub fn ucr_hit(scores: &[f64], labels: &[u8]) -> Result<bool> {
    check_inputs(scores, labels)?;
    let spans = label_spans(labels);
    if spans.len() != 1 {
        return Err(Error::Undefined(format!(
            "UCR score needs exactly one labeled span, found {}",
            spans.len()
        )));
    }
    let (start, end) = spans[0];
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best + UCR_TOLERANCE >= start && best <= end + UCR_TOLERANCE)
}

/// Mean hit rate over series; series without exactly one span are skipped.
/// Returns the mean (if any series counted) and the indices skipped.
pub fn ucr_score<'a>(
    series: impl IntoIterator<Item = (&'a [f64], &'a [u8])>,
) -> Result<(Option<f64>, Vec<usize>)> {
    let (mut hits, mut counted) = (0usize, 0usize);
    let mut skipped = Vec::new();
    for (i, (s, l)) in series.into_iter().enumerate() {
        match ucr_hit(s, l) {
            Ok(h) => {
                hits += h as usize;
                counted += 1;
            }
            Err(Error::Undefined(_)) => skipped.push(i),
            Err(e) => return Err(e),
        }
    }
    let mean = (counted > 0).then(|| hits as f64 / counted as f64);
    Ok((mean, skipped))
}
