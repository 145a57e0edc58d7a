use std::fmt::Write;

use super::{auc_pr, auc_roc, ucr_hit, vus};
use crate::error::{Error, Result};

/// Metrics of one scored series; `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMetrics {
    pub name: String,
    pub auc_pr: Option<f64>,
    pub auc_roc: Option<f64>,
    pub vus_pr: Option<f64>,
    pub vus_roc: Option<f64>,
    /// 1 or 0 when requested and the series has exactly one anomaly span.
    pub ucr: Option<f64>,
}

fn defined<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl SeriesMetrics {
    pub fn compute(
        name: impl Into<String>,
        scores: &[f64],
        labels: &[u8],
        buffers: &[usize],
        with_ucr: bool,
    ) -> Result<Self> {
        let v = defined(vus(scores, labels, buffers))?;
        let ucr = if with_ucr {
            defined(ucr_hit(scores, labels))?.map(|h| h as u8 as f64)
        } else {
            None
        };
        Ok(SeriesMetrics {
            name: name.into(),
            auc_pr: defined(auc_pr(scores, labels))?,
            auc_roc: defined(auc_roc(scores, labels))?,
            vus_pr: v.map(|v| v.pr),
            vus_roc: v.map(|v| v.roc),
            ucr,
        })
    }

    fn values(&self) -> [Option<f64>; 5] {
        [
            self.auc_pr,
            self.auc_roc,
            self.vus_pr,
            self.vus_roc,
            self.ucr,
        ]
    }
}

const COLUMNS: [&str; 5] = ["auc_pr", "auc_roc", "vus_pr", "vus_roc", "ucr_score"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub series: Vec<SeriesMetrics>,
    /// Lines echoed at the top of both renderings.
    pub preamble: String,
}

impl MetricReport {
    pub fn new(series: Vec<SeriesMetrics>) -> Self {
        MetricReport {
            series,
            preamble: String::new(),
        }
    }

    /// Mean of each column over the series where it is defined.
    pub fn means(&self) -> [Option<f64>; 5] {
        let mut out = [None; 5];
        for (k, slot) in out.iter_mut().enumerate() {
            let vals: Vec<f64> = self.series.iter().filter_map(|s| s.values()[k]).collect();
            if !vals.is_empty() {
                *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        out
    }

    /// Aligned table with one row per series and a mean row.
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["series".to_string()];
        header.extend(COLUMNS.iter().map(|c| c.to_string()));
        rows.push(header);
        for s in &self.series {
            let mut r = vec![s.name.clone()];
            r.extend(s.values().iter().map(|&v| cell(v)));
            rows.push(r);
        }
        let mut mean = vec!["mean".to_string()];
        mean.extend(self.means().iter().map(|&v| cell(v)));
        rows.push(mean);

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in self.preamble.lines() {
            let _ = writeln!(out, "# {line}");
        }
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| {
                    if c == 0 {
                        format!("{v:<w$}")
                    } else {
                        format!("{v:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 || i == rows.len() - 2 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        out
    }

    /// `key = value` lines: `mean.<metric>` and `series.<name>.<metric>`.
    pub fn to_kv(&self) -> String {
        let val = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.16e}"));
        let mut out = String::new();
        for line in self.preamble.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "series_count = {}", self.series.len());
        for (c, v) in COLUMNS.iter().zip(self.means()) {
            let _ = writeln!(out, "mean.{c} = {}", val(v));
        }
        for s in &self.series {
            for (c, v) in COLUMNS.iter().zip(s.values()) {
                let _ = writeln!(out, "series.{}.{c} = {}", s.name, val(v));
            }
        }
        out
    }
}
