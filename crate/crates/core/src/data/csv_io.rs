use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::TimeSeries;
use crate::error::{Error, Result};

/// Which column (if any) holds the 0/1 labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by index, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.trim().to_string()),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: Option<LabelColumn>,
}

/// Reads one row per timestep; every non-label column is a channel.
///
/// Rows and columns in errors are 1-based and count the header line.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_series(file, &name, opts)
}

pub(crate) fn read_series(
    reader: impl std::io::Read,
    name: &str,
    opts: &CsvOptions,
) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);

    let mut records = rdr.records();
    let mut header: Option<csv::StringRecord> = None;
    let mut line_offset = 1;
    if opts.has_header {
        match records.next() {
            Some(r) => header = Some(r.map_err(csv_err)?),
            None => return Err(Error::Empty(format!("{name}: file has no header row"))),
        }
        line_offset = 2;
    }

    // A label column chosen by name is optional: series without it load
    // unlabeled. One chosen by index must exist.
    let label_idx = match (&opts.label_column, &header) {
        (Some(LabelColumn::Index(i)), _) => Some(*i),
        (Some(LabelColumn::Name(n)), Some(h)) => h.iter().position(|c| c == n),
        _ => None,
    };

    let mut width: Option<usize> = header.as_ref().map(|h| h.len());
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + line_offset;
        match width {
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    row,
                    column: rec.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            None => width = Some(rec.len()),
            _ => {}
        }
        if let Some(li) = label_idx {
            if li >= rec.len() {
                return Err(Error::Config(format!(
                    "{name}: label column {li} out of range for {} columns",
                    rec.len()
                )));
            }
        }
        for (col, field) in rec.iter().enumerate() {
            let parsed: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if Some(col) == label_idx {
                let l = match parsed {
                    v if v == 0.0 => 0,
                    v if v == 1.0 => 1,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: col + 1,
                            message: format!("label must be 0 or 1, found {field:?}"),
                        })
                    }
                };
                labels.push(l);
            } else {
                if !parsed.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: col + 1,
                        message: "non-finite value".into(),
                    });
                }
                values.push(parsed);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty(format!("{name}: no data rows")));
    }
    let channels = values.len() / rows;
    if channels == 0 {
        return Err(Error::Empty(format!("{name}: no value columns")));
    }
    let values = Array2::from_shape_vec((rows, channels), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    TimeSeries::new(name, values, label_idx.map(|_| labels))
}

fn csv_err(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}

/// Full-precision float formatting: 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes values (and a trailing `label` column when present) with a header.
pub fn write_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let c = series.channels();
    let mut header: Vec<String> = (0..c).map(|i| format!("c{i}")).collect();
    if series.labels().is_some() {
        header.push("label".into());
    }
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (t, row) in series.values().rows().into_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        if let Some(l) = series.labels() {
            fields.push(l[t].to_string());
        }
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// One score per line, no header. Each line of `preamble` is written first
/// as a `#` comment.
pub fn write_scores_csv(scores: &[f64], preamble: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(scores.len() * 24 + preamble.len());
    for line in preamble.lines() {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    for &s in scores {
        text.push_str(&fmt_f64(s));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(line.parse().map_err(|_| Error::Parse {
            row: i + 1,
            column: 1,
            message: format!("not a number: {line:?}"),
        })?);
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("{}: no scores", path.display())));
    }
    Ok(out)
}
