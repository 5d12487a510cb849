//! LIBSVM multilabel text format.
//!
//! Lines look like `L1,L2,... i1:v1 i2:v2 ...`: a comma-separated label list
//! (possibly empty, in which case the line starts with a feature pair) and
//! sparse 1-based `index:value` features. Absent indices are zero.

use std::io::{BufRead, Write};

use super::MultiLabelDataset;
use crate::{Error, Result};

struct RawInstance {
    labels: Vec<usize>,
    features: Vec<(usize, f64)>, // 0-based index
}

fn parse_line(line_no: usize, line: &str) -> Result<Option<RawInstance>> {
    let mut tokens = line.split_whitespace().peekable();
    let Some(&first) = tokens.peek() else {
        return Ok(None); // blank line
    };

    let mut labels = Vec::new();
    if !first.contains(':') {
        tokens.next();
        for piece in first.split(',') {
            if piece.is_empty() {
                continue;
            }
            let label = piece.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid label {piece:?}"),
            })?;
            labels.push(label);
        }
    }

    let mut features = Vec::new();
    for tok in tokens {
        let Some(colon) = tok.find(':') else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("feature token {tok:?} has no colon"),
            });
        };
        let (idx_str, val_str) = tok.split_at(colon);
        let idx = idx_str.parse::<i64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid feature index {idx_str:?}"),
        })?;
        if idx < 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("feature index {idx} is not 1-based positive"),
            });
        }
        let value = val_str[1..].parse::<f64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid feature value {:?}", &val_str[1..]),
        })?;
        features.push((idx as usize - 1, value));
    }
    Ok(Some(RawInstance { labels, features }))
}

/// Parse a LIBSVM multilabel stream. The feature dimension is the largest
/// index seen (or `declared_dim`, when given and at least as large); the
/// action space is the largest label plus one (or `declared_actions`).
pub fn parse_libsvm_multilabel<R: BufRead>(reader: R) -> Result<MultiLabelDataset> {
    parse_with_dims(reader, None, None)
}

fn parse_with_dims<R: BufRead>(
    reader: R,
    declared_dim: Option<usize>,
    declared_actions: Option<usize>,
) -> Result<MultiLabelDataset> {
    let mut raw = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(inst) = parse_line(i + 1, &line)? {
            raw.push(inst);
        }
    }
    if raw.is_empty() {
        return Err(Error::Data("empty dataset: no instances parsed".into()));
    }

    let max_idx = raw
        .iter()
        .flat_map(|r| r.features.iter().map(|(i, _)| i + 1))
        .max()
        .unwrap_or(0);
    let dim = declared_dim.unwrap_or(0).max(max_idx).max(1);
    let max_label = raw
        .iter()
        .flat_map(|r| r.labels.iter().copied())
        .max()
        .map(|l| l + 1)
        .unwrap_or(0);
    let num_actions = declared_actions.unwrap_or(0).max(max_label).max(1);

    let mut features = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for inst in raw {
        let mut row = vec![0.0; dim];
        for (idx, value) in inst.features {
            row[idx] = value;
        }
        features.push(row);
        labels.push(inst.labels);
    }
    MultiLabelDataset::new(features, labels, num_actions)
}

/// Write a dataset in LIBSVM multilabel form. Zero-valued features are
/// omitted; float formatting round-trips exactly.
pub fn write_libsvm_multilabel<W: Write>(dataset: &MultiLabelDataset, mut w: W) -> Result<()> {
    for i in 0..dataset.len() {
        let labels: Vec<String> = dataset
            .labels_of(i)
            .iter()
            .map(|l| l.to_string())
            .collect();
        write!(w, "{}", labels.join(","))?;
        for (j, v) in dataset.features_of(i).iter().enumerate() {
            if *v != 0.0 {
                write!(w, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Snapshot format: a header that pins `n`, `d`, `l` (and optionally the
/// generator seed), followed by the LIBSVM body. This removes the ambiguity
/// of dimension inference when trailing features happen to be zero.
pub fn write_snapshot<W: Write>(
    dataset: &MultiLabelDataset,
    seed: Option<u64>,
    mut w: W,
) -> Result<()> {
    write!(
        w,
        "# handoff-dataset v1 n={} d={} l={}",
        dataset.len(),
        dataset.feature_dim(),
        dataset.num_actions()
    )?;
    if let Some(seed) = seed {
        write!(w, " seed={seed}")?;
    }
    writeln!(w)?;
    write_libsvm_multilabel(dataset, w)
}

/// Read a snapshot written by [`write_snapshot`].
pub fn read_snapshot<R: BufRead>(mut reader: R) -> Result<MultiLabelDataset> {
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let header = header.trim();
    if !header.starts_with("# handoff-dataset v1") {
        return Err(Error::Format(format!(
            "missing snapshot header, found {header:?}"
        )));
    }
    let mut n = None;
    let mut d = None;
    let mut l = None;
    for field in header.split_whitespace() {
        if let Some((key, value)) = field.split_once('=') {
            let parsed = value.parse::<usize>().map_err(|_| {
                Error::Format(format!("bad header field {field:?}"))
            })?;
            match key {
                "n" => n = Some(parsed),
                "d" => d = Some(parsed),
                "l" => l = Some(parsed),
                _ => {}
            }
        }
    }
    let dataset = parse_with_dims(reader, d, l)?;
    if let Some(n) = n {
        if dataset.len() != n {
            return Err(Error::Format(format!(
                "header declares {n} instances, body has {}",
                dataset.len()
            )));
        }
    }
    Ok(dataset)
}
