//! Dataset readers.

use std::collections::BTreeSet;
use std::path::Path;

use crate::model::{DataKind, Dataset, Targets, Task};
use crate::{Error, Result};

/// Outcome of reading a table: the data and how many rows were dropped for
/// missing cells.
#[derive(Debug, Clone)]
pub struct TabularRead {
    pub dataset: Dataset,
    pub dropped: usize,
    /// Mean and standard deviation removed from a standardized target.
    pub target_scaling: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub standardize_target: bool,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "?" | "NA" | "na" | "NaN" | "nan" | "null")
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Label strings sorted numerically when they all parse as numbers,
/// lexicographically otherwise.
fn label_order(labels: &BTreeSet<String>) -> Vec<String> {
    let mut names: Vec<String> = labels.iter().cloned().collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(names).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = pairs.into_iter().map(|(_, s)| s).collect();
    }
    names
}

fn encode_labels(raw: Vec<String>) -> Targets {
    let set: BTreeSet<String> = raw.iter().cloned().collect();
    let names = label_order(&set);
    let ids = raw
        .iter()
        .map(|l| names.iter().position(|n| n == l).expect("label collected above"))
        .collect();
    Targets::Classes { ids, names }
}

/// Reads a headed CSV with one target column (the last one when `None`);
/// rows with missing cells are dropped and counted.
pub fn read_tabular_csv(
    path: impl AsRef<Path>,
    target_column: Option<&str>,
    task: Task,
    opts: CsvOptions,
) -> Result<TabularRead> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let target_idx = match target_column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("no column named {name:?}")))?,
        None if headers.len() >= 2 => headers.len() - 1,
        None => return Err(parse_err(path, 1, "need at least one feature and a target column")),
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows = Vec::new();
    let mut raw_targets = Vec::new();
    let mut dropped = 0;
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("{} cells, header has {}", record.len(), headers.len()),
            ));
        }
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, cell) in record.iter().enumerate() {
            if i == target_idx {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("non-numeric cell {cell:?} in column {:?}", &headers[i]),
                )
            })?;
            row.push(v);
        }
        rows.push(row);
        raw_targets.push(record[target_idx].to_string());
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no complete data rows"));
    }

    let mut target_scaling = None;
    let targets = match task {
        Task::Classification => encode_labels(raw_targets),
        Task::Regression => {
            let mut values = Vec::with_capacity(raw_targets.len());
            for (k, t) in raw_targets.iter().enumerate() {
                values.push(
                    t.parse::<f64>()
                        .map_err(|_| parse_err(path, k + 2, format!("non-numeric target {t:?}")))?,
                );
            }
            if opts.standardize_target {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let scale = if sd > 0.0 { sd } else { 1.0 };
                for v in &mut values {
                    *v = (*v - mean) / scale;
                }
                target_scaling = Some((mean, scale));
            }
            Targets::Values(values)
        }
    };
    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows with missing cells", path.display());
    }
    let dataset = Dataset::new(rows, targets, DataKind::Tabular)?.with_feature_names(feature_names)?;
    Ok(TabularRead {
        dataset,
        dropped,
        target_scaling,
    })
}

/// Reads a UCR-style file: one series per line, label first, values
/// separated by tabs, commas or spaces.
pub fn read_ucr_tsv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line
            .split(|c: char| c == '\t' || c == ',' || c.is_whitespace())
            .filter(|c| !c.is_empty());
        let label = cells.next().expect("line is not blank").to_string();
        let mut row = Vec::new();
        for cell in cells {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("non-numeric value {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, "missing or infinite value"));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("series of length {}, expected {}", row.len(), first.len()),
                ));
            }
        }
        if row.is_empty() {
            return Err(parse_err(path, line_no, "series without values"));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no series"));
    }
    Dataset::new(rows, encode_labels(labels), DataKind::Temporal)
}

/// Re-encodes class ids against `class_names` (typically those of the
/// training split) so ids agree across files.
pub fn align_classes(ds: Dataset, class_names: &[String]) -> Result<Dataset> {
    let Some(ids) = ds.class_ids() else {
        return Err(Error::TaskMismatch {
            expected: Task::Classification.name(),
            found: Task::Regression.name(),
        });
    };
    let own = ds.class_names();
    let mut mapped = Vec::with_capacity(ids.len());
    for &c in ids {
        let name = &own[c];
        let id = class_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidDataset(format!("label {name:?} absent from the reference classes")))?;
        mapped.push(id);
    }
    let rows: Vec<Vec<f64>> = ds.points().map(|p| p.to_vec()).collect();
    let aligned = Dataset::new(
        rows,
        Targets::Classes {
            ids: mapped,
            names: class_names.to_vec(),
        },
        ds.kind(),
    )?;
    match ds.feature_names() {
        Some(names) => aligned.with_feature_names(names.to_vec()),
        None => Ok(aligned),
    }
}

/// Reads a UCR split with the class ids of a companion split.
pub fn read_ucr_tsv_with_classes(path: impl AsRef<Path>, class_names: &[String]) -> Result<Dataset> {
    align_classes(read_ucr_tsv(path)?, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn missing_rows_are_dropped() {
        let f = file("a,b,y\n1,2,x\n3,,x\n5,6,z\n");
        let r = read_tabular_csv(f.path(), Some("y"), Task::Classification, CsvOptions::default()).unwrap();
        assert_eq!(r.dataset.len(), 2);
        assert_eq!(r.dropped, 1);
        assert_eq!(r.dataset.class_names(), ["x", "z"]);
        assert_eq!(r.dataset.feature_names().unwrap(), ["a", "b"]);
    }

    #[test]
    fn standardized_target() {
        let f = file("a,y\n1,3\n2,7\n3,8\n4,-2\n");
        let r = read_tabular_csv(
            f.path(),
            Some("y"),
            Task::Regression,
            CsvOptions {
                standardize_target: true,
            },
        )
        .unwrap();
        let v = r.dataset.values().unwrap();
        let mean = v.iter().sum::<f64>() / 4.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn csv_errors() {
        let f = file("a,y\n");
        assert!(read_tabular_csv(f.path(), Some("y"), Task::Regression, CsvOptions::default()).is_err());
        let f = file("a,y\n1,2\n");
        assert!(read_tabular_csv(f.path(), Some("target"), Task::Regression, CsvOptions::default()).is_err());
        let f = file("a,y\n1,2\nfoo,3\n");
        match read_tabular_csv(f.path(), Some("y"), Task::Regression, CsvOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ucr_layout() {
        let row = |label: &str| {
            let vals: Vec<String> = (0..24).map(|i| format!("{}", i as f64 / 10.0)).collect();
            format!("{label}\t{}\n", vals.join("\t"))
        };
        let f = file(&format!("{}{}", row("-1"), row("1")));
        let ds = read_ucr_tsv(f.path()).unwrap();
        assert_eq!((ds.len(), ds.width()), (2, 24));
        assert_eq!(ds.class_names(), ["-1", "1"]);
        assert_eq!(ds.class_ids().unwrap(), [0, 1]);
        assert_eq!(ds.kind(), DataKind::Temporal);
    }

    #[test]
    fn ragged_series_named() {
        let f = file("1\t0.1\t0.2\n2\t0.3\n");
        match read_ucr_tsv(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn companion_classes() {
        let f = file("2\t0.5\n");
        let ds = read_ucr_tsv_with_classes(f.path(), &["1".into(), "2".into()]).unwrap();
        assert_eq!(ds.class_ids().unwrap(), [1]);
        assert!(read_ucr_tsv_with_classes(f.path(), &["1".into()]).is_err());
    }

    #[test]
    fn default_target_is_last_column() {
        let f = file("a,b,label\n1,2,x\n3,4,y\n");
        let r = read_tabular_csv(f.path(), None, Task::Classification, CsvOptions::default()).unwrap();
        assert_eq!(r.dataset.width(), 2);
        let aligned = align_classes(r.dataset, &["y".into(), "x".into()]).unwrap();
        assert_eq!(aligned.class_ids().unwrap(), [1, 0]);
        assert_eq!(aligned.feature_names().unwrap(), ["a", "b"]);
    }
}
