//! Victim examples in LIBSVM text format or dense CSV.
//!
//! LIBSVM lines read `label index:value ...`; features not listed are 0.
//! CSV files (`.csv` extension) hold the label in the first column and one
//! feature per remaining column, without a header.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read data file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataOptions {
    /// Index of the first feature in LIBSVM files (0 or 1).
    pub index_base: usize,
    pub num_features: usize,
    pub num_classes: usize,
}

fn parse_label(raw: &str, num_classes: usize, line: usize) -> Result<usize, DataError> {
    let err = |msg: String| DataError::Parse { line, msg };
    let v: f64 = raw.parse().map_err(|_| err(format!("bad label {raw:?}")))?;
    if num_classes <= 2 {
        return match v {
            1.0 => Ok(1),
            0.0 | -1.0 => Ok(0),
            _ => Err(err(format!("binary label must be 0, 1 or -1, got {raw}"))),
        };
    }
    if v.fract() != 0.0 || v < 0.0 || v >= num_classes as f64 {
        return Err(err(format!(
            "label {raw} is not a class in 0..{num_classes}"
        )));
    }
    Ok(v as usize)
}

pub fn parse_libsvm(text: &str, opts: &DataOptions) -> Result<Dataset, DataError> {
    let mut data = Dataset::default();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let label = parse_label(
            parts.next().expect("non-empty line"),
            opts.num_classes,
            line,
        )?;
        let mut x = vec![0.0; opts.num_features];
        for tok in parts {
            let err = |msg: String| DataError::Parse { line, msg };
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("bad entry {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad index in {tok:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad value in {tok:?}")))?;
            let j = idx
                .checked_sub(opts.index_base)
                .filter(|&j| j < opts.num_features)
                .ok_or_else(|| err(format!("feature index {idx} out of range")))?;
            x[j] = val;
        }
        data.features.push(x);
        data.labels.push(label);
    }
    Ok(data)
}

pub fn parse_csv(text: &str, opts: &DataOptions) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Dataset::default();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let err = |msg: String| DataError::Parse { line, msg };
        if rec.len() != opts.num_features + 1 {
            return Err(err(format!(
                "expected {} columns, got {}",
                opts.num_features + 1,
                rec.len()
            )));
        }
        let label = parse_label(&rec[0], opts.num_classes, line)?;
        let x = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| err(format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        data.features.push(x);
        data.labels.push(label);
    }
    Ok(data)
}

/// Loads a dataset, choosing the format by file extension.
pub fn load_dataset<P: AsRef<Path>>(path: P, opts: &DataOptions) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        parse_csv(&text, opts)
    } else {
        parse_libsvm(&text, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPTS: DataOptions = DataOptions {
        index_base: 0,
        num_features: 3,
        num_classes: 2,
    };

    #[test]
    fn libsvm_sparse_rows_and_labels() {
        let d = parse_libsvm("+1 0:0.5 2:1\n# comment\n\n-1 1:2 # trailing\n0\n", &OPTS).unwrap();
        assert_eq!(d.labels, vec![1, 0, 0]);
        assert_eq!(d.features[0], vec![0.5, 0.0, 1.0]);
        assert_eq!(d.features[1], vec![0.0, 2.0, 0.0]);
        assert_eq!(d.features[2], vec![0.0; 3]);
    }

    #[test]
    fn libsvm_one_based_and_range_errors() {
        let one = DataOptions {
            index_base: 1,
            ..OPTS
        };
        let d = parse_libsvm("1 1:7 3:9", &one).unwrap();
        assert_eq!(d.features[0], vec![7.0, 0.0, 9.0]);
        assert!(parse_libsvm("1 0:1", &one).is_err());
        assert!(parse_libsvm("1 3:1", &OPTS).is_err());
        assert!(parse_libsvm("2 0:1", &OPTS).is_err());
        assert!(parse_libsvm("1 0-1", &OPTS).is_err());
    }

    #[test]
    fn multiclass_labels_and_csv() {
        let three = DataOptions {
            num_classes: 3,
            ..OPTS
        };
        assert_eq!(parse_libsvm("2 0:1", &three).unwrap().labels, vec![2]);
        assert!(parse_libsvm("3 0:1", &three).is_err());
        assert!(parse_libsvm("1.5 0:1", &three).is_err());
        let d = parse_csv("1, 0.1, 0.2, 0.3\n0,1,2,3\n", &OPTS).unwrap();
        assert_eq!(d.labels, vec![1, 0]);
        assert_eq!(d.features[1], vec![1.0, 2.0, 3.0]);
        assert!(parse_csv("1,2\n", &OPTS).is_err());
    }
}
