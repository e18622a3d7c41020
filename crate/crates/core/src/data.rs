//! Tabular data: CSV ingestion, train/validation/test splits and optional
//! feature standardization.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{LcnError, Result};
use crate::rng::{seeded, Stream};
use crate::training::Samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Binary targets per label column.
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn parse(tag: &str) -> Option<Split> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "val" | "valid" | "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// A column holding `train`, `val` or `test` per row.
    Column(String),
    /// Seeded shuffle, then cut at the rounded ratio boundaries.
    Ratios {
        train: f64,
        validation: f64,
        test: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub label_columns: Vec<String>,
    pub split: SplitSpec,
    /// Inferred from the labels when `None`: all labels in {0,1} means
    /// classification.
    pub task: Option<Task>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
    pub task: Task,
    pub split: Vec<Split>,
}

/// Header plus raw string cells.
struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| LcnError::data(Some(path), format!("cannot open CSV: {e}")))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| LcnError::data(Some(path), format!("malformed header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LcnError::data(Some(path), format!("row {}: {e}", i + 1)))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

fn parse_cell(path: &Path, row: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        LcnError::data(Some(path), format!("row {row}, column `{column}`: `{cell}` is not a number"))
    })?;
    if !v.is_finite() {
        return Err(LcnError::data(
            Some(path),
            format!("row {row}, column `{column}`: non-finite value `{cell}`"),
        ));
    }
    Ok(v)
}

fn column_index(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| LcnError::data(Some(path), format!("unknown column `{name}`")))
}

/// Loads a CSV with a header row. Every column that is neither a label nor
/// the split column is a feature. Rows are numbered from 1 (first data row)
/// in error messages.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    if options.label_columns.is_empty() {
        return Err(LcnError::data(Some(path), "no label columns given"));
    }
    let label_idx: Vec<usize> = options
        .label_columns
        .iter()
        .map(|l| column_index(path, &table.header, l))
        .collect::<Result<_>>()?;
    let split_idx = match &options.split {
        SplitSpec::Column(c) => Some(column_index(path, &table.header, c)?),
        SplitSpec::Ratios { .. } => None,
    };
    let feature_idx: Vec<usize> = (0..table.header.len())
        .filter(|i| !label_idx.contains(i) && Some(*i) != split_idx)
        .collect();
    if feature_idx.is_empty() {
        return Err(LcnError::data(Some(path), "no feature columns"));
    }
    if table.rows.is_empty() {
        return Err(LcnError::data(Some(path), "no data rows"));
    }

    let mut features = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    let mut tags = Vec::new();
    for (r, row) in table.rows.iter().enumerate() {
        let rn = r + 1;
        let cell = |i: usize| parse_cell(path, rn, &table.header[i], &row[i]);
        features.push(feature_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        labels.push(label_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        if let Some(s) = split_idx {
            let tag = Split::parse(&row[s]).ok_or_else(|| {
                LcnError::data(
                    Some(path),
                    format!("row {rn}, column `{}`: unknown split tag `{}`", table.header[s], row[s]),
                )
            })?;
            tags.push(tag);
        }
    }

    let binary = labels.iter().flatten().all(|&v| v == 0.0 || v == 1.0);
    let task = match options.task {
        Some(Task::Classification) if !binary => {
            let (r, _) = labels
                .iter()
                .enumerate()
                .find(|(_, l)| l.iter().any(|&v| v != 0.0 && v != 1.0))
                .expect("a non-binary label exists");
            return Err(LcnError::data(
                Some(path),
                format!("row {}: classification labels must be 0 or 1", r + 1),
            ));
        }
        Some(t) => t,
        None if binary => Task::Classification,
        None => Task::Regression,
    };

    let split = match &options.split {
        SplitSpec::Column(_) => tags,
        SplitSpec::Ratios {
            train,
            validation,
            test,
            seed,
        } => ratio_split(features.len(), [*train, *validation, *test], *seed)
            .map_err(|m| LcnError::data(Some(path), m))?,
    };
    if !split.contains(&Split::Train) {
        return Err(LcnError::data(Some(path), "the training split is empty"));
    }

    Ok(Dataset {
        feature_names: feature_idx.iter().map(|&i| table.header[i].clone()).collect(),
        label_names: options.label_columns.clone(),
        features,
        labels,
        task,
        split,
    })
}

/// Assigns rows to splits after a seeded shuffle. Train and validation sizes
/// are the rounded ratio shares; test takes the rest.
pub fn ratio_split(n: usize, ratios: [f64; 3], seed: u64) -> std::result::Result<Vec<Split>, String> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(format!("split ratios must be non-negative, got {ratios:?}"));
    }
    let total: f64 = ratios.iter().sum();
    if total <= 0.0 {
        return Err("split ratios sum to zero".into());
    }
    let n_train = ((ratios[0] / total) * n as f64).round() as usize;
    let n_val = (((ratios[1] / total) * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let n_test = n - n_train - n_val;
    for (name, ratio, count) in [
        ("train", ratios[0], n_train),
        ("validation", ratios[1], n_val),
        ("test", ratios[2], n_test),
    ] {
        if ratio > 0.0 && count == 0 {
            return Err(format!("{name} split is empty for {n} rows"));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed, Stream::Split));
    let mut split = vec![Split::Test; n];
    for (pos, &row) in order.iter().enumerate() {
        split[row] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(split)
}

/// Reads the named feature columns from a CSV, ignoring any other columns.
pub fn load_features(path: impl AsRef<Path>, feature_names: &[String]) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let idx: Vec<usize> = feature_names
        .iter()
        .map(|n| column_index(path, &table.header, n))
        .collect::<Result<_>>()?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            idx.iter()
                .map(|&i| parse_cell(path, r + 1, &table.header[i], &row[i]))
                .collect()
        })
        .collect()
}

/// Reads a column of `train`/`val`/`test` tags.
pub fn load_split_tags(path: impl AsRef<Path>, column: &str) -> Result<Vec<Split>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let c = column_index(path, &table.header, column)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            Split::parse(&row[c]).ok_or_else(|| {
                LcnError::data(
                    Some(path),
                    format!("row {}, column `{column}`: unknown split tag `{}`", r + 1, row[c]),
                )
            })
        })
        .collect()
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn rows(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.split.iter().filter(|&&s| s == split).count()
    }

    /// Inputs and targets of one split. `label` selects a single label
    /// column; `None` keeps all of them.
    pub fn samples(&self, split: Split, label: Option<usize>) -> Samples {
        let rows = self.rows(split);
        Samples::new(
            rows.iter().map(|&i| self.features[i].clone()).collect(),
            rows.iter()
                .map(|&i| match label {
                    Some(l) => vec![self.labels[i][l]],
                    None => self.labels[i].clone(),
                })
                .collect(),
        )
    }

    /// Writes features, labels and a `split` column; values use the shortest
    /// representation that parses back to the same double.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| LcnError::data(Some(path), format!("cannot create CSV: {e}")))?;
        let io = |e: csv::Error| LcnError::data(Some(path), format!("write failed: {e}"));
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(self.label_names.iter().map(String::as_str));
        header.push("split");
        w.write_record(&header).map_err(io)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features[i].iter().map(|v| v.to_string()).collect();
            rec.extend(self.labels[i].iter().map(|v| v.to_string()));
            rec.push(self.split[i].tag().to_string());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| LcnError::io(path, e))
    }

    /// Fits z-scoring on the training rows.
    pub fn fit_standardizer(&self) -> Standardizer {
        let rows = self.rows(Split::Train);
        let d = self.input_dim();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &r in &rows {
            for (m, v) in mean.iter_mut().zip(&self.features[r]) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for &r in &rows {
            for j in 0..d {
                std[j] += (self.features[r][j] - mean[j]).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = s.sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardizer { mean, std }
    }
}

/// Per-feature `(x − mean) / std`, stored with the model so inference
/// applies the same transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, rows: &mut [Vec<f64>]) {
        for r in rows {
            *r = self.apply(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn ratios(seed: u64) -> SplitSpec {
        SplitSpec::Ratios {
            train: 0.5,
            validation: 0.25,
            test: 0.25,
            seed,
        }
    }

    #[test]
    fn four_rows_split_two_one_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,b,y\n1,2,0\n3,4,1\n5,6,0\n7,8,1\n");
        let opts = CsvOptions {
            label_columns: vec!["y".into()],
            split: ratios(9),
            task: None,
        };
        let d = load_csv(&p, &opts).unwrap();
        assert_eq!(d.task, Task::Classification);
        assert_eq!(
            (d.count(Split::Train), d.count(Split::Validation), d.count(Split::Test)),
            (2, 1, 1)
        );
        assert_eq!(d.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,b,y\n1,2,0\n3,NaN,1\n");
        let opts = CsvOptions {
            label_columns: vec!["y".into()],
            split: ratios(1),
            task: None,
        };
        let msg = load_csv(&p, &opts).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("`b`"), "{msg}");
    }

    #[test]
    fn non_numeric_and_unknown_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,y\nfoo,1\n");
        let opts = CsvOptions {
            label_columns: vec!["y".into()],
            split: ratios(1),
            task: None,
        };
        assert!(load_csv(&p, &opts).unwrap_err().to_string().contains("row 1"));
        let opts = CsvOptions {
            label_columns: vec!["nope".into()],
            split: ratios(1),
            task: None,
        };
        assert!(load_csv(&p, &opts).unwrap_err().to_string().contains("nope"));
    }

    #[test]
    fn split_column_and_regression_inference() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "x,y,s\n1,0.5,train\n2,1.5,val\n3,2.5,test\n");
        let opts = CsvOptions {
            label_columns: vec!["y".into()],
            split: SplitSpec::Column("s".into()),
            task: None,
        };
        let d = load_csv(&p, &opts).unwrap();
        assert_eq!(d.task, Task::Regression);
        assert_eq!(d.split, vec![Split::Train, Split::Validation, Split::Test]);
        let forced = CsvOptions {
            task: Some(Task::Classification),
            ..opts
        };
        assert!(load_csv(&p, &forced).is_err());
    }

    #[test]
    fn empty_training_split_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "x,y,s\n1,0,test\n2,1,val\n");
        let opts = CsvOptions {
            label_columns: vec!["y".into()],
            split: SplitSpec::Column("s".into()),
            task: None,
        };
        assert!(load_csv(&p, &opts).unwrap_err().to_string().contains("empty"));
        assert!(ratio_split(2, [0.0, 0.5, 0.5], 0).is_ok());
        assert!(ratio_split(1, [0.5, 0.5, 0.0], 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_value_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let n = 40;
        let d = Dataset {
            feature_names: vec!["f0".into(), "f1".into(), "f2".into()],
            label_names: vec!["t".into()],
            features: (0..n)
                .map(|_| (0..3).map(|_| rng.gen_range(-1e3..1e3) * rng.gen::<f64>()).collect())
                .collect(),
            labels: (0..n).map(|_| vec![rng.gen_range(-5.0..5.0)]).collect(),
            task: Task::Regression,
            split: ratio_split(n, [0.6, 0.2, 0.2], 4).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        d.write_csv(&p).unwrap();
        let back = load_csv(
            &p,
            &CsvOptions {
                label_columns: vec!["t".into()],
                split: SplitSpec::Column("split".into()),
                task: Some(Task::Regression),
            },
        )
        .unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn standardizer_centers_training_rows() {
        let d = Dataset {
            feature_names: vec!["a".into()],
            label_names: vec!["y".into()],
            features: vec![vec![1.0], vec![3.0], vec![100.0]],
            labels: vec![vec![0.0], vec![1.0], vec![0.0]],
            task: Task::Classification,
            split: vec![Split::Train, Split::Train, Split::Test],
        };
        let s = d.fit_standardizer();
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.std, vec![1.0]);
        assert_eq!(s.apply(&[3.0]), vec![1.0]);
    }
}
