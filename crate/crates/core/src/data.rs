//! Datasets: Gaussian samples, a synthetic anomaly benchmark, CSV ingestion,
//! min-max normalisation and train/test splits.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::tensor::DenseMatrix;

const MODULE: &str = "data";

/// Name given to the label column when a dataset is written to CSV.
pub const LABEL_COLUMN: &str = "label";

/// Per-feature min/max of the rows a normaliser was fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit(features: &DenseMatrix) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::invalid(MODULE, "cannot fit normalisation on zero rows"));
        }
        let (mut min, mut max) = (Vec::new(), Vec::new());
        for c in 0..features.cols() {
            let col = features.column(c);
            min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(Normalization { min, max })
    }

    /// Maps `[min, max]` onto `[−1, 1]` per feature. Constant features map
    /// to `x − min`, so the fitted rows land on 0.
    pub fn apply(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        if features.cols() != self.min.len() {
            return Err(Error::shape(
                "normalize",
                format!("{} features, normaliser fitted on {}", features.cols(), self.min.len()),
            ));
        }
        let cols = features.cols();
        let data = features
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = i % cols;
                let span = self.max[c] - self.min[c];
                if span > 0.0 {
                    2.0 * (x - self.min[c]) / span - 1.0
                } else {
                    x - self.min[c]
                }
            })
            .collect();
        DenseMatrix::new(features.rows(), cols, data)
    }
}

/// Feature matrix with optional 0/1 labels (1 marks an anomaly).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    features: DenseMatrix,
    labels: Option<Vec<u8>>,
    feature_names: Vec<String>,
    normalization: Option<Normalization>,
}

fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

impl TabularDataset {
    pub fn new(features: DenseMatrix, labels: Option<Vec<u8>>, feature_names: Option<Vec<String>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::invalid(
                    MODULE,
                    format!("{} labels for {} rows", l.len(), features.rows()),
                ));
            }
            if let Some(i) = l.iter().position(|&v| v > 1) {
                return Err(Error::invalid(MODULE, format!("label of row {i} is {}", l[i])));
            }
        }
        let feature_names = feature_names.unwrap_or_else(|| default_names(features.cols()));
        if feature_names.len() != features.cols() {
            return Err(Error::invalid(
                MODULE,
                format!("{} names for {} features", feature_names.len(), features.cols()),
            ));
        }
        Ok(TabularDataset {
            features,
            labels,
            feature_names,
            normalization: None,
        })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Fraction of rows labelled 1, when labels are present.
    pub fn anomaly_fraction(&self) -> Option<f64> {
        let l = self.labels.as_ref()?;
        if l.is_empty() {
            return Some(0.0);
        }
        Some(l.iter().filter(|&&v| v == 1).count() as f64 / l.len() as f64)
    }

    /// Rows `indices` in the given order; normalisation stats are kept.
    pub fn select(&self, indices: &[usize]) -> TabularDataset {
        TabularDataset {
            features: self.features.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Applies `stats` to the features and records them.
    pub fn normalized_with(&self, stats: &Normalization) -> Result<TabularDataset> {
        Ok(TabularDataset {
            features: stats.apply(&self.features)?,
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
            normalization: Some(stats.clone()),
        })
    }

    /// Writes a header row and one line per sample. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.feature_names.clone();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN.to_string());
        }
        out.write_record(&header)?;
        for (r, row) in self.features.row_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(l[r].to_string());
            }
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// `n` draws from `N(mu, sigma²)` as a one-feature dataset.
pub fn sample_gaussian(mu: f64, sigma: f64, n: usize, seed: u64) -> Result<TabularDataset> {
    if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return Err(Error::invalid(MODULE, format!("need finite mu and sigma > 0, got {mu}, {sigma}")));
    }
    let mut r = rng::stream(seed, streams::DATA);
    let data = (0..n).map(|_| mu + sigma * r.sample::<f64, _>(StandardNormal)).collect();
    TabularDataset::new(DenseMatrix::new(n, 1, data)?, None, Some(vec!["x".to_string()]))
}

/// Normals from `N(0, I_d)` and anomalies from `N(separation·1, I_d)`,
/// shuffled together.
pub fn synth_anomaly_benchmark(
    n_normal: usize,
    n_anomaly: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<TabularDataset> {
    if d == 0 {
        return Err(Error::invalid(MODULE, "benchmark dimension must be at least 1"));
    }
    if !separation.is_finite() {
        return Err(Error::invalid(MODULE, "separation must be finite"));
    }
    let mut r = rng::stream(seed, streams::DATA);
    let n = n_normal + n_anomaly;
    let mut rows: Vec<(Vec<f64>, u8)> = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(i >= n_normal);
        let centre = if label == 1 { separation } else { 0.0 };
        let row = (0..d).map(|_| centre + r.sample::<f64, _>(StandardNormal)).collect();
        rows.push((row, label));
    }
    rows.shuffle(&mut r);
    let labels = rows.iter().map(|(_, l)| *l).collect();
    let data = rows.into_iter().flat_map(|(row, _)| row).collect();
    TabularDataset::new(DenseMatrix::new(n, d, data)?, Some(labels), None)
}

/// Reads a headed, comma-separated file of numbers.
///
/// When `label_column` is given, that column is split out as labels and must
/// hold exactly `0` or `1`. Row numbers in errors count data rows from 1.
pub fn load_tabular_csv(path: &Path, label_column: Option<&str>) -> Result<TabularDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label_column {
        Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            detail: format!("label column '{name}' not found in header {header:?}"),
        })?),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..header.len()).filter(|&i| Some(i) != label_idx).collect();
    if feature_idx.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: "no feature columns".to_string(),
        });
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: format!("row {row}: {e}"),
        })?;
        for &c in &feature_idx {
            let cell = record[c].trim();
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::MalformedCell {
                path: path.to_path_buf(),
                row,
                column: header[c].clone(),
                cell: cell.to_string(),
            })?;
            data.push(v);
        }
        if let Some(li) = label_idx {
            labels.push(match record[li].trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::MalformedCell {
                        path: path.to_path_buf(),
                        row,
                        column: header[li].clone(),
                        cell: other.to_string(),
                    })
                }
            });
        }
        rows += 1;
    }
    let names = feature_idx.iter().map(|&i| header[i].clone()).collect();
    TabularDataset::new(
        DenseMatrix::new(rows, feature_idx.len(), data)?,
        label_idx.map(|_| labels),
        Some(names),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Train on a fraction of the label-0 rows; everything else is test.
    NormalOnlyTrain,
    /// Uniform split ignoring labels.
    Random,
}

/// Splits `ds` into `(train, test)`, each keeping the original row order.
pub fn split_train_test(
    ds: &TabularDataset,
    train_fraction: f64,
    mode: SplitMode,
    seed: u64,
) -> Result<(TabularDataset, TabularDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(
            MODULE,
            format!("train fraction must lie in (0, 1), got {train_fraction}"),
        ));
    }
    let mut candidates: Vec<usize> = match mode {
        SplitMode::Random => (0..ds.len()).collect(),
        SplitMode::NormalOnlyTrain => {
            let labels = ds
                .labels()
                .ok_or_else(|| Error::invalid(MODULE, "normal-only split needs labels"))?;
            (0..ds.len()).filter(|&i| labels[i] == 0).collect()
        }
    };
    let mut r = rng::stream(seed, streams::SPLIT);
    candidates.shuffle(&mut r);
    let n_train = (train_fraction * candidates.len() as f64).round() as usize;
    let mut in_train = vec![false; ds.len()];
    for &i in &candidates[..n_train] {
        in_train[i] = true;
    }
    let train: Vec<usize> = (0..ds.len()).filter(|&i| in_train[i]).collect();
    let test: Vec<usize> = (0..ds.len()).filter(|&i| !in_train[i]).collect();
    Ok((ds.select(&train), ds.select(&test)))
}

/// Fits min-max stats on `train` and applies them to both halves.
pub fn normalize_split(train: &TabularDataset, test: &TabularDataset) -> Result<(TabularDataset, TabularDataset)> {
    let stats = Normalization::fit(train.features())?;
    Ok((train.normalized_with(&stats)?, test.normalized_with(&stats)?))
}
