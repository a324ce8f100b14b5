//! Observed survival data: ingestion, validation, serialization and
//! covariate standardization.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Column mapping from a delimited file onto the observed-data fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub time_col: String,
    pub event_col: String,
    pub treatment_col: String,
    pub mediator_col: String,
    /// Explicit covariate list; `None` means every remaining numeric column.
    pub covariates: Option<Vec<String>>,
    /// Optional mediator measurement time; rows followed up for less than it are rejected.
    pub mediator_time_col: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            time_col: "time".into(),
            event_col: "event".into(),
            treatment_col: "trt".into(),
            mediator_col: "mediator".into(),
            covariates: None,
            mediator_time_col: None,
        }
    }
}

/// Right-censored observations `(U, delta, W, M, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    /// Follow-up time `U = min(T, C)`, strictly positive.
    pub time: Vec<f64>,
    /// `true` when the event was observed.
    pub event: Vec<bool>,
    /// `true` for the treated arm.
    pub treatment: Vec<bool>,
    pub mediator: Vec<f64>,
    /// n x p baseline covariates.
    pub covariates: Array2<f64>,
    pub covariate_names: Vec<String>,
}

/// Result of reading a delimited file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: SurvivalDataset,
    /// Rows dropped because a used column was missing.
    pub dropped_missing: usize,
    /// Rows rejected because follow-up ended before the mediator was measured.
    pub rejected_mediator_timing: usize,
}

const MISSING_TOKENS: [&str; 6] = ["", "NA", "na", "NaN", "nan", "null"];

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.contains(&cell.trim())
}

impl SurvivalDataset {
    pub fn new(
        time: Vec<f64>,
        event: Vec<bool>,
        treatment: Vec<bool>,
        mediator: Vec<f64>,
        covariates: Array2<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let ds = Self {
            time,
            event,
            treatment,
            mediator,
            covariates,
            covariate_names,
        };
        ds.check_shape()?;
        Ok(ds)
    }

    fn check_shape(&self) -> Result<(), DataError> {
        let n = self.time.len();
        if self.event.len() != n
            || self.treatment.len() != n
            || self.mediator.len() != n
            || self.covariates.nrows() != n
        {
            return Err(DataError::Invariant("column lengths differ".into()));
        }
        if self.covariates.ncols() != self.covariate_names.len() {
            return Err(DataError::Invariant(
                "covariate names do not match covariate columns".into(),
            ));
        }
        if let Some(i) = self.time.iter().position(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(DataError::Invariant(format!("row {i}: time must be positive")));
        }
        if self
            .mediator
            .iter()
            .chain(self.covariates.iter())
            .any(|v| !v.is_finite())
        {
            return Err(DataError::Invariant("non-finite mediator or covariate".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|w| **w).count()
    }

    pub fn treatment_f64(&self) -> Vec<f64> {
        self.treatment.iter().map(|&w| if w { 1.0 } else { 0.0 }).collect()
    }

    pub fn event_rate(&self) -> f64 {
        self.n_events() as f64 / self.n().max(1) as f64
    }

    /// Checks required before any model is fitted.
    pub fn validate_for_fitting(&self) -> Result<(), DataError> {
        self.check_shape()?;
        if self.n_events() == 0 {
            return Err(DataError::Invariant("no events observed".into()));
        }
        let treated = self.n_treated();
        if treated == 0 || treated == self.n() {
            return Err(DataError::Invariant("both treatment arms must be present".into()));
        }
        Ok(())
    }

    /// Rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut cov = Array2::<f64>::zeros((rows.len(), self.p()));
        for (r, &i) in rows.iter().enumerate() {
            cov.row_mut(r).assign(&self.covariates.row(i));
        }
        Self {
            time: rows.iter().map(|&i| self.time[i]).collect(),
            event: rows.iter().map(|&i| self.event[i]).collect(),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            mediator: rows.iter().map(|&i| self.mediator[i]).collect(),
            covariates: cov,
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Same outcome, treatment and mediator with covariate rows reordered:
    /// row i receives covariates of row `perm[i]`.
    pub fn with_permuted_covariates(&self, perm: &[usize]) -> Self {
        let mut cov = Array2::<f64>::zeros(self.covariates.dim());
        for (r, &i) in perm.iter().enumerate() {
            cov.row_mut(r).assign(&self.covariates.row(i));
        }
        Self {
            covariates: cov,
            ..self.clone()
        }
    }

    /// Comma-separated text with a header row; numbers use the shortest
    /// representation that parses back to the same bits.
    pub fn to_csv(&self, schema: &Schema) -> String {
        let mut out = String::new();
        let mut header = vec![
            schema.time_col.clone(),
            schema.event_col.clone(),
            schema.treatment_col.clone(),
            schema.mediator_col.clone(),
        ];
        header.extend(self.covariate_names.iter().cloned());
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n() {
            let mut fields = vec![
                format!("{}", self.time[i]),
                (self.event[i] as u8).to_string(),
                (self.treatment[i] as u8).to_string(),
                format!("{}", self.mediator[i]),
            ];
            fields.extend(self.covariates.row(i).iter().map(|v| format!("{v}")));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Read a dataset from a delimited file.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Ingested, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&text, schema)
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64, DataError> {
    let v: f64 = cell.trim().parse().map_err(|_| DataError::BadCell {
        row,
        column: column.to_string(),
        message: format!("non-numeric value `{}`", cell.trim()),
    })?;
    if !v.is_finite() {
        return Err(DataError::BadCell {
            row,
            column: column.to_string(),
            message: "non-finite value".into(),
        });
    }
    Ok(v)
}

fn parse_binary(cell: &str, row: usize, column: &str) -> Result<bool, DataError> {
    let v = parse_number(cell, row, column)?;
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(DataError::BadCell {
            row,
            column: column.to_string(),
            message: format!("expected 0 or 1, got {v}"),
        })
    }
}

/// Parse comma-separated text. Row numbers in errors are 1-based data rows.
pub fn parse_dataset(text: &str, schema: &Schema) -> Result<Ingested, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| DataError::Io {
            path: "<input>".into(),
            message: e.to_string(),
        })?;
        // Skip completely blank lines.
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push(rec);
    }
    let mut iter = records.into_iter();
    let header = iter.next().ok_or(DataError::EmptyInput)?;
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    let rows: Vec<csv::StringRecord> = iter.collect();
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != header.len() {
            return Err(DataError::RaggedRow {
                row: r + 1,
                found: rec.len(),
                expected: header.len(),
            });
        }
    }

    let col = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let time_idx = col(&schema.time_col)?;
    let event_idx = col(&schema.event_col)?;
    let trt_idx = col(&schema.treatment_col)?;
    let med_idx = col(&schema.mediator_col)?;
    let mtime_idx = schema.mediator_time_col.as_deref().map(col).transpose()?;
    let reserved: Vec<usize> = [Some(time_idx), Some(event_idx), Some(trt_idx), Some(med_idx), mtime_idx]
        .into_iter()
        .flatten()
        .collect();

    let cov_idx: Vec<usize> = match &schema.covariates {
        Some(list) => list.iter().map(|c| col(c)).collect::<Result<_, _>>()?,
        None => (0..header.len())
            .filter(|j| !reserved.contains(j))
            .filter(|&j| {
                rows.iter()
                    .all(|rec| is_missing(&rec[j]) || rec[j].trim().parse::<f64>().is_ok())
            })
            .collect(),
    };

    let mut used: Vec<usize> = reserved.clone();
    used.extend(cov_idx.iter().copied());

    let mut time = Vec::new();
    let mut event = Vec::new();
    let mut treatment = Vec::new();
    let mut mediator = Vec::new();
    let mut cov_flat = Vec::new();
    let mut dropped_missing = 0;
    let mut rejected_timing = 0;

    for (r, rec) in rows.iter().enumerate() {
        let row = r + 1;
        if used.iter().any(|&j| is_missing(&rec[j])) {
            dropped_missing += 1;
            continue;
        }
        let u = parse_number(&rec[time_idx], row, &header[time_idx])?;
        if u <= 0.0 {
            return Err(DataError::BadCell {
                row,
                column: header[time_idx].clone(),
                message: format!("follow-up time must be positive, got {u}"),
            });
        }
        let d = parse_binary(&rec[event_idx], row, &header[event_idx])?;
        let w = parse_binary(&rec[trt_idx], row, &header[trt_idx])?;
        let m = parse_number(&rec[med_idx], row, &header[med_idx])?;
        let xs: Vec<f64> = cov_idx
            .iter()
            .map(|&j| parse_number(&rec[j], row, &header[j]))
            .collect::<Result<_, _>>()?;
        if let Some(j) = mtime_idx {
            let mt = parse_number(&rec[j], row, &header[j])?;
            if u < mt {
                rejected_timing += 1;
                continue;
            }
        }
        time.push(u);
        event.push(d);
        treatment.push(w);
        mediator.push(m);
        cov_flat.extend(xs);
    }

    let n = time.len();
    if n == 0 {
        return Err(DataError::NoRows {
            dropped: dropped_missing + rejected_timing,
        });
    }
    let covariates =
        Array2::from_shape_vec((n, cov_idx.len()), cov_flat).map_err(|e| DataError::Invariant(e.to_string()))?;
    let covariate_names = cov_idx.iter().map(|&j| header[j].clone()).collect();
    let dataset = SurvivalDataset::new(time, event, treatment, mediator, covariates, covariate_names)?;
    Ok(Ingested {
        dataset,
        dropped_missing,
        rejected_mediator_timing: rejected_timing,
    })
}

/// Per-column centering and scaling applied to the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Columns with zero variance; passed through unchanged.
    pub constant: Vec<bool>,
}

impl Standardization {
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if !self.constant[j] {
                col.mapv_inplace(|v| (v - self.mean[j]) / self.scale[j]);
            }
        }
        out
    }

    pub fn invert(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut out = z.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if !self.constant[j] {
                col.mapv_inplace(|v| v * self.scale[j] + self.mean[j]);
            }
        }
        out
    }
}

/// Fit a column-wise standardization (sample mean, n - 1 standard deviation).
pub fn fit_standardization(x: &Array2<f64>) -> Standardization {
    let n = x.nrows();
    let mut mean = Vec::with_capacity(x.ncols());
    let mut scale = Vec::with_capacity(x.ncols());
    let mut constant = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let m = col.sum() / n.max(1) as f64;
        let var = if n > 1 {
            col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let sd = var.sqrt();
        let is_const = !(sd > 0.0) || col.iter().all(|v| *v == col[0]);
        mean.push(m);
        scale.push(if is_const { 1.0 } else { sd });
        constant.push(is_const);
    }
    Standardization { mean, scale, constant }
}

/// Standardize the covariates of a dataset. Constant columns pass through
/// with scale 1 and are flagged in the returned parameters.
pub fn standardize_covariates(ds: &SurvivalDataset) -> (SurvivalDataset, Standardization) {
    let params = fit_standardization(&ds.covariates);
    let mut out = ds.clone();
    out.covariates = params.apply(&ds.covariates);
    (out, params)
}
