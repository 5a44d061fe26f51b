//! Observed trial data: validation, stratification and CSV ingestion.
//!
//! A [`TrialDataset`] holds outcomes, binary assignments, stratum labels and a
//! covariate matrix for `n` units. Stratum labels are arbitrary strings; they
//! are mapped to a dense index in sorted-label order (numeric order when every
//! label parses as an integer).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    outcomes: Vec<f64>,
    assignments: Vec<u8>,
    strata: Vec<usize>,
    labels: Vec<String>,
    covariates: DMatrix<f64>,
    covariate_names: Vec<String>,
}

impl TrialDataset {
    /// Build and validate a dataset.
    ///
    /// `covariates` is `n x p`; `covariate_names` may be empty, in which case
    /// columns are named `x1..xp`.
    pub fn new<S: AsRef<str>>(
        outcomes: Vec<f64>,
        assignments: Vec<u8>,
        strata: &[S],
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = outcomes.len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 units, got {n}")));
        }
        if assignments.len() != n || strata.len() != n || covariates.nrows() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: {} outcomes, {} assignments, {} strata, {} covariate rows",
                n,
                assignments.len(),
                strata.len(),
                covariates.nrows()
            )));
        }
        if let Some(row) = assignments.iter().position(|&a| a > 1) {
            return Err(Error::InvalidAssignment {
                row: row + 1,
                value: assignments[row].to_string(),
            });
        }
        if let Some(row) = outcomes.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite outcome at row {}", row + 1)));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate value".into()));
        }
        if strata.iter().any(|s| s.as_ref().trim().is_empty()) {
            return Err(Error::InvalidData("missing stratum label".into()));
        }
        let p = covariates.ncols();
        let covariate_names = if covariate_names.is_empty() {
            (1..=p).map(|j| format!("x{j}")).collect()
        } else if covariate_names.len() == p {
            covariate_names
        } else {
            return Err(Error::InvalidData(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                p
            )));
        };

        let (labels, strata) = index_labels(strata);

        Ok(Self {
            outcomes,
            assignments,
            strata,
            labels,
            covariates,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    /// Number of distinct strata.
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn assignments(&self) -> &[u8] {
        &self.assignments
    }

    /// Dense 0-based stratum index per unit.
    pub fn strata(&self) -> &[usize] {
        &self.strata
    }

    /// Stratum labels in dense-index order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Same units with outcomes replaced.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        if outcomes.len() != self.n() {
            return Err(Error::InvalidData("outcome length mismatch".into()));
        }
        if outcomes.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidData("non-finite outcome".into()));
        }
        Ok(Self {
            outcomes,
            ..self.clone()
        })
    }

    /// Keep only the first `p` covariate columns.
    pub fn with_leading_covariates(&self, p: usize) -> Result<Self> {
        if p > self.p() {
            return Err(Error::Dimension(format!("asked for {p} of {} covariates", self.p())));
        }
        Ok(Self {
            covariates: self.covariates.columns(0, p).into_owned(),
            covariate_names: self.covariate_names[..p].to_vec(),
            ..self.clone()
        })
    }
}

/// Distinct labels in sorted order and the 0-based index of each input label.
pub fn index_labels<S: AsRef<str>>(strata: &[S]) -> (Vec<String>, Vec<usize>) {
    let labels = sorted_labels(strata.iter().map(|s| s.as_ref()));
    let lookup: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let index = strata.iter().map(|s| lookup[s.as_ref()]).collect();
    (labels, index)
}

fn sorted_labels<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let distinct: BTreeSet<&str> = labels.collect();
    let mut out: Vec<String> = distinct.into_iter().map(str::to_string).collect();
    let numeric: Option<Vec<i64>> = out.iter().map(|l| l.trim().parse::<i64>().ok()).collect();
    if let Some(keys) = numeric {
        let mut paired: Vec<(i64, String)> = keys.into_iter().zip(out).collect();
        paired.sort();
        out = paired.into_iter().map(|(_, l)| l).collect();
    }
    out
}

/// Per-stratum counts, proportions and arm means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub index: usize,
    pub label: String,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    /// `n_k / n`
    pub weight: f64,
    /// `n_k1 / n_k`
    pub treated_fraction: f64,
    pub treated_mean: Option<f64>,
    pub control_mean: Option<f64>,
    pub units: Vec<usize>,
}

impl StratumSummary {
    pub fn has_both_arms(&self) -> bool {
        self.n_treated > 0 && self.n_control > 0
    }
}

/// One summary per stratum, in label order.
pub fn build_strata(dataset: &TrialDataset) -> Vec<StratumSummary> {
    let n = dataset.n();
    let mut units: Vec<Vec<usize>> = vec![Vec::new(); dataset.k()];
    for (i, &s) in dataset.strata().iter().enumerate() {
        units[s].push(i);
    }
    units
        .into_iter()
        .enumerate()
        .map(|(index, units)| {
            let mut sums = [0.0f64; 2];
            let mut counts = [0usize; 2];
            for &i in &units {
                let a = dataset.assignments[i] as usize;
                sums[a] += dataset.outcomes[i];
                counts[a] += 1;
            }
            let nk = units.len();
            let mean = |a: usize| (counts[a] > 0).then(|| sums[a] / counts[a] as f64);
            StratumSummary {
                index,
                label: dataset.labels[index].clone(),
                n: nk,
                n_treated: counts[1],
                n_control: counts[0],
                weight: nk as f64 / n as f64,
                treated_fraction: counts[1] as f64 / nk as f64,
                treated_mean: mean(1),
                control_mean: mean(0),
                units,
            }
        })
        .collect()
}

/// Treatment arm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn indicator(self, assignment: u8) -> f64 {
        match self {
            Arm::Treated => assignment as f64,
            Arm::Control => 1.0 - assignment as f64,
        }
    }
}

/// The rows of one stratum, pulled out of the dataset for the estimators.
#[derive(Debug, Clone)]
pub struct StratumBlock {
    pub summary: StratumSummary,
    /// `n_k x p`
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub a: Vec<u8>,
}

impl StratumBlock {
    pub fn n(&self) -> usize {
        self.summary.n
    }

    pub fn count(&self, arm: Arm) -> usize {
        match arm {
            Arm::Treated => self.summary.n_treated,
            Arm::Control => self.summary.n_control,
        }
    }

    pub fn pi(&self) -> f64 {
        self.summary.treated_fraction
    }

    pub fn label(&self) -> &str {
        &self.summary.label
    }

    pub fn arm_mean(&self, arm: Arm) -> Result<f64> {
        let m = match arm {
            Arm::Treated => self.summary.treated_mean,
            Arm::Control => self.summary.control_mean,
        };
        m.ok_or_else(|| {
            Error::degenerate(
                self.label(),
                format!("no {} units", if arm == Arm::Treated { "treated" } else { "control" }),
            )
        })
    }

    /// Indicator vector `1{A_i = arm}`.
    pub fn indicator(&self, arm: Arm) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|&a| arm.indicator(a)))
    }

    /// `1{A_i = arm} * Y_i`
    pub fn arm_outcomes(&self, arm: Arm) -> DVector<f64> {
        self.indicator(arm).component_mul(&self.y)
    }

    pub fn require_both_arms(&self) -> Result<()> {
        if self.summary.n_treated == 0 {
            return Err(Error::degenerate(self.label(), "no treated units"));
        }
        if self.summary.n_control == 0 {
            return Err(Error::degenerate(self.label(), "no control units"));
        }
        Ok(())
    }
}

/// A dataset split into stratum blocks.
#[derive(Debug, Clone)]
pub struct Stratified {
    n: usize,
    p: usize,
    blocks: Vec<StratumBlock>,
}

impl Stratified {
    pub fn new(dataset: &TrialDataset) -> Self {
        let blocks = build_strata(dataset)
            .into_iter()
            .map(|summary| {
                let x = dataset.covariates.select_rows(summary.units.iter());
                let y = DVector::from_iterator(
                    summary.n,
                    summary.units.iter().map(|&i| dataset.outcomes[i]),
                );
                let a = summary.units.iter().map(|&i| dataset.assignments[i]).collect();
                StratumBlock { summary, x, y, a }
            })
            .collect();
        Self {
            n: dataset.n(),
            p: dataset.p(),
            blocks,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn blocks(&self) -> &[StratumBlock] {
        &self.blocks
    }

    pub fn require_both_arms(&self) -> Result<()> {
        self.blocks.iter().try_for_each(StratumBlock::require_both_arms)
    }
}

/// Column names used when reading or writing a trial CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub outcome: String,
    pub arm: String,
    pub stratum: String,
    /// `None` takes every remaining column, in file order.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            outcome: "y".into(),
            arm: "arm".into(),
            stratum: "stratum".into(),
            covariates: None,
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_cell(record: &csv::StringRecord, col: usize, name: &str, row: usize) -> Result<f64> {
    let raw = record.get(col).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NonNumeric {
            column: name.to_string(),
            row,
            value: raw.to_string(),
        })
}

/// Read a trial from a headered, comma-separated UTF-8 file.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<TrialDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &ColumnSchema) -> Result<TrialDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Empty("no header row".into()));
    }
    let y_col = column_index(&headers, &schema.outcome)?;
    let a_col = column_index(&headers, &schema.arm)?;
    let s_col = column_index(&headers, &schema.stratum)?;
    let cov_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(j, _)| ![y_col, a_col, s_col].contains(j))
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let cov_cols = cov_names
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;

    let mut outcomes = Vec::new();
    let mut assignments = Vec::new();
    let mut strata = Vec::new();
    let mut cov_values = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        outcomes.push(parse_cell(&record, y_col, &schema.outcome, row)?);
        let raw_arm = record.get(a_col).unwrap_or("").trim();
        let arm = match raw_arm.parse::<f64>() {
            Ok(v) if v == 0.0 => 0u8,
            Ok(v) if v == 1.0 => 1u8,
            _ => {
                return Err(Error::InvalidAssignment {
                    row,
                    value: raw_arm.to_string(),
                })
            }
        };
        assignments.push(arm);
        let label = record.get(s_col).unwrap_or("").trim();
        if label.is_empty() {
            return Err(Error::InvalidData(format!("missing stratum label at data row {row}")));
        }
        strata.push(label.to_string());
        for (&c, name) in cov_cols.iter().zip(&cov_names) {
            cov_values.push(parse_cell(&record, c, name, row)?);
        }
    }
    if outcomes.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    let covariates = DMatrix::from_row_slice(outcomes.len(), cov_cols.len(), &cov_values);
    TrialDataset::new(outcomes, assignments, &strata, covariates, cov_names)
}

/// Write a dataset so that [`load_csv`] reproduces it bit-for-bit.
pub fn save_csv(dataset: &TrialDataset, path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(dataset, file, schema)
}

pub fn write_csv<W: std::io::Write>(
    dataset: &TrialDataset,
    writer: W,
    schema: &ColumnSchema,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![schema.outcome.clone(), schema.arm.clone(), schema.stratum.clone()];
    header.extend(dataset.covariate_names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut rec = vec![
            format!("{:?}", dataset.outcomes[i]),
            dataset.assignments[i].to_string(),
            dataset.labels[dataset.strata[i]].clone(),
        ];
        rec.extend((0..dataset.p()).map(|j| format!("{:?}", dataset.covariates[(i, j)])));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}
