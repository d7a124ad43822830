//! Observational study tables for campaign effect estimation: covariates,
//! a binary treatment flag and a numeric outcome per unit.

use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::ingest::split::split_indices;
use crate::ingest::table::{fmt_float, read_csv, TableWriter};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    /// n x d covariate matrix.
    pub x: Array2<f64>,
    pub treatment: Vec<u8>,
    pub outcome: Vec<f64>,
    pub covariate_names: Vec<String>,
}

impl StudyTable {
    pub fn new(
        x: Array2<f64>,
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 {
            return Err(Error::Invariant("study has no units".into()));
        }
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::Dimension(format!(
                "study rows: x {n}, treatment {}, outcome {}",
                treatment.len(),
                outcome.len()
            )));
        }
        if covariate_names.len() != d {
            return Err(Error::Dimension(format!(
                "study covariates: x has {d}, names {}",
                covariate_names.len()
            )));
        }
        Ok(StudyTable {
            x,
            treatment,
            outcome,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 1).count()
    }

    /// Both treatment arms must be present before any effect estimation.
    pub fn require_both_arms(&self) -> Result<()> {
        let t = self.n_treated();
        if t == 0 || t == self.n() {
            return Err(Error::Degenerate(format!(
                "treatment has a single class ({} of {} treated)",
                t,
                self.n()
            )));
        }
        Ok(())
    }

    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let (a, b) = split_indices(self.n(), fraction, seed)?;
        Ok((self.take(&a), self.take(&b)))
    }

    fn take(&self, idx: &[usize]) -> Self {
        StudyTable {
            x: self.x.select(Axis(0), idx),
            treatment: idx.iter().map(|&i| self.treatment[i]).collect(),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
            covariate_names: self.covariate_names.clone(),
        }
    }
}

/// Load `study.csv` (outcome, treatment, x1..xd).
pub fn load_study(path: &Path) -> Result<StudyTable> {
    let file = read_csv(path)?;
    let covariate_names = file.expect_header_prefix(&["outcome", "treatment"])?;
    if covariate_names.is_empty() {
        return Err(Error::Invariant(format!(
            "{}: no covariate columns after outcome,treatment",
            path.display()
        )));
    }
    let n = file.len();
    if n == 0 {
        return Err(Error::Invariant(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let d = covariate_names.len();
    let mut x = Array2::zeros((n, d));
    let mut treatment = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for i in 0..n {
        outcome.push(file.numeric(i, 0)?);
        treatment.push(file.binary(i, 1)?);
        for j in 0..d {
            x[[i, j]] = file.numeric(i, 2 + j)?;
        }
    }
    StudyTable::new(x, treatment, outcome, covariate_names)
}

pub fn write_study(s: &StudyTable, path: &Path) -> Result<()> {
    let mut header: Vec<&str> = vec!["outcome", "treatment"];
    header.extend(s.covariate_names.iter().map(|n| n.as_str()));
    let mut w = TableWriter::create(path, &header)?;
    for i in 0..s.n() {
        let mut row = vec![fmt_float(s.outcome[i]), s.treatment[i].to_string()];
        for j in 0..s.d() {
            row.push(fmt_float(s.x[[i, j]]));
        }
        w.write_row(&row)?;
    }
    w.finish()
}
