//! Multi-view feature datasets: a numeric design matrix whose columns are
//! partitioned into named views, plus one-hot class labels.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::split::split_indices;
use crate::ingest::table::{fmt_float, read_csv, write_bytes, TableWriter};

/// Disjoint, exhaustive partition of feature columns into named views.
/// Views are kept sorted by name so iteration order is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPartition {
    views: Vec<(String, Vec<usize>)>,
    feature_count: usize,
}

impl ViewPartition {
    pub fn new(map: BTreeMap<String, Vec<usize>>, feature_count: usize) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::Invariant("view partition has no views".into()));
        }
        let mut covered = vec![false; feature_count];
        for (name, cols) in &map {
            if cols.is_empty() {
                return Err(Error::Invariant(format!("view {name:?} is empty")));
            }
            for &c in cols {
                if c >= feature_count {
                    return Err(Error::Invariant(format!(
                        "view {name:?} references feature index {c} out of range (p = {feature_count})"
                    )));
                }
                if covered[c] {
                    return Err(Error::Invariant(format!(
                        "view partition not disjoint: feature index {c} appears twice"
                    )));
                }
                covered[c] = true;
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(Error::Invariant("view partition not exhaustive".into()));
        }
        let views = map
            .into_iter()
            .map(|(name, mut cols)| {
                cols.sort_unstable();
                (name, cols)
            })
            .collect();
        Ok(ViewPartition {
            views,
            feature_count,
        })
    }

    /// Build from view-name -> feature-name lists against a header.
    pub fn from_names(
        map: &BTreeMap<String, Vec<String>>,
        feature_names: &[String],
    ) -> Result<Self> {
        let index: BTreeMap<&str, usize> = feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut resolved = BTreeMap::new();
        for (view, names) in map {
            let mut cols = Vec::with_capacity(names.len());
            for n in names {
                let &i = index.get(n.as_str()).ok_or_else(|| {
                    Error::Invariant(format!("view {view:?} names unknown feature {n:?}"))
                })?;
                cols.push(i);
            }
            resolved.insert(view.clone(), cols);
        }
        ViewPartition::new(resolved, feature_names.len())
    }

    pub fn views(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.views.iter().map(|(n, c)| (n.as_str(), c.as_slice()))
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }
}

/// n samples with p numeric features split into views, plus one-hot labels
/// over K >= 2 classes.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    pub sample_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    /// One-hot, n x K; row order matches `x`.
    pub labels: Array2<f64>,
    pub label_names: Vec<String>,
    pub views: ViewPartition,
}

impl MultiViewDataset {
    pub fn new(
        sample_ids: Vec<String>,
        feature_names: Vec<String>,
        x: Array2<f64>,
        labels: Array2<f64>,
        label_names: Vec<String>,
        views: ViewPartition,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        let (ln, k) = labels.dim();
        if n == 0 {
            return Err(Error::Invariant("dataset has no samples".into()));
        }
        if k < 2 {
            return Err(Error::Invariant(format!(
                "need at least 2 classes, found {k}"
            )));
        }
        if ln != n || sample_ids.len() != n {
            return Err(Error::Dimension(format!(
                "rows: x has {n}, labels {ln}, ids {}",
                sample_ids.len()
            )));
        }
        if feature_names.len() != p || views.feature_count() != p {
            return Err(Error::Dimension(format!(
                "features: x has {p}, names {}, views cover {}",
                feature_names.len(),
                views.feature_count()
            )));
        }
        if label_names.len() != k {
            return Err(Error::Dimension(format!(
                "labels: matrix has {k} columns, {} names",
                label_names.len()
            )));
        }
        for (i, row) in labels.axis_iter(Axis(0)).enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || zeros != k - 1 {
                return Err(Error::Invariant(format!(
                    "label row {i} is not one-hot"
                )));
            }
        }
        Ok(MultiViewDataset {
            sample_ids,
            feature_names,
            x,
            labels,
            label_names,
            views,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.labels.ncols()
    }

    /// Class index of sample `i`.
    pub fn class_of(&self, i: usize) -> usize {
        self.labels
            .row(i)
            .iter()
            .position(|&v| v == 1.0)
            .expect("one-hot row")
    }

    /// Deterministic train/test split over sample rows.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let (train_idx, test_idx) = split_indices(self.n(), fraction, seed)?;
        Ok((self.take(&train_idx), self.take(&test_idx)))
    }

    fn take(&self, idx: &[usize]) -> Self {
        let x = self.x.select(Axis(0), idx);
        let labels = self.labels.select(Axis(0), idx);
        MultiViewDataset {
            sample_ids: idx.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            x,
            labels,
            label_names: self.label_names.clone(),
            views: self.views.clone(),
        }
    }
}

/// Load `multiview.csv` (app_id, label, f1..fp) plus `views.json`
/// ({"view-name": ["f1", "f3", ...]}).
pub fn load_multiview(data_path: &Path, views_path: &Path) -> Result<MultiViewDataset> {
    let file = read_csv(data_path)?;
    let feature_names = file.expect_header_prefix(&["app_id", "label"])?;
    if feature_names.is_empty() {
        return Err(Error::Invariant(format!(
            "{}: no feature columns after app_id,label",
            data_path.display()
        )));
    }
    let n = file.len();
    if n == 0 {
        return Err(Error::Invariant(format!(
            "{}: no data rows",
            data_path.display()
        )));
    }
    let p = feature_names.len();

    let mut sample_ids = Vec::with_capacity(n);
    let mut raw_labels = Vec::with_capacity(n);
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        sample_ids.push(file.identifier(i, 0)?);
        raw_labels.push(file.identifier(i, 1)?);
        for j in 0..p {
            x[[i, j]] = file.numeric(i, 2 + j)?;
        }
    }

    let mut label_names: Vec<String> = raw_labels.clone();
    label_names.sort();
    label_names.dedup();
    if label_names.len() < 2 {
        return Err(Error::Invariant(format!(
            "{}: need at least 2 distinct labels, found {}",
            data_path.display(),
            label_names.len()
        )));
    }
    let mut labels = Array2::zeros((n, label_names.len()));
    for (i, l) in raw_labels.iter().enumerate() {
        let k = label_names.binary_search(l).expect("label present");
        labels[[i, k]] = 1.0;
    }

    let views_text = std::fs::read_to_string(views_path).map_err(|e| Error::io(views_path, e))?;
    let view_map: BTreeMap<String, Vec<String>> = serde_json::from_str(&views_text)
        .map_err(|e| Error::Invariant(format!("{}: bad views json: {e}", views_path.display())))?;
    let views = ViewPartition::from_names(&view_map, &feature_names)?;

    MultiViewDataset::new(sample_ids, feature_names, x, labels, label_names, views)
}

/// Write the dataset back in the exact form `load_multiview` reads.
pub fn write_multiview(d: &MultiViewDataset, data_path: &Path, views_path: &Path) -> Result<()> {
    let mut header: Vec<&str> = vec!["app_id", "label"];
    header.extend(d.feature_names.iter().map(|s| s.as_str()));
    let mut w = TableWriter::create(data_path, &header)?;
    for i in 0..d.n() {
        let mut row = vec![d.sample_ids[i].clone(), d.label_names[d.class_of(i)].clone()];
        for j in 0..d.p() {
            row.push(fmt_float(d.x[[i, j]]));
        }
        w.write_row(&row)?;
    }
    w.finish()?;

    let map: BTreeMap<&str, Vec<&str>> = d
        .views
        .views()
        .map(|(name, cols)| {
            (
                name,
                cols.iter()
                    .map(|&c| d.feature_names[c].as_str())
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let json = serde_json::to_string_pretty(&map).expect("serializable");
    write_bytes(views_path, json.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn views_of(pairs: &[(&str, &[usize])], p: usize) -> ViewPartition {
        let map = pairs
            .iter()
            .map(|(n, c)| (n.to_string(), c.to_vec()))
            .collect();
        ViewPartition::new(map, p).unwrap()
    }

    #[test]
    fn partition_must_be_exhaustive() {
        let map: BTreeMap<String, Vec<usize>> =
            [("a".to_string(), vec![0, 1])].into_iter().collect();
        let err = ViewPartition::new(map, 3).unwrap_err();
        assert!(err.to_string().contains("not exhaustive"), "{err}");
    }

    #[test]
    fn partition_must_be_disjoint() {
        let map: BTreeMap<String, Vec<usize>> = [
            ("a".to_string(), vec![0, 1]),
            ("b".to_string(), vec![1, 2]),
        ]
        .into_iter()
        .collect();
        let err = ViewPartition::new(map, 3).unwrap_err();
        assert!(err.to_string().contains("not disjoint"), "{err}");
    }

    #[test]
    fn label_rows_one_hot_enforced() {
        let x = Array2::zeros((2, 2));
        let mut labels = Array2::zeros((2, 2));
        labels[[0, 0]] = 1.0;
        labels[[1, 0]] = 0.5;
        labels[[1, 1]] = 0.5;
        let err = MultiViewDataset::new(
            vec!["a".into(), "b".into()],
            vec!["f1".into(), "f2".into()],
            x,
            labels,
            vec!["neg".into(), "pos".into()],
            views_of(&[("v", &[0, 1])], 2),
        )
        .unwrap_err();
        assert!(err.to_string().contains("not one-hot"), "{err}");
    }
}
