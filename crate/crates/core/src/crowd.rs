//! Crowd-sourced risk ranking: aggregate noisy binary annotations into
//! per-app posteriors with one-coin Dawid-Skene EM, then score apps with a
//! pairwise ranking model.
//!
//! The ranking stage minimizes the convex quadratic
//! `lambda*||w||^2 + C*||e - B*Y*w||^2`, where each row of `B` encodes one
//! ordered pair (+1 on the preferred app, -1 on the other) and `Y` holds the
//! per-app latent features.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::ingest::table::read_csv;
use crate::ingest::IdMap;

/// One binary vote by one annotator on one app.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub app: usize,
    pub annotator: usize,
    pub label: u8,
}

/// Sparse annotation records with dense app/annotator indices. At most one
/// label per (app, annotator); every app annotated at least once.
#[derive(Debug, Clone)]
pub struct AnnotationSet {
    pub n_apps: usize,
    pub n_annotators: usize,
    records: Vec<Annotation>,
}

impl AnnotationSet {
    pub fn new(n_apps: usize, n_annotators: usize, records: Vec<Annotation>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut app_has = vec![false; n_apps];
        for r in &records {
            if r.app >= n_apps || r.annotator >= n_annotators {
                return Err(Error::Dimension(format!(
                    "annotation ({}, {}) out of range",
                    r.app, r.annotator
                )));
            }
            if r.label > 1 {
                return Err(Error::Invariant(format!(
                    "label {} is not binary",
                    r.label
                )));
            }
            if !seen.insert((r.app, r.annotator)) {
                return Err(Error::Invariant(format!(
                    "app {} labeled twice by annotator {}",
                    r.app, r.annotator
                )));
            }
            app_has[r.app] = true;
        }
        if let Some(a) = app_has.iter().position(|&h| !h) {
            return Err(Error::Invariant(format!("app {a} has no annotations")));
        }
        Ok(AnnotationSet {
            n_apps,
            n_annotators,
            records,
        })
    }

    pub fn records(&self) -> &[Annotation] {
        &self.records
    }
}

/// Load `ann.csv` (app_id, annotator_id, label); returns the dense set plus
/// the id maps used for re-indexing.
pub fn load_annotations(path: &Path) -> Result<(AnnotationSet, IdMap, IdMap)> {
    let file = read_csv(path)?;
    file.expect_header(&["app_id", "annotator_id", "label"])?;
    let mut apps = IdMap::default();
    let mut annotators = IdMap::default();
    let mut records = Vec::with_capacity(file.len());
    for i in 0..file.len() {
        let app = apps.intern(&file.identifier(i, 0)?);
        let annotator = annotators.intern(&file.identifier(i, 1)?);
        let label = file.binary(i, 2)?;
        records.push(Annotation {
            app,
            annotator,
            label,
        });
    }
    let set = AnnotationSet::new(apps.len(), annotators.len(), records)?;
    Ok((set, apps, annotators))
}

/// Load `pairs.csv` (better_app_id, worse_app_id) against the app id map.
pub fn load_pairs(path: &Path, apps: &IdMap) -> Result<Vec<(usize, usize)>> {
    let file = read_csv(path)?;
    file.expect_header(&["better_app_id", "worse_app_id"])?;
    let mut pairs = Vec::with_capacity(file.len());
    for i in 0..file.len() {
        let resolve = |col: usize, name: &str| -> Result<usize> {
            let id = file.identifier(i, col)?;
            apps.get(&id).ok_or_else(|| Error::Cell {
                path: path.to_path_buf(),
                row: i + 1,
                column: name.into(),
                message: format!("app {id:?} not in the annotation set"),
            })
        };
        pairs.push((resolve(0, "better_app_id")?, resolve(1, "worse_app_id")?));
    }
    Ok(pairs)
}

const THETA_MIN: f64 = 0.01;
const THETA_MAX: f64 = 0.99;

/// Result of the EM aggregation: per-annotator reliabilities and per-app
/// posterior probabilities of the positive label.
#[derive(Debug, Clone)]
pub struct CrowdPosterior {
    /// theta_m, clamped to [0.01, 0.99]; excluded annotators sit at 0.5.
    pub reliability: Vec<f64>,
    /// P(app label = 1 | votes) per app.
    pub posterior: Vec<f64>,
    /// Marginal log-likelihood after each M-step.
    pub loglik_trace: Vec<f64>,
    /// Log-likelihood plus Beta(2,2) log-prior (the MAP objective EM
    /// ascends).
    pub map_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl CrowdPosterior {
    /// Posteriors as an A x 1 feature matrix for the ranking stage.
    pub fn features(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.posterior.len(), 1), self.posterior.clone())
            .expect("shape matches")
    }
}

fn marginal_loglik(data: &AnnotationSet, theta: &[f64]) -> f64 {
    // Per app: log( 1/2 * prod_m P(vote | y=1) + 1/2 * prod_m P(vote | y=0) )
    let mut log_if_one = vec![0.0; data.n_apps];
    let mut log_if_zero = vec![0.0; data.n_apps];
    for r in data.records() {
        let t = theta[r.annotator];
        let (p1, p0) = if r.label == 1 {
            (t, 1.0 - t)
        } else {
            (1.0 - t, t)
        };
        log_if_one[r.app] += p1.ln();
        log_if_zero[r.app] += p0.ln();
    }
    let mut ll = 0.0;
    for a in 0..data.n_apps {
        let hi = log_if_one[a].max(log_if_zero[a]);
        ll += hi + ((log_if_one[a] - hi).exp() + (log_if_zero[a] - hi).exp()).ln()
            + 0.5f64.ln();
    }
    ll
}

fn log_beta22_prior(theta: &[f64], active: &[bool]) -> f64 {
    theta
        .iter()
        .zip(active)
        .filter(|&(_, &a)| a)
        .map(|(&t, _)| t.ln() + (1.0 - t).ln())
        .sum()
}

/// One-coin Dawid-Skene EM with a Beta(2,2) prior on each reliability.
///
/// E-step: posterior app labels from votes weighted by `log(theta/(1-theta))`
/// under a uniform class prior. M-step: each reliability becomes the
/// smoothed expected agreement rate `(agreements + 1) / (votes + 2)`,
/// clamped to [0.01, 0.99]. Annotators with no votes are excluded with a
/// warning.
///
/// Reliabilities start at 0.7 for everyone, so the first E-step is a
/// majority vote and the whole procedure is exactly invariant under
/// relabeling of annotator ids.
pub fn aggregate_em(data: &AnnotationSet, max_iter: usize, tol: f64) -> Result<CrowdPosterior> {
    if tol <= 0.0 {
        return Err(Error::Param(format!("tol must be positive, got {tol}")));
    }
    let m = data.n_annotators;
    let mut votes_per = vec![0usize; m];
    for r in data.records() {
        votes_per[r.annotator] += 1;
    }
    let active: Vec<bool> = votes_per.iter().map(|&v| v > 0).collect();
    let mut warnings = Vec::new();
    for (i, &a) in active.iter().enumerate() {
        if !a {
            warnings.push(format!("annotator {i} has no annotations; excluded"));
        }
    }

    let mut theta: Vec<f64> = (0..m).map(|i| if active[i] { 0.7 } else { 0.5 }).collect();

    let mut posterior = vec![0.5; data.n_apps];
    let mut loglik_trace = Vec::new();
    let mut map_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..max_iter {
        // E-step
        let mut logit = vec![0.0; data.n_apps];
        for r in data.records() {
            let t = theta[r.annotator];
            let w = (t / (1.0 - t)).ln();
            logit[r.app] += if r.label == 1 { w } else { -w };
        }
        for (p, &l) in posterior.iter_mut().zip(&logit) {
            *p = 1.0 / (1.0 + (-l).exp());
        }

        // M-step: smoothed expected agreement rate.
        let mut agree = vec![0.0; m];
        for r in data.records() {
            let p = posterior[r.app];
            agree[r.annotator] += if r.label == 1 { p } else { 1.0 - p };
        }
        for i in 0..m {
            if active[i] {
                let t = (agree[i] + 1.0) / (votes_per[i] as f64 + 2.0);
                theta[i] = t.clamp(THETA_MIN, THETA_MAX);
            }
        }

        let ll = marginal_loglik(data, &theta);
        if !ll.is_finite() {
            return Err(Error::NonFinite("EM log-likelihood".into()));
        }
        loglik_trace.push(ll);
        map_trace.push(ll + log_beta22_prior(&theta, &active));
        iterations = iter + 1;

        if map_trace.len() >= 2 {
            let prev = map_trace[map_trace.len() - 2];
            let cur = map_trace[map_trace.len() - 1];
            if (cur - prev).abs() <= tol * (1.0 + prev.abs()) {
                converged = true;
                break;
            }
        }
    }

    Ok(CrowdPosterior {
        reliability: theta,
        posterior,
        loglik_trace,
        map_trace,
        iterations,
        converged,
        warnings,
    })
}

/// Fitted pairwise ranking model.
#[derive(Debug, Clone)]
pub struct RankFit {
    pub w: Vec<f64>,
    pub scores: Vec<f64>,
    pub objective: f64,
    pub cg_iterations: usize,
}

/// Ranking objective `lambda*||w||^2 + C*||e - M w||^2` with `M = B*Y`.
pub fn rank_objective(
    y: &Array2<f64>,
    pairs: &[(usize, usize)],
    lambda: f64,
    c: f64,
    w: &[f64],
) -> f64 {
    let w = Array1::from_vec(w.to_vec());
    let mut obj = lambda * w.dot(&w);
    for &(i, j) in pairs {
        let d = y.row(i).dot(&w) - y.row(j).dot(&w);
        obj += c * (1.0 - d) * (1.0 - d);
    }
    obj
}

/// Minimize the ranking objective exactly by conjugate gradients on its
/// normal equations `(lambda I + C M^T M) w = C M^T e`.
pub fn fit_rank(
    y: &Array2<f64>,
    pairs: &[(usize, usize)],
    lambda: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RankFit> {
    fit_rank_from(y, pairs, lambda, c, tol, max_iter, None)
}

/// Same as [`fit_rank`] but with an explicit CG starting point.
pub fn fit_rank_from(
    y: &Array2<f64>,
    pairs: &[(usize, usize)],
    lambda: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
    start: Option<&[f64]>,
) -> Result<RankFit> {
    if pairs.is_empty() {
        return Err(Error::Param("no ranking pairs given".into()));
    }
    if lambda <= 0.0 || c <= 0.0 {
        return Err(Error::Param(format!(
            "lambda and C must be positive, got {lambda} and {c}"
        )));
    }
    let (a_rows, l) = y.dim();
    for &(i, j) in pairs {
        if i >= a_rows || j >= a_rows {
            return Err(Error::Dimension(format!(
                "pair ({i}, {j}) out of range for {a_rows} apps"
            )));
        }
    }

    // Dense normal equations; L is small by construction.
    let mut a_mat = Array2::<f64>::eye(l) * lambda;
    let mut b = Array1::<f64>::zeros(l);
    for &(i, j) in pairs {
        let d: Array1<f64> = &y.row(i) - &y.row(j);
        for r in 0..l {
            b[r] += c * d[r];
            for s in 0..l {
                a_mat[[r, s]] += c * d[r] * d[s];
            }
        }
    }

    // Conjugate gradients.
    let mut w = match start {
        Some(s) => {
            if s.len() != l {
                return Err(Error::Dimension(format!(
                    "start has {} entries, expected {l}",
                    s.len()
                )));
            }
            Array1::from_vec(s.to_vec())
        }
        None => Array1::zeros(l),
    };
    let mut r = &b - &a_mat.dot(&w);
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    let b_norm = b.dot(&b).sqrt().max(1e-300);
    let mut cg_iterations = 0;
    for _ in 0..max_iter.max(l) {
        if rs.sqrt() <= tol * b_norm {
            break;
        }
        let ap = a_mat.dot(&p);
        let alpha = rs / p.dot(&ap);
        w = &w + &(&p * alpha);
        r = &r - &(&ap * alpha);
        let rs_new = r.dot(&r);
        p = &r + &(&p * (rs_new / rs));
        rs = rs_new;
        cg_iterations += 1;
    }

    let scores = y.dot(&w).to_vec();
    let w = w.to_vec();
    let objective = rank_objective(y, pairs, lambda, c, &w);
    Ok(RankFit {
        w,
        scores,
        objective,
        cg_iterations,
    })
}

/// Apps ranked by score, descending; ties broken by ascending app index.
pub fn risk_ranking(scores: &[f64]) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    order.into_iter().map(|i| (i, scores[i])).collect()
}
