//! Campaign effectiveness and growth budgeting.
//!
//! Effect estimation follows the propensity-score playbook: model
//! `P(T=1 | X)` with a probit or logit link over polynomially expanded
//! covariates, check the balancing hypothesis per propensity stratum, then
//! estimate the average treatment effect (ATE) and the effect on the treated
//! (ATT) by inverse probability weighting or stratification.
//!
//! Budgeting fits per-channel saturating response curves
//! `users(s) = cap * (1 - exp(-b*s))` and allocates a total budget greedily
//! by marginal users-per-unit-spend subject to per-channel market capacity.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::StudyTable;

/// Propensity scores are clipped into `[EPS_CLIP, 1 - EPS_CLIP]`.
pub const EPS_CLIP: f64 = 0.01;

/// Linear predictor bound beyond which the likelihood is treated as
/// unbounded (perfect separation).
const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Normal CDF link.
    Probit,
    Logit,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Probit => normal_cdf(eta),
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        }
    }
}

/// Fitted propensity model over degree-expanded covariates. Covariate
/// columns are standardized internally; the model carries the scaling so
/// scoring uses raw study rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityModel {
    pub link: Link,
    pub degree: u32,
    /// Coefficients over [intercept, standardized expanded columns].
    pub coef: Vec<f64>,
    col_mean: Vec<f64>,
    col_scale: Vec<f64>,
    pub eps_clip: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Expand covariate rows: linear terms for degree 1, plus squares and cross
/// terms for degree 2. The intercept is added separately.
fn expand_row(row: &[f64], degree: u32, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(row);
    if degree == 2 {
        for i in 0..row.len() {
            for j in i..row.len() {
                out.push(row[i] * row[j]);
            }
        }
    }
}

fn expanded_dim(d: usize, degree: u32) -> usize {
    match degree {
        1 => d,
        2 => d + d * (d + 1) / 2,
        _ => unreachable!("degree validated"),
    }
}

fn build_design(x: &Array2<f64>, degree: u32) -> Array2<f64> {
    let n = x.nrows();
    let q = expanded_dim(x.ncols(), degree);
    let mut design = Array2::zeros((n, q));
    let mut buf = Vec::with_capacity(q);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).to_vec();
        expand_row(&row, degree, &mut buf);
        for (j, &v) in buf.iter().enumerate() {
            design[[i, j]] = v;
        }
    }
    design
}

/// Maximum-likelihood propensity fit by gradient ascent with backtracking.
///
/// Errors with [`Error::Degenerate`] when the linear predictor escapes
/// toward infinity, which signals perfect separation.
pub fn fit_propensity(study: &StudyTable, link: Link, degree: u32) -> Result<PropensityModel> {
    if !(degree == 1 || degree == 2) {
        return Err(Error::Param(format!("degree must be 1 or 2, got {degree}")));
    }
    study.require_both_arms()?;

    let design = build_design(&study.x, degree);
    let (n, q) = design.dim();

    // Standardize columns; constant columns keep scale 1 and contribute
    // nothing beyond the intercept.
    let mut col_mean = vec![0.0; q];
    let mut col_scale = vec![1.0; q];
    for j in 0..q {
        let col = design.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        col_mean[j] = mean;
        if var > 1e-24 {
            col_scale[j] = var.sqrt();
        }
    }
    let mut z = design;
    for i in 0..n {
        for j in 0..q {
            z[[i, j]] = (z[[i, j]] - col_mean[j]) / col_scale[j];
        }
    }

    let t: Vec<f64> = study.treatment.iter().map(|&v| f64::from(v)).collect();

    // beta[0] is the intercept.
    let mut beta = Array1::<f64>::zeros(q + 1);
    let eta_of = |beta: &Array1<f64>, z: &Array2<f64>| -> Array1<f64> {
        let mut eta = z.dot(&beta.slice(ndarray::s![1..]).to_owned());
        eta += beta[0];
        eta
    };
    let loglik = |eta: &Array1<f64>| -> f64 {
        let mut ll = 0.0;
        for (i, &e) in eta.iter().enumerate() {
            let p = link.inverse(e).clamp(1e-300, 1.0 - 1e-16);
            ll += if t[i] == 1.0 { p.ln() } else { (1.0 - p).ln() };
        }
        ll
    };

    let mut eta = eta_of(&beta, &z);
    let mut ll = loglik(&eta);
    let mut step = 1.0f64;
    let mut iterations = 0;
    let tol = 1e-10;
    let max_iter = 500;

    for _ in 0..max_iter {
        // Score vector d ll / d eta.
        let mut score = Array1::<f64>::zeros(n);
        for i in 0..n {
            let e = eta[i];
            score[i] = match link {
                Link::Logit => t[i] - link.inverse(e),
                Link::Probit => {
                    let p = normal_cdf(e).clamp(1e-10, 1.0 - 1e-10);
                    normal_pdf(e) * (t[i] - p) / (p * (1.0 - p))
                }
            };
        }
        let mut grad = Array1::<f64>::zeros(q + 1);
        grad[0] = score.sum();
        let gz = z.t().dot(&score);
        for j in 0..q {
            grad[j + 1] = gz[j];
        }
        let gnorm2 = grad.dot(&grad);
        if gnorm2.sqrt() < 1e-9 * (1.0 + n as f64) {
            break;
        }

        // Backtracking line search on the likelihood (ascent).
        let ll_before = ll;
        step = (step * 2.0).min(1e3);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &beta + &(&grad * step);
            let cand_eta = eta_of(&cand, &z);
            let cand_ll = loglik(&cand_eta);
            if cand_ll >= ll + 1e-4 * step * gnorm2 {
                beta = cand;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        let eta_max = eta.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
        if eta_max > SEPARATION_BOUND {
            return Err(Error::Degenerate(
                "perfect separation suspected: the likelihood is unbounded; \
                 trim or coarsen the covariates"
                    .into(),
            ));
        }
        if (ll - ll_before).abs() <= tol * (1.0 + ll_before.abs()) {
            break;
        }
    }

    Ok(PropensityModel {
        link,
        degree,
        coef: beta.to_vec(),
        col_mean,
        col_scale,
        eps_clip: EPS_CLIP,
        log_likelihood: ll,
        iterations,
    })
}

impl PropensityModel {
    /// Clipped propensity scores for every unit of `study`.
    pub fn scores(&self, study: &StudyTable) -> Result<Vec<f64>> {
        let q = expanded_dim(study.d(), self.degree);
        if q + 1 != self.coef.len() {
            return Err(Error::Dimension(format!(
                "model has {} coefficients, study expands to {}",
                self.coef.len(),
                q + 1
            )));
        }
        let mut buf = Vec::with_capacity(q);
        let mut out = Vec::with_capacity(study.n());
        for i in 0..study.n() {
            let row: Vec<f64> = study.x.row(i).to_vec();
            expand_row(&row, self.degree, &mut buf);
            let mut eta = self.coef[0];
            for j in 0..q {
                eta += self.coef[j + 1] * (buf[j] - self.col_mean[j]) / self.col_scale[j];
            }
            out.push(
                self.link
                    .inverse(eta)
                    .clamp(self.eps_clip, 1.0 - self.eps_clip),
            );
        }
        Ok(out)
    }
}

/// Equal-size strata by score rank; ties resolved by unit index so strata
/// are deterministic.
fn score_strata(scores: &[f64], n_strata: usize) -> Vec<usize> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut stratum = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        stratum[i] = pos * n_strata / n;
    }
    stratum
}

fn validate_scores(study: &StudyTable, scores: &[f64]) -> Result<()> {
    if scores.len() != study.n() {
        return Err(Error::Dimension(format!(
            "{} scores for {} units",
            scores.len(),
            study.n()
        )));
    }
    if scores.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Param(
            "propensity scores must lie strictly inside (0, 1); clip them first".into(),
        ));
    }
    Ok(())
}

/// Mean difference between arms and the pooled standard deviation of one
/// covariate, over the units selected by `mask`. Returns None when an arm
/// is empty.
fn arm_diff(x: &Array2<f64>, treatment: &[u8], mask: &[bool], j: usize) -> Option<(f64, f64)> {
    let (mut n1, mut n0) = (0.0, 0.0);
    let (mut m1, mut m0) = (0.0, 0.0);
    for i in 0..treatment.len() {
        if !mask[i] {
            continue;
        }
        if treatment[i] == 1 {
            n1 += 1.0;
            m1 += x[[i, j]];
        } else {
            n0 += 1.0;
            m0 += x[[i, j]];
        }
    }
    if n1 == 0.0 || n0 == 0.0 {
        return None;
    }
    m1 /= n1;
    m0 /= n0;
    let (mut v1, mut v0) = (0.0, 0.0);
    for i in 0..treatment.len() {
        if !mask[i] {
            continue;
        }
        let d = x[[i, j]];
        if treatment[i] == 1 {
            v1 += (d - m1) * (d - m1);
        } else {
            v0 += (d - m0) * (d - m0);
        }
    }
    v1 /= (n1 - 1.0).max(1.0);
    v0 /= (n0 - 1.0).max(1.0);
    Some((m1 - m0, ((v1 + v0) / 2.0).sqrt()))
}

fn standardize(diff: f64, pooled_sd: f64) -> f64 {
    if pooled_sd < 1e-12 {
        if diff.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff.abs() / pooled_sd
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumInfo {
    pub units: usize,
    pub treated: usize,
    pub control: usize,
    /// A stratum is usable only when both arms are present.
    pub usable: bool,
    pub score_min: f64,
    pub score_max: f64,
}

/// Covariate balance before and after propensity stratification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceReport {
    pub covariates: Vec<String>,
    pub raw_smd: Vec<f64>,
    /// Signed within-stratum mean differences averaged with stratum-size
    /// weights over usable strata, standardized by the raw pooled SD.
    pub adjusted_smd: Vec<f64>,
    pub strata: Vec<StratumInfo>,
    pub threshold: f64,
    pub pass: bool,
}

/// Check the balancing hypothesis: within score strata, treated and control
/// covariate means should coincide.
pub fn check_balance(
    scores: &[f64],
    study: &StudyTable,
    n_strata: usize,
    threshold: f64,
) -> Result<BalanceReport> {
    if n_strata < 2 {
        return Err(Error::Param(format!(
            "need at least 2 strata, got {n_strata}"
        )));
    }
    if threshold <= 0.0 {
        return Err(Error::Param(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    validate_scores(study, scores)?;
    study.require_both_arms()?;

    let n = study.n();
    let d = study.d();
    let all = vec![true; n];
    let raw: Vec<(f64, f64)> = (0..d)
        .map(|j| arm_diff(&study.x, &study.treatment, &all, j).expect("both arms present"))
        .collect();
    let raw_smd: Vec<f64> = raw.iter().map(|&(diff, sd)| standardize(diff, sd)).collect();

    let stratum = score_strata(scores, n_strata);
    let mut strata = Vec::with_capacity(n_strata);
    let mut masks = Vec::with_capacity(n_strata);
    for s in 0..n_strata {
        let mask: Vec<bool> = (0..n).map(|i| stratum[i] == s).collect();
        let units = mask.iter().filter(|&&m| m).count();
        let treated = (0..n).filter(|&i| mask[i] && study.treatment[i] == 1).count();
        let control = units - treated;
        let score_min = (0..n)
            .filter(|&i| mask[i])
            .map(|i| scores[i])
            .fold(f64::INFINITY, f64::min);
        let score_max = (0..n)
            .filter(|&i| mask[i])
            .map(|i| scores[i])
            .fold(f64::NEG_INFINITY, f64::max);
        strata.push(StratumInfo {
            units,
            treated,
            control,
            usable: treated > 0 && control > 0,
            score_min,
            score_max,
        });
        masks.push(mask);
    }

    let usable_units: usize = strata
        .iter()
        .filter(|s| s.usable)
        .map(|s| s.units)
        .sum();
    let mut adjusted_smd = vec![f64::INFINITY; d];
    if usable_units > 0 {
        for j in 0..d {
            let mut acc = 0.0;
            for (s, info) in strata.iter().enumerate() {
                if info.usable {
                    let (diff, _) = arm_diff(&study.x, &study.treatment, &masks[s], j)
                        .expect("usable stratum has both arms");
                    acc += info.units as f64 / usable_units as f64 * diff;
                }
            }
            adjusted_smd[j] = standardize(acc, raw[j].1);
        }
    }

    let pass = usable_units > 0 && adjusted_smd.iter().all(|&v| v < threshold);
    Ok(BalanceReport {
        covariates: study.covariate_names.clone(),
        raw_smd,
        adjusted_smd,
        strata,
        threshold,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ipw,
    Stratified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumEffect {
    pub units: usize,
    pub treated: usize,
    pub control: usize,
    /// Mean outcome difference, present only when both arms are in the
    /// stratum.
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub ate: f64,
    pub att: f64,
    pub estimator: Estimator,
    pub strata: Option<Vec<StratumEffect>>,
}

/// ATE and ATT from clipped propensity scores.
///
/// IPW uses the Horvitz-Thompson form `mean(T*Y/e) - mean((1-T)*Y/(1-e))`
/// for the ATE and odds-weighted controls (weights `e/(1-e)`, normalized)
/// for the ATT. The stratified variant combines within-stratum mean
/// differences with stratum-size weights (ATE) or treated-count weights
/// (ATT).
pub fn estimate_effects(
    study: &StudyTable,
    scores: &[f64],
    estimator: Estimator,
    n_strata: usize,
) -> Result<EffectEstimate> {
    validate_scores(study, scores)?;
    study.require_both_arms()?;
    let n = study.n();

    match estimator {
        Estimator::Ipw => {
            let mut treated_term = 0.0;
            let mut control_term = 0.0;
            let mut att_treated = 0.0;
            let mut att_wsum = 0.0;
            let mut att_wy = 0.0;
            let n_treated = study.n_treated() as f64;
            for i in 0..n {
                let e = scores[i];
                let y = study.outcome[i];
                if study.treatment[i] == 1 {
                    treated_term += y / e;
                    att_treated += y;
                } else {
                    control_term += y / (1.0 - e);
                    let w = e / (1.0 - e);
                    att_wsum += w;
                    att_wy += w * y;
                }
            }
            let ate = treated_term / n as f64 - control_term / n as f64;
            let att = att_treated / n_treated - att_wy / att_wsum;
            Ok(EffectEstimate {
                ate,
                att,
                estimator,
                strata: None,
            })
        }
        Estimator::Stratified => {
            if n_strata < 2 {
                return Err(Error::Param(format!(
                    "need at least 2 strata, got {n_strata}"
                )));
            }
            let stratum = score_strata(scores, n_strata);
            let mut effects = Vec::with_capacity(n_strata);
            for s in 0..n_strata {
                let idx: Vec<usize> = (0..n).filter(|&i| stratum[i] == s).collect();
                let treated: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| study.treatment[i] == 1)
                    .collect();
                let control: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| study.treatment[i] == 0)
                    .collect();
                let diff = if !treated.is_empty() && !control.is_empty() {
                    let m1 = treated.iter().map(|&i| study.outcome[i]).sum::<f64>()
                        / treated.len() as f64;
                    let m0 = control.iter().map(|&i| study.outcome[i]).sum::<f64>()
                        / control.len() as f64;
                    Some(m1 - m0)
                } else {
                    None
                };
                effects.push(StratumEffect {
                    units: idx.len(),
                    treated: treated.len(),
                    control: control.len(),
                    diff,
                });
            }
            let usable: Vec<&StratumEffect> =
                effects.iter().filter(|e| e.diff.is_some()).collect();
            if usable.is_empty() {
                return Err(Error::Degenerate(
                    "no stratum contains both treated and control units".into(),
                ));
            }
            let total_units: f64 = usable.iter().map(|e| e.units as f64).sum();
            let total_treated: f64 = usable.iter().map(|e| e.treated as f64).sum();
            let ate = usable
                .iter()
                .map(|e| e.units as f64 / total_units * e.diff.unwrap())
                .sum();
            let att = usable
                .iter()
                .map(|e| e.treated as f64 / total_treated * e.diff.unwrap())
                .sum();
            Ok(EffectEstimate {
                ate,
                att,
                estimator,
                strata: Some(effects),
            })
        }
    }
}

/// Saturating spend-response curve `users(s) = cap * (1 - exp(-rate*s))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub cap: f64,
    pub rate: f64,
    pub residual_ss: f64,
    /// Set when the fitted ceiling exceeds 10x the largest observed user
    /// count, i.e. the data never bends.
    pub no_saturation: bool,
}

impl ResponseCurve {
    pub fn new(cap: f64, rate: f64) -> Result<Self> {
        if !(cap > 0.0 && rate > 0.0) {
            return Err(Error::Param(format!(
                "response curve needs cap > 0 and rate > 0, got {cap} and {rate}"
            )));
        }
        Ok(ResponseCurve {
            cap,
            rate,
            residual_ss: 0.0,
            no_saturation: false,
        })
    }

    pub fn users_at(&self, spend: f64) -> f64 {
        self.cap * (1.0 - (-self.rate * spend).exp())
    }

    /// Marginal users per unit spend, d users / d spend.
    pub fn marginal_at(&self, spend: f64) -> f64 {
        self.cap * self.rate * (-self.rate * spend).exp()
    }
}

/// Least-squares fit of the saturating curve with a profile grid over the
/// rate followed by joint gradient-descent refinement.
pub fn fit_response_curve(spend: &[f64], users: &[f64]) -> Result<ResponseCurve> {
    if spend.len() != users.len() {
        return Err(Error::Dimension(format!(
            "{} spend values vs {} user counts",
            spend.len(),
            users.len()
        )));
    }
    let mut distinct: Vec<f64> = spend.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Param(format!(
            "need at least 3 distinct spend levels, got {}",
            distinct.len()
        )));
    }
    if spend.iter().any(|&s| s < 0.0) || users.iter().any(|&u| u < 0.0) {
        return Err(Error::Param("spend and users must be nonnegative".into()));
    }
    let u_min = users.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_max = users.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if u_max - u_min < 1e-12 {
        return Err(Error::Degenerate(
            "all user counts are equal; no response to fit".into(),
        ));
    }
    let s_max = distinct.last().copied().unwrap();
    if s_max <= 0.0 {
        return Err(Error::Degenerate("all spend levels are zero".into()));
    }

    let sse_of = |cap: f64, rate: f64| -> f64 {
        spend
            .iter()
            .zip(users)
            .map(|(&s, &u)| {
                let r = u - cap * (1.0 - (-rate * s).exp());
                r * r
            })
            .sum()
    };

    // Profile grid: for each rate the optimal cap is closed-form.
    let mut best = (u_max.max(1.0), 1.0 / s_max, f64::INFINITY);
    let grid = 400;
    for g in 0..grid {
        let rate = 1e-3 / s_max * (1e5f64).powf(g as f64 / (grid - 1) as f64);
        let mut num = 0.0;
        let mut den = 0.0;
        for (&s, &u) in spend.iter().zip(users) {
            let gi = 1.0 - (-rate * s).exp();
            num += u * gi;
            den += gi * gi;
        }
        if den <= 0.0 {
            continue;
        }
        let cap = num / den;
        if cap <= 0.0 {
            continue;
        }
        let sse = sse_of(cap, rate);
        if sse < best.2 {
            best = (cap, rate, sse);
        }
    }

    // Joint refinement with backtracking descent.
    let (mut cap, mut rate, mut sse) = best;
    let mut step = 1.0f64;
    for _ in 0..2000 {
        let mut g_cap = 0.0;
        let mut g_rate = 0.0;
        for (&s, &u) in spend.iter().zip(users) {
            let e = (-rate * s).exp();
            let r = u - cap * (1.0 - e);
            g_cap += -2.0 * r * (1.0 - e);
            g_rate += -2.0 * r * cap * s * e;
        }
        let gnorm2 = g_cap * g_cap + g_rate * g_rate;
        if gnorm2.sqrt() < 1e-12 * (1.0 + sse) {
            break;
        }
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        for _ in 0..80 {
            let c2 = (cap - step * g_cap).max(1e-12);
            let r2 = (rate - step * g_rate).max(1e-15);
            let s2 = sse_of(c2, r2);
            if s2 <= sse - 1e-4 * step * gnorm2 {
                cap = c2;
                rate = r2;
                let improved = sse - s2;
                sse = s2;
                accepted = true;
                if improved <= 1e-14 * (1.0 + sse) {
                    step = 0.0; // converged
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || step == 0.0 {
            break;
        }
    }

    Ok(ResponseCurve {
        cap,
        rate,
        residual_ss: sse,
        no_saturation: cap > 10.0 * u_max,
    })
}

/// Result of the greedy budget allocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetAllocation {
    pub spend: Vec<f64>,
    pub projected_users: Vec<f64>,
    pub total_projected: f64,
    /// Budget left over when every channel hit its capacity.
    pub unallocated: f64,
}

/// Allocate `total` budget over channels in `total/10_000` increments, each
/// increment going to the eligible channel with the highest marginal
/// users-per-unit-spend. A channel is eligible while its projected users
/// stay below its market capacity; projected users are capped at capacity,
/// since a market cannot yield more users than it holds. Ties go to the
/// lowest channel index.
pub fn allocate_budget(
    curves: &[ResponseCurve],
    capacities: &[f64],
    total: f64,
) -> Result<BudgetAllocation> {
    if curves.is_empty() {
        return Err(Error::Param("no channels given".into()));
    }
    if curves.len() != capacities.len() {
        return Err(Error::Dimension(format!(
            "{} curves vs {} capacities",
            curves.len(),
            capacities.len()
        )));
    }
    if total <= 0.0 {
        return Err(Error::Param(format!("total budget must be positive, got {total}")));
    }
    if capacities.iter().any(|&c| c < 0.0) {
        return Err(Error::Param("capacities must be nonnegative".into()));
    }
    if capacities.iter().all(|&c| c == 0.0) {
        return Err(Error::Degenerate("every channel has zero capacity".into()));
    }

    let k = curves.len();
    let delta = total / 10_000.0;
    let mut spend = vec![0.0; k];
    let mut projected = vec![0.0; k];
    let mut allocated = 0.0;
    for _ in 0..10_000 {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..k {
            if projected[c] >= capacities[c] {
                continue;
            }
            let m = curves[c].marginal_at(spend[c]);
            match best {
                Some((_, bm)) if m <= bm => {}
                _ => best = Some((c, m)),
            }
        }
        let Some((c, _)) = best else { break };
        spend[c] += delta;
        projected[c] = curves[c].users_at(spend[c]).min(capacities[c]);
        allocated += delta;
    }

    let total_projected = projected.iter().sum();
    Ok(BudgetAllocation {
        spend,
        projected_users: projected,
        total_projected,
        unallocated: total - allocated,
    })
}
