//! Poisson-factorization recommenders.
//!
//! Two variants share the machinery:
//!
//! * privacy-aware: `mu_ij = u_i . (v_j + lambda * sum_{s in perms(j)} p_s)`,
//!   so an app's permission profile shifts its effective item factor;
//! * context-aware bilinear: `mu_ijk = U_i.V_j + U_i.P_k + V_j.P_k`.
//!
//! Both maximize the Poisson log-likelihood of the observed counts with
//! blockwise multiplicative updates (KL/NMF form), which keep every factor
//! nonnegative and never decrease the likelihood.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ContextQuads, PrivacyMap, RatingsTriples};
use crate::matrix_serde;
use crate::rng::SplitMix64;

/// Predicted rates never drop below this, keeping `ln(mu)` finite.
pub const RATE_FLOOR: f64 = 1e-10;

fn ln_factorial(y: u64) -> f64 {
    libm::lgamma_r(y as f64 + 1.0).0
}

/// One Poisson log-likelihood term, `y*ln(mu) - mu - ln(y!)`.
pub fn poisson_term(y: u64, mu: f64) -> f64 {
    let mu = mu.max(RATE_FLOOR);
    y as f64 * mu.ln() - mu - ln_factorial(y)
}

fn seeded_factors(rng: &mut SplitMix64, rows: usize, rank: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, rank), |_| rng.uniform(0.1, 1.1))
}

/// Options shared by both fit variants.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub rank: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            rank: 8,
            max_sweeps: 300,
            tol: 1e-8,
            seed: 42,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Param("rank must be at least 1".into()));
        }
        if self.tol <= 0.0 {
            return Err(Error::Param(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Privacy-aware factor model (plain Poisson factorization when `lambda`
/// is 0 or no item has permissions).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorModel {
    #[serde(with = "matrix_serde")]
    pub user_factors: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub item_factors: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub permission_factors: Array2<f64>,
    /// item index -> permission indices (the Sigma_j sets).
    pub item_permissions: Vec<Vec<usize>>,
    pub lambda: f64,
    pub rank: usize,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

impl FactorModel {
    pub fn n_users(&self) -> usize {
        self.user_factors.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.nrows()
    }

    /// Effective item vector `v_j + lambda * sum of permission factors`.
    fn effective_item(&self, item: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.item_factors.row(item).to_vec();
        if self.lambda != 0.0 {
            for &s in &self.item_permissions[item] {
                for (r, vr) in v.iter_mut().enumerate() {
                    *vr += self.lambda * self.permission_factors[[s, r]];
                }
            }
        }
        v
    }

    /// Predicted rate for (user, item), floored at [`RATE_FLOOR`].
    pub fn rate(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.n_users() || item >= self.n_items() {
            return Err(Error::Dimension(format!(
                "(user {user}, item {item}) out of range for {}x{} model",
                self.n_users(),
                self.n_items()
            )));
        }
        let v = self.effective_item(item);
        let mu: f64 = self
            .user_factors
            .row(user)
            .iter()
            .zip(&v)
            .map(|(&u, &vv)| u * vv)
            .sum();
        Ok(mu.max(RATE_FLOOR))
    }

    /// Poisson log-likelihood of observed counts under this model.
    pub fn loglik(&self, data: &RatingsTriples) -> Result<f64> {
        if data.n_users() > self.n_users() || data.n_items() > self.n_items() {
            return Err(Error::Dimension("data larger than model".into()));
        }
        let mut ll = 0.0;
        for &(u, i, y) in &data.triples {
            ll += poisson_term(y, self.rate(u, i)?);
        }
        Ok(ll)
    }

    /// Top-k items for a user by predicted rate, excluding `seen`; ties go
    /// to the lower item id. `clamped` is set when k exceeds the number of
    /// candidates.
    pub fn top_k(&self, user: usize, k: usize, seen: &BTreeSet<usize>) -> Result<TopK> {
        if user >= self.n_users() {
            return Err(Error::Dimension(format!(
                "unknown user {user} in a {}-user model",
                self.n_users()
            )));
        }
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        let rates: Vec<f64> = (0..self.n_items())
            .map(|j| self.rate(user, j))
            .collect::<Result<_>>()?;
        Ok(rank_items(&rates, k, seen))
    }
}

/// Ranked recommendation slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    /// (item, rate) sorted by rate descending, item id ascending on ties.
    pub items: Vec<(usize, f64)>,
    /// k exceeded the candidate count and was clamped.
    pub clamped: bool,
}

fn rank_items(rates: &[f64], k: usize, seen: &BTreeSet<usize>) -> TopK {
    let mut candidates: Vec<usize> = (0..rates.len()).filter(|i| !seen.contains(i)).collect();
    candidates.sort_by(|&a, &b| {
        rates[b]
            .partial_cmp(&rates[a])
            .expect("rates are finite")
            .then(a.cmp(&b))
    });
    let clamped = k > candidates.len();
    candidates.truncate(k);
    TopK {
        items: candidates.into_iter().map(|i| (i, rates[i])).collect(),
        clamped,
    }
}

/// Context-aware bilinear factor model with one shared rank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextFactorModel {
    #[serde(with = "matrix_serde")]
    pub user_factors: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub item_factors: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub context_factors: Array2<f64>,
    pub rank: usize,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

impl ContextFactorModel {
    pub fn n_users(&self) -> usize {
        self.user_factors.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.nrows()
    }

    pub fn n_contexts(&self) -> usize {
        self.context_factors.nrows()
    }

    pub fn rate(&self, user: usize, item: usize, context: usize) -> Result<f64> {
        if user >= self.n_users() || item >= self.n_items() || context >= self.n_contexts() {
            return Err(Error::Dimension(format!(
                "(user {user}, item {item}, context {context}) out of range"
            )));
        }
        let mut mu = 0.0;
        for r in 0..self.rank {
            let u = self.user_factors[[user, r]];
            let v = self.item_factors[[item, r]];
            let p = self.context_factors[[context, r]];
            mu += u * v + u * p + v * p;
        }
        Ok(mu.max(RATE_FLOOR))
    }

    pub fn loglik(&self, data: &ContextQuads) -> Result<f64> {
        let mut ll = 0.0;
        for &(u, i, c, y) in &data.quads {
            ll += poisson_term(y, self.rate(u, i, c)?);
        }
        Ok(ll)
    }

    pub fn top_k(
        &self,
        user: usize,
        context: usize,
        k: usize,
        seen: &BTreeSet<usize>,
    ) -> Result<TopK> {
        if user >= self.n_users() || context >= self.n_contexts() {
            return Err(Error::Dimension(format!(
                "unknown user {user} or context {context}"
            )));
        }
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        let rates: Vec<f64> = (0..self.n_items())
            .map(|j| self.rate(user, j, context))
            .collect::<Result<_>>()?;
        Ok(rank_items(&rates, k, seen))
    }
}

/// Fit the privacy-aware model (plain Poisson factorization when the
/// privacy map is empty or `lambda` is 0).
pub fn fit_privacy(
    data: &RatingsTriples,
    privacy: &PrivacyMap,
    lambda: f64,
    opts: FitOptions,
) -> Result<FactorModel> {
    opts.validate()?;
    if lambda < 0.0 {
        return Err(Error::Param(format!("lambda must be nonnegative, got {lambda}")));
    }
    if privacy.item_permissions.len() != data.n_items() {
        return Err(Error::Dimension(format!(
            "privacy map covers {} items, ratings have {}",
            privacy.item_permissions.len(),
            data.n_items()
        )));
    }
    if data.triples.is_empty() {
        return Err(Error::Invariant("no observed ratings".into()));
    }

    let n = data.n_users();
    let m = data.n_items();
    let s = privacy.permissions.len();
    let r = opts.rank;
    let mut rng = SplitMix64::derived(opts.seed, "rec-fit");
    let mut user_f = seeded_factors(&mut rng, n, r);
    let mut item_f = seeded_factors(&mut rng, m, r);
    let mut perm_f = seeded_factors(&mut rng, s, r);

    // Cells whose item carries permission s.
    let mut cells_with_perm: Vec<Vec<usize>> = vec![Vec::new(); s];
    for (ci, &(_, i, _)) in data.triples.iter().enumerate() {
        for &p in privacy.permissions_of(i) {
            cells_with_perm[p].push(ci);
        }
    }

    let effective = |item_f: &Array2<f64>, perm_f: &Array2<f64>, j: usize| -> Vec<f64> {
        let mut v: Vec<f64> = item_f.row(j).to_vec();
        if lambda != 0.0 {
            for &p in privacy.permissions_of(j) {
                for (rr, vr) in v.iter_mut().enumerate() {
                    *vr += lambda * perm_f[[p, rr]];
                }
            }
        }
        v
    };
    let rates = |user_f: &Array2<f64>, item_f: &Array2<f64>, perm_f: &Array2<f64>| -> Vec<f64> {
        data.triples
            .iter()
            .map(|&(u, i, _)| {
                let v = effective(item_f, perm_f, i);
                let mu: f64 = user_f.row(u).iter().zip(&v).map(|(&a, &b)| a * b).sum();
                mu.max(RATE_FLOOR)
            })
            .collect()
    };
    let loglik = |mu: &[f64]| -> f64 {
        data.triples
            .iter()
            .zip(mu)
            .map(|(&(_, _, y), &m)| poisson_term(y, m))
            .sum()
    };

    let mut trace = Vec::new();
    let mut converged = false;
    const TINY: f64 = 1e-300;

    for _ in 0..opts.max_sweeps {
        // U block.
        let mu = rates(&user_f, &item_f, &perm_f);
        let mut num = Array2::<f64>::zeros((n, r));
        let mut den = Array2::<f64>::zeros((n, r));
        for (ci, &(u, i, y)) in data.triples.iter().enumerate() {
            let v = effective(&item_f, &perm_f, i);
            let ratio = y as f64 / mu[ci];
            for rr in 0..r {
                num[[u, rr]] += ratio * v[rr];
                den[[u, rr]] += v[rr];
            }
        }
        for u in 0..n {
            for rr in 0..r {
                user_f[[u, rr]] *= num[[u, rr]] / den[[u, rr]].max(TINY);
            }
        }

        // V block.
        let mu = rates(&user_f, &item_f, &perm_f);
        let mut num = Array2::<f64>::zeros((m, r));
        let mut den = Array2::<f64>::zeros((m, r));
        for (ci, &(u, i, y)) in data.triples.iter().enumerate() {
            let ratio = y as f64 / mu[ci];
            for rr in 0..r {
                let uf = user_f[[u, rr]];
                num[[i, rr]] += ratio * uf;
                den[[i, rr]] += uf;
            }
        }
        for i in 0..m {
            for rr in 0..r {
                item_f[[i, rr]] *= num[[i, rr]] / den[[i, rr]].max(TINY);
            }
        }

        // P block; lambda scales out of the ratio, so updates only need the
        // user factors of the touching cells.
        if lambda > 0.0 && s > 0 {
            let mu = rates(&user_f, &item_f, &perm_f);
            for (p, cells) in cells_with_perm.iter().enumerate() {
                for rr in 0..r {
                    let mut num_p = 0.0;
                    let mut den_p = 0.0;
                    for &ci in cells {
                        let (u, _, y) = data.triples[ci];
                        let uf = user_f[[u, rr]];
                        num_p += y as f64 / mu[ci] * uf;
                        den_p += uf;
                    }
                    perm_f[[p, rr]] *= num_p / den_p.max(TINY);
                }
            }
        }

        let mu = rates(&user_f, &item_f, &perm_f);
        let ll = loglik(&mu);
        if !ll.is_finite() {
            return Err(Error::NonFinite("Poisson log-likelihood".into()));
        }
        trace.push(ll);
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            if (ll - prev).abs() <= opts.tol * (1.0 + prev.abs()) {
                converged = true;
                break;
            }
        }
    }

    Ok(FactorModel {
        user_factors: user_f,
        item_factors: item_f,
        permission_factors: perm_f,
        item_permissions: privacy.item_permissions.clone(),
        lambda,
        rank: r,
        loglik_trace: trace,
        converged,
    })
}

/// Fit the context-aware bilinear model.
pub fn fit_context(data: &ContextQuads, opts: FitOptions) -> Result<ContextFactorModel> {
    opts.validate()?;
    if data.quads.is_empty() {
        return Err(Error::Invariant("no observed ratings".into()));
    }
    let n = data.n_users();
    let m = data.n_items();
    let c = data.n_contexts();
    let r = opts.rank;
    let mut rng = SplitMix64::derived(opts.seed, "rec-fit-context");
    let mut user_f = seeded_factors(&mut rng, n, r);
    let mut item_f = seeded_factors(&mut rng, m, r);
    let mut ctx_f = seeded_factors(&mut rng, c, r);

    let rates = |uf: &Array2<f64>, vf: &Array2<f64>, pf: &Array2<f64>| -> Vec<f64> {
        data.quads
            .iter()
            .map(|&(u, i, k, _)| {
                let mut mu = 0.0;
                for rr in 0..r {
                    let a = uf[[u, rr]];
                    let b = vf[[i, rr]];
                    let p = pf[[k, rr]];
                    mu += a * b + a * p + b * p;
                }
                mu.max(RATE_FLOOR)
            })
            .collect()
    };
    let loglik = |mu: &[f64]| -> f64 {
        data.quads
            .iter()
            .zip(mu)
            .map(|(&(_, _, _, y), &m)| poisson_term(y, m))
            .sum()
    };

    let mut trace = Vec::new();
    let mut converged = false;
    const TINY: f64 = 1e-300;

    // One blockwise multiplicative sweep: the updated block enters mu
    // linearly with nonnegative coefficients, so the KL update applies.
    for _ in 0..opts.max_sweeps {
        // U block: coefficient of U_ur is V_ir + P_kr.
        let mu = rates(&user_f, &item_f, &ctx_f);
        let mut num = Array2::<f64>::zeros((n, r));
        let mut den = Array2::<f64>::zeros((n, r));
        for (ci, &(u, i, k, y)) in data.quads.iter().enumerate() {
            let ratio = y as f64 / mu[ci];
            for rr in 0..r {
                let coef = item_f[[i, rr]] + ctx_f[[k, rr]];
                num[[u, rr]] += ratio * coef;
                den[[u, rr]] += coef;
            }
        }
        for u in 0..n {
            for rr in 0..r {
                user_f[[u, rr]] *= num[[u, rr]] / den[[u, rr]].max(TINY);
            }
        }

        // V block: coefficient U_ur + P_kr.
        let mu = rates(&user_f, &item_f, &ctx_f);
        let mut num = Array2::<f64>::zeros((m, r));
        let mut den = Array2::<f64>::zeros((m, r));
        for (ci, &(u, i, k, y)) in data.quads.iter().enumerate() {
            let ratio = y as f64 / mu[ci];
            for rr in 0..r {
                let coef = user_f[[u, rr]] + ctx_f[[k, rr]];
                num[[i, rr]] += ratio * coef;
                den[[i, rr]] += coef;
            }
        }
        for i in 0..m {
            for rr in 0..r {
                item_f[[i, rr]] *= num[[i, rr]] / den[[i, rr]].max(TINY);
            }
        }

        // P block: coefficient U_ur + V_ir.
        let mu = rates(&user_f, &item_f, &ctx_f);
        let mut num = Array2::<f64>::zeros((c, r));
        let mut den = Array2::<f64>::zeros((c, r));
        for (ci, &(u, i, k, y)) in data.quads.iter().enumerate() {
            let ratio = y as f64 / mu[ci];
            for rr in 0..r {
                let coef = user_f[[u, rr]] + item_f[[i, rr]];
                num[[k, rr]] += ratio * coef;
                den[[k, rr]] += coef;
            }
        }
        for k in 0..c {
            for rr in 0..r {
                ctx_f[[k, rr]] *= num[[k, rr]] / den[[k, rr]].max(TINY);
            }
        }

        let mu = rates(&user_f, &item_f, &ctx_f);
        let ll = loglik(&mu);
        if !ll.is_finite() {
            return Err(Error::NonFinite("Poisson log-likelihood".into()));
        }
        trace.push(ll);
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            if (ll - prev).abs() <= opts.tol * (1.0 + prev.abs()) {
                converged = true;
                break;
            }
        }
    }

    Ok(ContextFactorModel {
        user_factors: user_f,
        item_factors: item_f,
        context_factors: ctx_f,
        rank: r,
        loglik_trace: trace,
        converged,
    })
}

/// Mean precision@k over users: for each user with at least one positive
/// held-out item, the share of the top-k (training items excluded) that is
/// held-out relevant. Held-out keys must be disjoint from training keys.
pub fn precision_at_k(
    model: &FactorModel,
    train: &RatingsTriples,
    heldout: &RatingsTriples,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    if heldout.triples.is_empty() {
        return Err(Error::Param("held-out set is empty".into()));
    }
    let train_keys: BTreeSet<(usize, usize)> =
        train.triples.iter().map(|&(u, i, _)| (u, i)).collect();
    for &(u, i, _) in &heldout.triples {
        if train_keys.contains(&(u, i)) {
            return Err(Error::Invariant(format!(
                "held-out cell (user {u}, item {i}) also appears in training"
            )));
        }
    }

    let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); model.n_users()];
    for &(u, i, _) in &train.triples {
        seen[u].insert(i);
    }
    let mut relevant: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); model.n_users()];
    for &(u, i, y) in &heldout.triples {
        if y > 0 {
            relevant[u].insert(i);
        }
    }

    let mut total = 0.0;
    let mut users = 0usize;
    for u in 0..model.n_users() {
        if relevant[u].is_empty() {
            continue;
        }
        let top = model.top_k(u, k, &seen[u])?;
        let hits = top
            .items
            .iter()
            .filter(|(i, _)| relevant[u].contains(i))
            .count();
        total += hits as f64 / k as f64;
        users += 1;
    }
    if users == 0 {
        return Err(Error::Param(
            "no user has positive held-out items".into(),
        ));
    }
    Ok(total / users as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::IdMap;

    fn triples(rows: &[(usize, usize, u64)], n_users: usize, n_items: usize) -> RatingsTriples {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        for u in 0..n_users {
            users.intern(&format!("u{u}"));
        }
        for i in 0..n_items {
            items.intern(&format!("i{i}"));
        }
        RatingsTriples::new(users, items, rows.to_vec()).unwrap()
    }

    fn quads(rows: &[(usize, usize, usize, u64)], n: usize, m: usize, c: usize) -> ContextQuads {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let mut contexts = IdMap::default();
        for u in 0..n {
            users.intern(&format!("u{u}"));
        }
        for i in 0..m {
            items.intern(&format!("i{i}"));
        }
        for k in 0..c {
            contexts.intern(&format!("c{k}"));
        }
        ContextQuads::new(users, items, contexts, rows.to_vec()).unwrap()
    }

    fn model_from(
        u: Array2<f64>,
        v: Array2<f64>,
        p: Array2<f64>,
        item_permissions: Vec<Vec<usize>>,
        lambda: f64,
    ) -> FactorModel {
        let rank = u.ncols();
        FactorModel {
            user_factors: u,
            item_factors: v,
            permission_factors: p,
            item_permissions,
            lambda,
            rank,
            loglik_trace: vec![],
            converged: true,
        }
    }

    #[test]
    fn rate_reduces_to_plain_at_lambda_zero() {
        let u = Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap();
        let v = Array2::from_shape_vec((1, 2), vec![0.5, 0.5]).unwrap();
        let p = Array2::from_shape_vec((1, 2), vec![0.1, 0.1]).unwrap();
        let m = model_from(u.clone(), v.clone(), p.clone(), vec![vec![0]], 0.0);
        assert!((m.rate(0, 0).unwrap() - 1.5).abs() < 1e-15);

        let m1 = model_from(u, v, p, vec![vec![0]], 1.0);
        // u.(v + p) = 1*0.6 + 2*0.6 = 1.8
        assert!((m1.rate(0, 0).unwrap() - 1.8).abs() < 1e-15);
    }

    #[test]
    fn zero_user_vector_floors_the_rate() {
        let u = Array2::zeros((1, 2));
        let v = Array2::from_shape_vec((1, 2), vec![0.5, 0.5]).unwrap();
        let p = Array2::zeros((0, 2));
        let m = model_from(u, v, p, vec![vec![]], 0.0);
        assert_eq!(m.rate(0, 0).unwrap(), RATE_FLOOR);
    }

    #[test]
    fn rate_monotone_in_lambda_with_permissions() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..20 {
            let u = Array2::from_shape_fn((2, 3), |_| rng.uniform(0.1, 2.0));
            let v = Array2::from_shape_fn((2, 3), |_| rng.uniform(0.1, 2.0));
            let p = Array2::from_shape_fn((2, 3), |_| rng.uniform(0.1, 2.0));
            let perms = vec![vec![0], vec![0, 1]];
            let l1 = rng.uniform(0.0, 1.0);
            let l2 = l1 + rng.uniform(0.0, 1.0);
            let m1 = model_from(u.clone(), v.clone(), p.clone(), perms.clone(), l1);
            let m2 = model_from(u, v, p, perms, l2);
            for user in 0..2 {
                for item in 0..2 {
                    assert!(m1.rate(user, item).unwrap() <= m2.rate(user, item).unwrap());
                }
            }
        }
    }

    #[test]
    fn loglik_zero_counts_is_negative_total_rate() {
        let data = triples(&[(0, 0, 0), (0, 1, 0), (1, 0, 0)], 2, 2);
        let mut rng = SplitMix64::new(1);
        let u = Array2::from_shape_fn((2, 2), |_| rng.uniform(0.1, 1.0));
        let v = Array2::from_shape_fn((2, 2), |_| rng.uniform(0.1, 1.0));
        let m = model_from(u, v, Array2::zeros((0, 2)), vec![vec![], vec![]], 0.0);
        let expected: f64 = -(m.rate(0, 0).unwrap() + m.rate(0, 1).unwrap() + m.rate(1, 0).unwrap());
        assert!((m.loglik(&data).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn loglik_single_cell_closed_form() {
        // y = 2, mu = 2: 2 ln 2 - 2 - ln 2 = ln 2 - 2
        let data = triples(&[(0, 0, 2)], 1, 1);
        let u = Array2::from_shape_vec((1, 1), vec![2.0]).unwrap();
        let v = Array2::from_shape_vec((1, 1), vec![1.0]).unwrap();
        let m = model_from(u, v, Array2::zeros((0, 1)), vec![vec![]], 0.0);
        let expected = 2f64.ln() - 2.0;
        assert!((m.loglik(&data).unwrap() - expected).abs() < 1e-12);
        assert!((expected + 1.306853).abs() < 1e-6);
    }

    #[test]
    fn loglik_matches_per_term_oracle() {
        let mut rng = SplitMix64::new(9);
        let mut rows = Vec::new();
        for u in 0..5 {
            for i in 0..4 {
                rows.push((u, i, rng.poisson(2.5)));
            }
        }
        let data = triples(&rows, 5, 4);
        let u = Array2::from_shape_fn((5, 3), |_| rng.uniform(0.1, 1.5));
        let v = Array2::from_shape_fn((4, 3), |_| rng.uniform(0.1, 1.5));
        let p = Array2::from_shape_fn((2, 3), |_| rng.uniform(0.1, 1.5));
        let perms = vec![vec![0], vec![], vec![0, 1], vec![1]];
        let m = model_from(u.clone(), v.clone(), p.clone(), perms.clone(), 0.7);

        // Straight-line oracle: recompute every term from scratch.
        let mut expected = 0.0;
        for &(uu, ii, y) in &data.triples {
            let mut vj: Vec<f64> = (0..3).map(|r| v[[ii, r]]).collect();
            for &s in &perms[ii] {
                for (r, item) in vj.iter_mut().enumerate() {
                    *item += 0.7 * p[[s, r]];
                }
            }
            let mut mu = 0.0;
            for r in 0..3 {
                mu += u[[uu, r]] * vj[r];
            }
            if mu < 1e-10 {
                mu = 1e-10;
            }
            let mut lnfact = 0.0;
            for t in 1..=y {
                lnfact += (t as f64).ln();
            }
            expected += y as f64 * mu.ln() - mu - lnfact;
        }
        assert!((m.loglik(&data).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn traces_nondecreasing_for_both_variants() {
        for seed in 0..10u64 {
            let mut rng = SplitMix64::new(1000 + seed);
            let mut rows = Vec::new();
            for u in 0..15 {
                for i in 0..12 {
                    if rng.bernoulli(0.6) {
                        rows.push((u, i, rng.poisson(3.0)));
                    }
                }
            }
            if rows.is_empty() {
                continue;
            }
            let data = triples(&rows, 15, 12);
            let mut privacy = PrivacyMap::empty(12);
            let mut perm_ids = IdMap::default();
            perm_ids.intern("camera");
            perm_ids.intern("contacts");
            privacy.permissions = perm_ids;
            for (i, perms) in privacy.item_permissions.iter_mut().enumerate() {
                if i % 3 == 0 {
                    perms.push(0);
                }
                if i % 4 == 0 {
                    perms.push(1);
                }
            }
            let model = fit_privacy(
                &data,
                &privacy,
                0.5,
                FitOptions {
                    rank: 3,
                    max_sweeps: 60,
                    tol: 1e-12,
                    seed,
                },
            )
            .unwrap();
            for w in model.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "privacy trace dipped: {w:?}");
            }
            for &f in model.user_factors.iter().chain(model.item_factors.iter()) {
                assert!(f >= 0.0);
            }

            let mut qrows = Vec::new();
            for u in 0..8 {
                for i in 0..8 {
                    for k in 0..4 {
                        if rng.bernoulli(0.5) {
                            qrows.push((u, i, k, rng.poisson(2.0)));
                        }
                    }
                }
            }
            let qdata = quads(&qrows, 8, 8, 4);
            let cmodel = fit_context(
                &qdata,
                FitOptions {
                    rank: 3,
                    max_sweeps: 60,
                    tol: 1e-12,
                    seed,
                },
            )
            .unwrap();
            for w in cmodel.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "context trace dipped: {w:?}");
            }
            for &f in cmodel
                .user_factors
                .iter()
                .chain(cmodel.item_factors.iter())
                .chain(cmodel.context_factors.iter())
            {
                assert!(f >= 0.0);
            }
        }
    }

    #[test]
    fn rank_one_noiseless_recovery() {
        let mut rng = SplitMix64::new(31);
        let a: Vec<f64> = (0..8).map(|_| rng.uniform(2.5, 4.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.uniform(3.0, 5.0)).collect();
        let mut rows = Vec::new();
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                rows.push((i, j, (ai * bj).round() as u64));
            }
        }
        let data = triples(&rows, 8, 6);
        let model = fit_privacy(
            &data,
            &PrivacyMap::empty(6),
            0.0,
            FitOptions {
                rank: 1,
                max_sweeps: 500,
                tol: 1e-13,
                seed: 3,
            },
        )
        .unwrap();
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                let truth = ai * bj;
                let got = model.rate(i, j).unwrap();
                assert!(
                    (got - truth).abs() / truth < 0.05,
                    "cell ({i},{j}): {got} vs {truth}"
                );
            }
        }
    }

    #[test]
    fn lambda_zero_matches_plain_fit_trace() {
        let mut rng = SplitMix64::new(77);
        let mut rows = Vec::new();
        for u in 0..10 {
            for i in 0..8 {
                if rng.bernoulli(0.7) {
                    rows.push((u, i, rng.poisson(2.0)));
                }
            }
        }
        let data = triples(&rows, 10, 8);
        let mut privacy = PrivacyMap::empty(8);
        let mut ids = IdMap::default();
        ids.intern("gps");
        privacy.permissions = ids;
        for perms in privacy.item_permissions.iter_mut().step_by(2) {
            perms.push(0);
        }
        let opts = FitOptions {
            rank: 2,
            max_sweeps: 50,
            tol: 1e-12,
            seed: 5,
        };
        let with_privacy = fit_privacy(&data, &privacy, 0.0, opts).unwrap();
        let plain = fit_privacy(&data, &PrivacyMap::empty(8), 0.0, opts).unwrap();
        assert_eq!(with_privacy.loglik_trace.len(), plain.loglik_trace.len());
        for (a, b) in with_privacy.loglik_trace.iter().zip(&plain.loglik_trace) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    /// Exhaustive grid search over rank-1 factors in [0, 3] step 0.01 for a
    /// 2x2 fully observed matrix. The log-likelihood separates as
    /// A(u) + B(v) - (u1+u2)(v1+v2), so the grid maximum can be evaluated
    /// exactly by compressing each side to (sum -> best log term).
    fn grid_oracle_2x2(y: [[u64; 2]; 2]) -> f64 {
        let row_sums = [y[0][0] + y[0][1], y[1][0] + y[1][1]];
        let col_sums = [y[0][0] + y[1][0], y[0][1] + y[1][1]];
        let steps: Vec<f64> = (1..=300).map(|i| i as f64 * 0.01).collect();
        // side -> map from (sum index) to best sum of weighted logs
        let compress = |sums: [u64; 2]| -> Vec<f64> {
            let mut best = vec![f64::NEG_INFINITY; 601];
            for &x1 in &steps {
                for &x2 in &steps {
                    let s = ((x1 + x2) * 100.0).round() as usize;
                    let val = sums[0] as f64 * x1.ln() + sums[1] as f64 * x2.ln();
                    if val > best[s] {
                        best[s] = val;
                    }
                }
            }
            best
        };
        let a = compress(row_sums);
        let b = compress(col_sums);
        let mut lnfact = 0.0;
        for row in &y {
            for &c in row {
                for t in 1..=c {
                    lnfact += (t as f64).ln();
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        for (si, &av) in a.iter().enumerate() {
            if av == f64::NEG_INFINITY {
                continue;
            }
            for (ti, &bv) in b.iter().enumerate() {
                if bv == f64::NEG_INFINITY {
                    continue;
                }
                let ll = av + bv - (si as f64 * 0.01) * (ti as f64 * 0.01) - lnfact;
                if ll > best {
                    best = ll;
                }
            }
        }
        best
    }

    #[test]
    fn two_by_two_fit_matches_grid_oracle() {
        let y = [[2u64, 1], [1, 3]];
        let data = triples(&[(0, 0, 2), (0, 1, 1), (1, 0, 1), (1, 1, 3)], 2, 2);
        let model = fit_privacy(
            &data,
            &PrivacyMap::empty(2),
            0.0,
            FitOptions {
                rank: 1,
                max_sweeps: 2000,
                tol: 1e-14,
                seed: 11,
            },
        )
        .unwrap();
        let fitted = model.loglik(&data).unwrap();
        let oracle = grid_oracle_2x2(y);
        assert!(
            (fitted - oracle).abs() < 1e-3,
            "fitted {fitted} vs grid {oracle}"
        );
    }

    #[test]
    fn top_k_tie_break_clamp_and_exclusion() {
        let u = Array2::from_shape_vec((1, 1), vec![1.0]).unwrap();
        let v = Array2::from_shape_vec((4, 1), vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let m = model_from(u, v, Array2::zeros((0, 1)), vec![vec![]; 4], 0.0);

        let top = m.top_k(0, 3, &BTreeSet::new()).unwrap();
        let ids: Vec<usize> = top.items.iter().map(|&(i, _)| i).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(!top.clamped);

        let top = m.top_k(0, 10, &BTreeSet::new()).unwrap();
        assert_eq!(top.items.len(), 4);
        assert!(top.clamped);

        let seen: BTreeSet<usize> = [0, 2].into_iter().collect();
        let top = m.top_k(0, 10, &seen).unwrap();
        let ids: Vec<usize> = top.items.iter().map(|&(i, _)| i).collect();
        assert_eq!(ids, vec![1, 3]);

        assert!(m.top_k(5, 3, &BTreeSet::new()).is_err());
    }

    /// Two user blocks preferring two item blocks; in-block counts are
    /// strictly positive, plus some observed cross-block zeros.
    fn block_data(seed: u64) -> (RatingsTriples, RatingsTriples, usize, usize) {
        let users_per_block = 12;
        let items_per_block = 12;
        let n = 2 * users_per_block;
        let m = 2 * items_per_block;
        let mut rng = SplitMix64::new(seed);
        let mut train = Vec::new();
        let mut held = Vec::new();
        for u in 0..n {
            let block = u / users_per_block;
            let mut in_block: Vec<usize> =
                (block * items_per_block..(block + 1) * items_per_block).collect();
            rng.shuffle(&mut in_block);
            for (pos, &i) in in_block.iter().enumerate() {
                let count = 1 + rng.poisson(4.0);
                if pos < 7 {
                    train.push((u, i, count));
                } else {
                    held.push((u, i, count));
                }
            }
            for i in 0..m {
                if i / items_per_block != block && rng.bernoulli(0.3) {
                    train.push((u, i, 0));
                }
            }
        }
        (
            triples(&train, n, m),
            triples(&held, n, m),
            users_per_block,
            items_per_block,
        )
    }

    #[test]
    fn block_structure_precision_at_5() {
        let (train, held, _, _) = block_data(2025);
        let model = fit_privacy(
            &train,
            &PrivacyMap::empty(24),
            0.0,
            FitOptions {
                rank: 2,
                max_sweeps: 200,
                tol: 1e-10,
                seed: 8,
            },
        )
        .unwrap();
        let p = precision_at_k(&model, &train, &held, 5).unwrap();
        assert!(p >= 0.8, "precision@5 = {p}");
    }

    #[test]
    fn random_model_hits_block_prevalence() {
        let (train, held, _, items_per_block) = block_data(626);
        let n = train.n_users();
        let m = train.n_items();
        let mut rng = SplitMix64::new(14);
        let u = Array2::from_shape_fn((n, 2), |_| rng.uniform(0.1, 1.1));
        let v = Array2::from_shape_fn((m, 2), |_| rng.uniform(0.1, 1.1));
        let random_model = model_from(u, v, Array2::zeros((0, 2)), vec![vec![]; m], 0.0);
        let p = precision_at_k(&random_model, &train, &held, 5).unwrap();

        // Analytic prevalence: per user the candidate pool is everything
        // outside training; 5 of those are relevant.
        let mut pool = 0.0;
        let mut relevant = 0.0;
        for u in 0..n {
            let seen = train.triples.iter().filter(|&&(uu, _, _)| uu == u).count();
            pool += (m - seen) as f64;
            relevant += (items_per_block - 7) as f64;
        }
        let prevalence = relevant / pool;
        assert!(
            (p - prevalence).abs() <= 0.1,
            "precision {p} vs prevalence {prevalence}"
        );
    }

    #[test]
    fn perfect_model_scores_one() {
        // Rig rates so the held-out items outrank everything else.
        let train = triples(&[(0, 0, 3), (1, 1, 3)], 2, 4);
        let held = triples(&[(0, 2, 1), (1, 3, 2)], 2, 4);
        let u = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v =
            Array2::from_shape_vec((4, 2), vec![0.1, 0.1, 0.1, 0.1, 5.0, 0.2, 0.2, 5.0]).unwrap();
        let m = model_from(u, v, Array2::zeros((0, 2)), vec![vec![]; 4], 0.0);
        let p = precision_at_k(&m, &train, &held, 1).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn heldout_overlap_rejected() {
        let train = triples(&[(0, 0, 3)], 1, 2);
        let held = triples(&[(0, 0, 1)], 1, 2);
        let u = Array2::from_shape_vec((1, 1), vec![1.0]).unwrap();
        let v = Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap();
        let m = model_from(u, v, Array2::zeros((0, 1)), vec![vec![]; 2], 0.0);
        assert!(precision_at_k(&m, &train, &held, 1).is_err());
        assert!(precision_at_k(&m, &train, &triples(&[], 1, 2), 1).is_err());
    }
}
