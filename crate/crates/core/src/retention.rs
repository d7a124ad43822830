//! Cohort retention analytics: grouping users by signup period, per-period
//! hazard and retention rates, and survival curves.
//!
//! Retention rate for an interval is 1 minus its hazard rate. The survival
//! function is estimated two ways:
//!
//! * Kaplan-Meier: `S(t_i) = prod_{j<=i} (1 - lambda_j)`
//! * Nelson-Aalen: `S(t_i) = exp(-sum_{j<=i} lambda_j)`

use crate::error::{Error, Result};
use crate::ingest::{EventKind, EventLog};

/// One elapsed period of one cohort. `censored` marks periods past the
/// cohort's observation boundary; their counts are meaningless and kept at
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodCell {
    pub at_risk: usize,
    pub active: usize,
    /// Total action events by at-risk users in this period (stickiness
    /// numerator).
    pub actions: usize,
    pub censored: bool,
}

/// A signup cohort tracked over elapsed periods `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    /// Signup bucket: `floor(signup_ts / period)`.
    pub key: i64,
    pub users: usize,
    pub periods: Vec<PeriodCell>,
}

impl Cohort {
    /// Retention rate of elapsed period `i`, if observed.
    pub fn retention(&self, i: usize) -> Option<f64> {
        let c = &self.periods[i];
        if c.censored || c.at_risk == 0 {
            None
        } else {
            Some(c.active as f64 / c.at_risk as f64)
        }
    }

    /// Hazard rate of elapsed period `i`: share of at-risk users with no
    /// activity in it.
    pub fn hazard(&self, i: usize) -> Option<f64> {
        self.retention(i).map(|r| 1.0 - r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    /// Cohorts sorted by key.
    pub cohorts: Vec<Cohort>,
    pub period_secs: i64,
    pub horizon: usize,
    pub observation_end: i64,
}

impl CohortTable {
    /// Hazards pooled across cohorts: per elapsed period, inactive at-risk
    /// users over all at-risk users, skipping censored cells.
    pub fn pooled_hazards(&self) -> Vec<f64> {
        (0..=self.horizon)
            .map(|i| {
                let (mut at_risk, mut active) = (0usize, 0usize);
                for c in &self.cohorts {
                    let cell = &c.periods[i];
                    if !cell.censored {
                        at_risk += cell.at_risk;
                        active += cell.active;
                    }
                }
                if at_risk == 0 {
                    0.0
                } else {
                    1.0 - active as f64 / at_risk as f64
                }
            })
            .collect()
    }

    /// Mean action events per at-risk user, pooled across cohorts: the
    /// engagement ("stickiness") series to correlate with retention.
    pub fn stickiness(&self) -> Vec<f64> {
        (0..=self.horizon)
            .map(|i| {
                let (mut at_risk, mut actions) = (0usize, 0usize);
                for c in &self.cohorts {
                    let cell = &c.periods[i];
                    if !cell.censored {
                        at_risk += cell.at_risk;
                        actions += cell.actions;
                    }
                }
                if at_risk == 0 {
                    0.0
                } else {
                    actions as f64 / at_risk as f64
                }
            })
            .collect()
    }
}

/// Group users into signup cohorts and count activity per elapsed period.
///
/// Periods are aligned to each user's own signup timestamp. A user counts as
/// active in period `i` if any active/action event falls in
/// `[signup + i*period, signup + (i+1)*period)`; period 0 contains the
/// signup itself, so period-0 retention is 1 by construction. A user leaves
/// the at-risk set from the first period that is not fully observed before
/// `observation_end` (except period 0, which the signup itself witnesses).
pub fn build_cohorts(
    events: &EventLog,
    period_secs: i64,
    horizon: usize,
    observation_end: Option<i64>,
) -> Result<CohortTable> {
    if period_secs <= 0 {
        return Err(Error::Param(format!(
            "period must be positive, got {period_secs}"
        )));
    }
    let latest = events
        .latest_timestamp()
        .ok_or_else(|| Error::Invariant("event log is empty".into()))?;
    let observation_end = observation_end.unwrap_or(latest);
    if observation_end < latest {
        return Err(Error::Param(format!(
            "observation end {observation_end} precedes the latest event {latest}"
        )));
    }

    let signups = events.signups();
    let mut cohort_keys: Vec<i64> = signups
        .iter()
        .map(|&(_, t)| t.div_euclid(period_secs))
        .collect();
    cohort_keys.sort_unstable();
    cohort_keys.dedup();
    let cohort_of = |key: i64| cohort_keys.binary_search(&key).expect("known cohort");

    let mut cohorts: Vec<Cohort> = cohort_keys
        .iter()
        .map(|&key| Cohort {
            key,
            users: 0,
            periods: vec![
                PeriodCell {
                    at_risk: 0,
                    active: 0,
                    actions: 0,
                    censored: false,
                };
                horizon + 1
            ],
        })
        .collect();

    // Activity per user per elapsed period.
    let mut active_in: std::collections::HashMap<(&str, usize), (bool, usize)> =
        std::collections::HashMap::new();
    for r in events.records() {
        if r.kind == EventKind::Signup {
            continue;
        }
        let signup = events.signup_of(&r.user).expect("validated log");
        let elapsed = (r.timestamp - signup).div_euclid(period_secs);
        if elapsed < 0 || elapsed as usize > horizon {
            continue;
        }
        let entry = active_in.entry((r.user.as_str(), elapsed as usize)).or_insert((false, 0));
        entry.0 = true;
        if matches!(r.kind, EventKind::Action(_)) {
            entry.1 += 1;
        }
    }

    for &(user, signup) in &signups {
        let c = cohort_of(signup.div_euclid(period_secs));
        cohorts[c].users += 1;
        // Number of fully observed periods for this user.
        let observed = (observation_end - signup).div_euclid(period_secs);
        for i in 0..=horizon {
            let fully_observed = i == 0 || (i as i64) < observed;
            if !fully_observed {
                break;
            }
            let cell = &mut cohorts[c].periods[i];
            cell.at_risk += 1;
            let (active, actions) = active_in
                .get(&(user, i))
                .copied()
                .unwrap_or((false, 0));
            if i == 0 || active {
                cell.active += 1;
            }
            cell.actions += actions;
        }
    }

    for c in &mut cohorts {
        for cell in &mut c.periods {
            if cell.at_risk == 0 {
                cell.censored = true;
            }
        }
    }

    Ok(CohortTable {
        cohorts,
        period_secs,
        horizon,
        observation_end,
    })
}

/// Hazard rates per interval, all within [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct HazardSeries {
    hazards: Vec<f64>,
}

impl HazardSeries {
    pub fn new(hazards: Vec<f64>) -> Result<Self> {
        for (i, &h) in hazards.iter().enumerate() {
            if !(0.0..=1.0).contains(&h) {
                return Err(Error::Param(format!(
                    "hazard {h} at interval {i} outside [0, 1]"
                )));
            }
        }
        Ok(HazardSeries { hazards })
    }

    pub fn values(&self) -> &[f64] {
        &self.hazards
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalEstimator {
    KaplanMeier,
    NelsonAalen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub estimator: SurvivalEstimator,
    /// S(t_i) per interval, same length as the hazard series.
    pub values: Vec<f64>,
}

/// Per-interval retention rates plus both survival curves.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSummary {
    pub retention: Vec<f64>,
    pub kaplan_meier: SurvivalCurve,
    pub nelson_aalen: SurvivalCurve,
}

pub fn survival_curves(hazards: &HazardSeries) -> SurvivalSummary {
    let lambda = hazards.values();
    let retention: Vec<f64> = lambda.iter().map(|&l| 1.0 - l).collect();
    let mut km = Vec::with_capacity(lambda.len());
    let mut prod = 1.0;
    for &l in lambda {
        prod *= 1.0 - l;
        km.push(prod);
    }
    let mut na = Vec::with_capacity(lambda.len());
    let mut cum = 0.0;
    for &l in lambda {
        cum += l;
        na.push((-cum).exp());
    }
    SurvivalSummary {
        retention,
        kaplan_meier: SurvivalCurve {
            estimator: SurvivalEstimator::KaplanMeier,
            values: km,
        },
        nelson_aalen: SurvivalCurve {
            estimator: SurvivalEstimator::NelsonAalen,
            values: na,
        },
    }
}

/// A correlation that is explicitly not a causal statement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub correlation_not_causality: bool,
}

/// Pearson correlation between action observations `x` and retention
/// observations `y`.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "pearson inputs of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Param("pearson needs at least 2 observations".into()));
    }
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - xm) * (yi - ym);
        sxx += (xi - xm) * (xi - xm);
        syy += (yi - ym) * (yi - ym);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "correlation undefined: an input has zero variance".into(),
        ));
    }
    Ok(Correlation {
        r: sxy / (sxx.sqrt() * syy.sqrt()),
        correlation_not_causality: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventRecord;
    use crate::rng::SplitMix64;

    const DAY: i64 = 86_400;
    const WEEK: i64 = 7 * DAY;

    fn rec(user: &str, ts: i64, kind: EventKind) -> EventRecord {
        EventRecord {
            user: user.into(),
            timestamp: ts,
            kind,
        }
    }

    #[test]
    fn two_user_cohort_counts() {
        // A active in periods 0 and 1, B only in period 0; same cohort.
        let log = EventLog::new(vec![
            rec("a", 0, EventKind::Signup),
            rec("a", WEEK + DAY, EventKind::Active),
            rec("b", DAY, EventKind::Signup),
            // observation end witness so period 1 is fully observed for both
            rec("c", 3 * WEEK, EventKind::Signup),
        ])
        .unwrap();
        let table = build_cohorts(&log, WEEK, 2, None).unwrap();
        let cohort = &table.cohorts[0];
        assert_eq!(cohort.users, 2);
        assert_eq!(cohort.periods[1].at_risk, 2);
        assert_eq!(cohort.periods[1].active, 1);
        assert_eq!(cohort.retention(1), Some(0.5));
        assert_eq!(cohort.retention(0), Some(1.0));
    }

    #[test]
    fn final_period_cohort_is_censored_after_period_zero() {
        let log = EventLog::new(vec![
            rec("a", 0, EventKind::Signup),
            rec("b", 10 * WEEK, EventKind::Signup),
        ])
        .unwrap();
        let table = build_cohorts(&log, WEEK, 3, None).unwrap();
        let last = table.cohorts.last().unwrap();
        assert_eq!(last.key, 10);
        assert!(!last.periods[0].censored);
        assert_eq!(last.retention(0), Some(1.0));
        for i in 1..=3 {
            assert!(last.periods[i].censored, "period {i} should be censored");
        }
    }

    #[test]
    fn nonpositive_period_rejected() {
        let log = EventLog::new(vec![rec("a", 0, EventKind::Signup)]).unwrap();
        assert!(build_cohorts(&log, 0, 3, None).is_err());
    }

    /// Quadratic-time recount, written independently of `build_cohorts`.
    fn brute_force_cell(
        log: &EventLog,
        period: i64,
        cohort_key: i64,
        i: usize,
        obs_end: i64,
    ) -> (usize, usize, usize) {
        let mut at_risk = 0;
        let mut active = 0;
        let mut actions = 0;
        for (user, signup) in log.signups() {
            if signup.div_euclid(period) != cohort_key {
                continue;
            }
            let observed_periods = (obs_end - signup).div_euclid(period);
            let fully_observed = i == 0 || (i as i64) < observed_periods;
            if !fully_observed {
                continue;
            }
            at_risk += 1;
            let lo = signup + i as i64 * period;
            let hi = signup + (i as i64 + 1) * period;
            let mut any = i == 0;
            for r in log.records() {
                if r.user == user && r.timestamp >= lo && r.timestamp < hi {
                    match r.kind {
                        EventKind::Active => any = true,
                        EventKind::Action(_) => {
                            any = true;
                            actions += 1;
                        }
                        EventKind::Signup => {}
                    }
                }
            }
            if any {
                active += 1;
            }
        }
        (at_risk, active, actions)
    }

    #[test]
    fn thousand_user_log_matches_brute_force() {
        let mut rng = SplitMix64::new(424242);
        let mut records = Vec::new();
        for u in 0..1000 {
            let user = format!("u{u:04}");
            let signup = rng.index(10 * WEEK as usize) as i64;
            records.push(rec(&user, signup, EventKind::Signup));
            let mut churned = false;
            for p in 1..=12i64 {
                if churned {
                    break;
                }
                if rng.bernoulli(0.15) {
                    churned = true;
                    continue;
                }
                // 1..3 events somewhere in the period
                for _ in 0..(1 + rng.index(3)) {
                    let ts = signup + p * WEEK + rng.index(WEEK as usize) as i64;
                    let kind = if rng.bernoulli(0.4) {
                        EventKind::Action("share".into())
                    } else {
                        EventKind::Active
                    };
                    records.push(rec(&user, ts, kind));
                }
            }
        }
        let log = EventLog::new(records).unwrap();
        let horizon = 12;
        let table = build_cohorts(&log, WEEK, horizon, None).unwrap();
        let obs_end = log.latest_timestamp().unwrap();
        for cohort in &table.cohorts {
            for i in 0..=horizon {
                let (at_risk, active, actions) =
                    brute_force_cell(&log, WEEK, cohort.key, i, obs_end);
                let cell = &cohort.periods[i];
                assert_eq!(
                    (cell.at_risk, cell.active, cell.actions),
                    (at_risk, active, actions),
                    "cohort {} period {i}",
                    cohort.key
                );
                assert_eq!(cell.censored, at_risk == 0);
            }
        }
    }

    #[test]
    fn survival_closed_forms() {
        let h = HazardSeries::new(vec![0.1, 0.2]).unwrap();
        let s = survival_curves(&h);
        assert!((s.kaplan_meier.values[0] - 0.9).abs() < 1e-15);
        assert!((s.kaplan_meier.values[1] - 0.72).abs() < 1e-15);
        assert!((s.nelson_aalen.values[0] - (-0.1f64).exp()).abs() < 1e-15);
        assert!((s.nelson_aalen.values[1] - (-0.3f64).exp()).abs() < 1e-15);
        assert_eq!(s.retention, vec![0.9, 0.8]);
    }

    #[test]
    fn zero_hazard_means_no_decay() {
        let h = HazardSeries::new(vec![0.0; 5]).unwrap();
        let s = survival_curves(&h);
        assert!(s.kaplan_meier.values.iter().all(|&v| v == 1.0));
        assert!(s.nelson_aalen.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn certain_hazard_annihilates_km_but_not_na() {
        let h = HazardSeries::new(vec![0.1, 1.0, 0.1]).unwrap();
        let s = survival_curves(&h);
        assert_eq!(s.kaplan_meier.values[1], 0.0);
        assert_eq!(s.kaplan_meier.values[2], 0.0);
        assert!(s.nelson_aalen.values[2] > 0.0);
    }

    #[test]
    fn hazard_outside_unit_interval_rejected() {
        assert!(HazardSeries::new(vec![0.5, 1.2]).is_err());
        assert!(HazardSeries::new(vec![-0.1]).is_err());
    }

    #[test]
    fn pearson_perfect_affine() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v + 1.0).collect();
        let c = pearson_r(&x, &y).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert!(c.correlation_not_causality);
        let neg: Vec<f64> = x.iter().map(|&v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap().r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_input_errors() {
        let x = vec![1.0, 2.0, 3.0];
        let y = vec![5.0, 5.0, 5.0];
        assert!(matches!(
            pearson_r(&x, &y),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn pearson_symmetry_and_affine_invariance() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..20 {
            let x: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
            let a = pearson_r(&x, &y).unwrap().r;
            let b = pearson_r(&y, &x).unwrap().r;
            assert!((a - b).abs() < 1e-12);
            let scaled: Vec<f64> = x.iter().map(|&v| 3.5 * v + 2.0).collect();
            let c = pearson_r(&scaled, &y).unwrap().r;
            assert!((a - c).abs() < 1e-12);
        }
    }

    // KM <= NA pointwise since 1 - x <= exp(-x).
    #[test]
    fn km_below_na_on_random_series() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..200 {
            let len = 1 + rng.index(20);
            let h: Vec<f64> = (0..len).map(|_| rng.next_f64()).collect();
            let s = survival_curves(&HazardSeries::new(h).unwrap());
            for (km, na) in s
                .kaplan_meier
                .values
                .iter()
                .zip(&s.nelson_aalen.values)
            {
                assert!(km <= na, "KM {km} > NA {na}");
            }
            for w in s.kaplan_meier.values.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
            for w in s.nelson_aalen.values.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }
}
