//! Per-subcommand configuration resolution and execution.
//!
//! Resolution order: command-line flag, then config-file key, then default.
//! The fully resolved configuration is echoed to `<out>/run_config.json`
//! before the run so any result can be reproduced from its output directory
//! alone.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use appgrowth_core::campaign::{self, Estimator, Link, ResponseCurve};
use appgrowth_core::crowd;
use appgrowth_core::ingest::{
    self,
    table::{fmt_float, parse_timestamp, read_csv},
    IdMap, PrivacyMap, RatingsTriples,
};
use appgrowth_core::maturity::{self, EmbeddingTable, MaturityModel, MaturityPolicy};
use appgrowth_core::rec::{self, ContextFactorModel, FactorModel};
use appgrowth_core::retention;
use appgrowth_core::risk::{self, RiskModel};

use crate::args::{CampaignCmd, Cli, Command, EmbedCmd, MaturityCmd, RecCmd};
use crate::error::CliError;
use crate::out::{read_json, write_json, CsvOut};

const DEFAULT_SEED: u64 = 42;

fn require<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required key {key:?}")))
}

fn load_file_cfg<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn prepare_out(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let out = require(out, "out")?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(out)
}

fn echo_config<T: Serialize>(out: &Path, cfg: &T) -> Result<(), CliError> {
    write_json(&out.join("run_config.json"), cfg)
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::RiskFit {
            data,
            views,
            alpha,
            beta,
            tol,
            max_iter,
        } => risk_fit(
            cli.config, cli.seed, cli.out, data, views, alpha, beta, tol, max_iter,
        ),
        Command::RiskRank {
            model,
            data,
            views,
            risk_class,
        } => risk_rank(cli.config, cli.seed, cli.out, model, data, views, risk_class),
        Command::CrowdRank {
            annotations,
            pairs,
            lambda,
            c,
            em_max_iter,
            em_tol,
        } => crowd_rank(
            cli.config,
            cli.seed,
            cli.out,
            annotations,
            pairs,
            lambda,
            c,
            em_max_iter,
            em_tol,
        ),
        Command::Retention {
            events,
            period,
            horizon,
            observation_end,
        } => retention_cmd(
            cli.config,
            cli.seed,
            cli.out,
            events,
            period,
            horizon,
            observation_end,
        ),
        Command::Campaign { sub } => match sub {
            CampaignCmd::Effects {
                study,
                link,
                degree,
                estimator,
                strata,
            } => campaign_effects(
                cli.config, cli.seed, cli.out, study, link, degree, estimator, strata,
            ),
            CampaignCmd::Balance {
                study,
                link,
                degree,
                strata,
                threshold,
            } => campaign_balance(
                cli.config, cli.seed, cli.out, study, link, degree, strata, threshold,
            ),
            CampaignCmd::Budget { curves, total } => {
                campaign_budget(cli.config, cli.seed, cli.out, curves, total)
            }
        },
        Command::Rec { sub } => match sub {
            RecCmd::Fit {
                ratings,
                privacy,
                lambda,
                context,
                rank,
                sweeps,
                tol,
            } => rec_fit(
                cli.config, cli.seed, cli.out, ratings, privacy, lambda, context, rank, sweeps,
                tol,
            ),
            RecCmd::Topk {
                model,
                user,
                k,
                context,
                ratings,
            } => rec_topk(cli.config, cli.seed, cli.out, model, user, k, context, ratings),
            RecCmd::Eval {
                model,
                ratings,
                heldout,
                k,
            } => rec_eval(cli.config, cli.seed, cli.out, model, ratings, heldout, k),
        },
        Command::Embed { sub } => match sub {
            EmbedCmd::Train {
                corpus,
                dim,
                window,
                epochs,
                learning_rate,
            } => embed_train(
                cli.config,
                cli.seed,
                cli.out,
                corpus,
                dim,
                window,
                epochs,
                learning_rate,
            ),
        },
        Command::Maturity { sub } => match sub {
            MaturityCmd::Fit {
                docs,
                emb,
                policy,
                gamma,
                regularizer,
            } => maturity_fit(
                cli.config,
                cli.seed,
                cli.out,
                docs,
                emb,
                policy,
                gamma,
                regularizer,
            ),
            MaturityCmd::Predict { model, docs } => {
                maturity_predict(cli.config, cli.seed, cli.out, model, docs)
            }
        },
    }
}

// ------------------------------------------------------------ risk-fit

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskFitFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    views: Option<PathBuf>,
    alpha: Option<f64>,
    beta: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Serialize)]
struct RiskFitConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    data: PathBuf,
    views: PathBuf,
    alpha: f64,
    beta: f64,
    tol: f64,
    max_iter: usize,
}

#[allow(clippy::too_many_arguments)]
fn risk_fit(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    views: Option<PathBuf>,
    alpha: Option<f64>,
    beta: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> Result<(), CliError> {
    let file: RiskFitFile = load_file_cfg(&config)?;
    let cfg = RiskFitConfig {
        subcommand: "risk-fit",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        data: require(data.or(file.data), "data")?,
        views: require(views.or(file.views), "views")?,
        alpha: require(alpha.or(file.alpha), "alpha")?,
        beta: require(beta.or(file.beta), "beta")?,
        tol: tol.or(file.tol).unwrap_or(1e-7),
        max_iter: max_iter.or(file.max_iter).unwrap_or(500),
    };
    echo_config(&cfg.out, &cfg)?;

    let dataset = ingest::load_multiview(&cfg.data, &cfg.views)?;
    let model = risk::fit_irls(
        &dataset,
        cfg.alpha,
        cfg.beta,
        risk::FitOptions {
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            ..Default::default()
        },
    )?;
    write_json(&cfg.out.join("model.json"), &model)?;

    let mut imp = CsvOut::create(&cfg.out.join("view_importance.csv"), &["view", "importance"])?;
    for (name, value) in risk::view_importance(&model) {
        imp.row([name, fmt_float(value)])?;
    }
    imp.finish()
}

// ----------------------------------------------------------- risk-rank

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskRankFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    views: Option<PathBuf>,
    risk_class: Option<String>,
}

#[derive(Debug, Serialize)]
struct RiskRankConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    model: PathBuf,
    data: PathBuf,
    views: PathBuf,
    risk_class: String,
}

fn risk_rank(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    views: Option<PathBuf>,
    risk_class: Option<String>,
) -> Result<(), CliError> {
    let file: RiskRankFile = load_file_cfg(&config)?;
    let cfg = RiskRankConfig {
        subcommand: "risk-rank",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        model: require(model.or(file.model), "model")?,
        data: require(data.or(file.data), "data")?,
        views: require(views.or(file.views), "views")?,
        risk_class: risk_class
            .or(file.risk_class)
            .unwrap_or_else(|| risk::DEFAULT_RISK_CLASS.to_string()),
    };
    echo_config(&cfg.out, &cfg)?;

    let model: RiskModel = read_json(&cfg.model)?;
    let dataset = ingest::load_multiview(&cfg.data, &cfg.views)?;
    let ranking = risk::predict_and_rank(&model, &dataset, Some(&cfg.risk_class))?;

    let mut w = CsvOut::create(&cfg.out.join("ranking.csv"), &["app_id", "risk_score", "rank"])?;
    for (rank, &i) in ranking.order.iter().enumerate() {
        w.row([
            dataset.sample_ids[i].clone(),
            fmt_float(ranking.scores[i]),
            (rank + 1).to_string(),
        ])?;
    }
    w.finish()
}

// ---------------------------------------------------------- crowd-rank

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrowdRankFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    annotations: Option<PathBuf>,
    pairs: Option<PathBuf>,
    lambda: Option<f64>,
    #[serde(rename = "C")]
    c: Option<f64>,
    em_max_iter: Option<usize>,
    em_tol: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CrowdRankConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    annotations: PathBuf,
    pairs: PathBuf,
    lambda: f64,
    #[serde(rename = "C")]
    c: f64,
    em_max_iter: usize,
    em_tol: f64,
}

#[allow(clippy::too_many_arguments)]
fn crowd_rank(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    annotations: Option<PathBuf>,
    pairs: Option<PathBuf>,
    lambda: Option<f64>,
    c: Option<f64>,
    em_max_iter: Option<usize>,
    em_tol: Option<f64>,
) -> Result<(), CliError> {
    let file: CrowdRankFile = load_file_cfg(&config)?;
    let cfg = CrowdRankConfig {
        subcommand: "crowd-rank",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        annotations: require(annotations.or(file.annotations), "annotations")?,
        pairs: require(pairs.or(file.pairs), "pairs")?,
        lambda: require(lambda.or(file.lambda), "lambda")?,
        c: require(c.or(file.c), "C")?,
        em_max_iter: em_max_iter.or(file.em_max_iter).unwrap_or(200),
        em_tol: em_tol.or(file.em_tol).unwrap_or(1e-10),
    };
    echo_config(&cfg.out, &cfg)?;

    let (set, apps, _annotators) = crowd::load_annotations(&cfg.annotations)?;
    let posterior = crowd::aggregate_em(&set, cfg.em_max_iter, cfg.em_tol)?;
    let pairs = crowd::load_pairs(&cfg.pairs, &apps)?;
    let features = posterior.features();
    let fit = crowd::fit_rank(&features, &pairs, cfg.lambda, cfg.c, 1e-12, 1000)?;
    let ranked = crowd::risk_ranking(&fit.scores);

    let mut w = CsvOut::create(&cfg.out.join("scores.csv"), &["app_id", "score", "rank"])?;
    for (rank, &(i, score)) in ranked.iter().enumerate() {
        w.row([
            apps.name(i).to_string(),
            fmt_float(score),
            (rank + 1).to_string(),
        ])?;
    }
    w.finish()?;
    write_json(&cfg.out.join("crowd_diagnostics.json"), &CrowdDiag {
        reliability: posterior.reliability.clone(),
        em_iterations: posterior.iterations,
        em_converged: posterior.converged,
        ranking_objective: fit.objective,
        warnings: posterior.warnings.clone(),
    })
}

#[derive(Debug, Serialize)]
struct CrowdDiag {
    reliability: Vec<f64>,
    em_iterations: usize,
    em_converged: bool,
    ranking_objective: f64,
    warnings: Vec<String>,
}

// ----------------------------------------------------------- retention

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RetentionFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    events: Option<PathBuf>,
    period: Option<String>,
    horizon: Option<usize>,
    observation_end: Option<String>,
}

#[derive(Debug, Serialize)]
struct RetentionConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    events: PathBuf,
    period: String,
    horizon: usize,
    observation_end: Option<String>,
}

fn parse_period(s: &str) -> Result<i64, CliError> {
    match s {
        "day" => Ok(86_400),
        "week" => Ok(7 * 86_400),
        "month" => Ok(30 * 86_400),
        other => other
            .strip_prefix("secs:")
            .and_then(|n| n.parse::<i64>().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "bad period {other:?}: expected day, week, month or secs:<n>"
                ))
            }),
    }
}

fn retention_cmd(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    events: Option<PathBuf>,
    period: Option<String>,
    horizon: Option<usize>,
    observation_end: Option<String>,
) -> Result<(), CliError> {
    let file: RetentionFile = load_file_cfg(&config)?;
    let cfg = RetentionConfig {
        subcommand: "retention",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        events: require(events.or(file.events), "events")?,
        period: period.or(file.period).unwrap_or_else(|| "week".to_string()),
        horizon: horizon.or(file.horizon).unwrap_or(12),
        observation_end: observation_end.or(file.observation_end),
    };
    echo_config(&cfg.out, &cfg)?;

    let period_secs = parse_period(&cfg.period)?;
    let obs_end = match &cfg.observation_end {
        None => None,
        Some(s) => Some(parse_timestamp(s).ok_or_else(|| {
            CliError::Config(format!("bad observation_end {s:?}: expected RFC 3339"))
        })?),
    };
    let log = ingest::load_events(&cfg.events)?;
    let table = retention::build_cohorts(&log, period_secs, cfg.horizon, obs_end)?;

    let mut w = CsvOut::create(
        &cfg.out.join("cohorts.csv"),
        &["cohort", "period", "at_risk", "active", "actions", "retention", "censored"],
    )?;
    for cohort in &table.cohorts {
        for (i, cell) in cohort.periods.iter().enumerate() {
            let retention = cohort
                .retention(i)
                .map(fmt_float)
                .unwrap_or_default();
            w.row([
                cohort.key.to_string(),
                i.to_string(),
                cell.at_risk.to_string(),
                cell.active.to_string(),
                cell.actions.to_string(),
                retention,
                (u8::from(cell.censored)).to_string(),
            ])?;
        }
    }
    w.finish()?;

    let hazards = retention::HazardSeries::new(table.pooled_hazards())
        .map_err(CliError::from)?;
    let curves = retention::survival_curves(&hazards);
    for (name, values) in [
        ("km.csv", &curves.kaplan_meier.values),
        ("na.csv", &curves.nelson_aalen.values),
    ] {
        let mut w = CsvOut::create(&cfg.out.join(name), &["t_index", "value"])?;
        for (i, &v) in values.iter().enumerate() {
            w.row([i.to_string(), fmt_float(v)])?;
        }
        w.finish()?;
    }
    Ok(())
}

// ----------------------------------------------------- campaign effects

fn parse_link(s: &str) -> Result<Link, CliError> {
    match s {
        "probit" => Ok(Link::Probit),
        "logit" => Ok(Link::Logit),
        other => Err(CliError::Config(format!(
            "bad link {other:?}: expected probit or logit"
        ))),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EffectsFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    study: Option<PathBuf>,
    link: Option<String>,
    degree: Option<u32>,
    estimator: Option<String>,
    strata: Option<usize>,
}

#[derive(Debug, Serialize)]
struct EffectsConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    study: PathBuf,
    link: String,
    degree: u32,
    estimator: String,
    strata: usize,
}

#[allow(clippy::too_many_arguments)]
fn campaign_effects(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    study: Option<PathBuf>,
    link: Option<String>,
    degree: Option<u32>,
    estimator: Option<String>,
    strata: Option<usize>,
) -> Result<(), CliError> {
    let file: EffectsFile = load_file_cfg(&config)?;
    let cfg = EffectsConfig {
        subcommand: "campaign effects",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        study: require(study.or(file.study), "study")?,
        link: link.or(file.link).unwrap_or_else(|| "probit".to_string()),
        degree: degree.or(file.degree).unwrap_or(1),
        estimator: estimator
            .or(file.estimator)
            .unwrap_or_else(|| "ipw".to_string()),
        strata: strata.or(file.strata).unwrap_or(5),
    };
    echo_config(&cfg.out, &cfg)?;

    let link = parse_link(&cfg.link)?;
    let estimator = match cfg.estimator.as_str() {
        "ipw" => Estimator::Ipw,
        "stratified" => Estimator::Stratified,
        other => {
            return Err(CliError::Config(format!(
                "bad estimator {other:?}: expected ipw or stratified"
            )))
        }
    };
    let table = ingest::load_study(&cfg.study)?;
    let model = campaign::fit_propensity(&table, link, cfg.degree)?;
    let scores = model.scores(&table)?;
    let effects = campaign::estimate_effects(&table, &scores, estimator, cfg.strata)?;
    write_json(&cfg.out.join("effects.json"), &effects)?;
    write_json(&cfg.out.join("propensity.json"), &model)
}

// ----------------------------------------------------- campaign balance

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BalanceFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    study: Option<PathBuf>,
    link: Option<String>,
    degree: Option<u32>,
    strata: Option<usize>,
    threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BalanceConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    study: PathBuf,
    link: String,
    degree: u32,
    strata: usize,
    threshold: f64,
}

#[allow(clippy::too_many_arguments)]
fn campaign_balance(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    study: Option<PathBuf>,
    link: Option<String>,
    degree: Option<u32>,
    strata: Option<usize>,
    threshold: Option<f64>,
) -> Result<(), CliError> {
    let file: BalanceFile = load_file_cfg(&config)?;
    let cfg = BalanceConfig {
        subcommand: "campaign balance",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        study: require(study.or(file.study), "study")?,
        link: link.or(file.link).unwrap_or_else(|| "probit".to_string()),
        degree: degree.or(file.degree).unwrap_or(1),
        strata: strata.or(file.strata).unwrap_or(5),
        threshold: threshold.or(file.threshold).unwrap_or(0.1),
    };
    echo_config(&cfg.out, &cfg)?;

    let link = parse_link(&cfg.link)?;
    let table = ingest::load_study(&cfg.study)?;
    let model = campaign::fit_propensity(&table, link, cfg.degree)?;
    let scores = model.scores(&table)?;
    let report = campaign::check_balance(&scores, &table, cfg.strata, cfg.threshold)?;
    write_json(&cfg.out.join("balance.json"), &report)
}

// ------------------------------------------------------ campaign budget

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    curves: Option<PathBuf>,
    total: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BudgetConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    curves: PathBuf,
    total: f64,
}

fn campaign_budget(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    curves: Option<PathBuf>,
    total: Option<f64>,
) -> Result<(), CliError> {
    let file: BudgetFile = load_file_cfg(&config)?;
    let cfg = BudgetConfig {
        subcommand: "campaign budget",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        curves: require(curves.or(file.curves), "curves")?,
        total: require(total.or(file.total), "total")?,
    };
    echo_config(&cfg.out, &cfg)?;

    // curves.csv: channel, cap, rate, capacity
    let csv = read_csv(&cfg.curves)?;
    csv.expect_header(&["channel", "cap", "rate", "capacity"])?;
    let mut names = Vec::new();
    let mut curves = Vec::new();
    let mut capacities = Vec::new();
    for i in 0..csv.len() {
        names.push(csv.identifier(i, 0)?);
        let cap = csv.numeric(i, 1)?;
        let rate = csv.numeric(i, 2)?;
        curves.push(ResponseCurve::new(cap, rate)?);
        capacities.push(csv.numeric(i, 3)?);
    }
    let alloc = campaign::allocate_budget(&curves, &capacities, cfg.total)?;

    let mut w = CsvOut::create(
        &cfg.out.join("alloc.csv"),
        &["channel", "spend", "projected_users"],
    )?;
    for (i, name) in names.iter().enumerate() {
        w.row([
            name.clone(),
            fmt_float(alloc.spend[i]),
            fmt_float(alloc.projected_users[i]),
        ])?;
    }
    w.finish()?;
    write_json(&cfg.out.join("budget_summary.json"), &alloc)
}

// -------------------------------------------------------------- rec fit

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecFitFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    ratings: Option<PathBuf>,
    privacy: Option<PathBuf>,
    lambda: Option<f64>,
    context: Option<PathBuf>,
    rank: Option<usize>,
    sweeps: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RecFitConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    ratings: Option<PathBuf>,
    privacy: Option<PathBuf>,
    lambda: Option<f64>,
    context: Option<PathBuf>,
    rank: usize,
    sweeps: usize,
    tol: f64,
}

/// On-disk recommender model with the id maps needed to resolve external
/// ids at serving time.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum RecModelFile {
    Privacy {
        users: Vec<String>,
        items: Vec<String>,
        permissions: Vec<String>,
        model: FactorModel,
    },
    Context {
        users: Vec<String>,
        items: Vec<String>,
        contexts: Vec<String>,
        model: ContextFactorModel,
    },
}

#[allow(clippy::too_many_arguments)]
fn rec_fit(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    ratings: Option<PathBuf>,
    privacy: Option<PathBuf>,
    lambda: Option<f64>,
    context: Option<PathBuf>,
    rank: Option<usize>,
    sweeps: Option<usize>,
    tol: Option<f64>,
) -> Result<(), CliError> {
    let file: RecFitFile = load_file_cfg(&config)?;
    let cfg = RecFitConfig {
        subcommand: "rec fit",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        ratings: ratings.or(file.ratings),
        privacy: privacy.or(file.privacy),
        lambda: lambda.or(file.lambda),
        context: context.or(file.context),
        rank: require(rank.or(file.rank), "rank")?,
        sweeps: sweeps.or(file.sweeps).unwrap_or(300),
        tol: tol.or(file.tol).unwrap_or(1e-8),
    };
    echo_config(&cfg.out, &cfg)?;

    let opts = rec::FitOptions {
        rank: cfg.rank,
        max_sweeps: cfg.sweeps,
        tol: cfg.tol,
        seed: cfg.seed,
    };

    let model_file = if let Some(context_path) = &cfg.context {
        if cfg.privacy.is_some() {
            return Err(CliError::Config(
                "privacy and context are mutually exclusive".into(),
            ));
        }
        let quads = ingest::load_context(context_path)?;
        let model = rec::fit_context(&quads, opts)?;
        write_json(&cfg.out.join("id_map.json"), &serde_json::json!({
            "users": quads.users.ids(),
            "items": quads.items.ids(),
            "contexts": quads.contexts.ids(),
        }))?;
        RecModelFile::Context {
            users: quads.users.ids().to_vec(),
            items: quads.items.ids().to_vec(),
            contexts: quads.contexts.ids().to_vec(),
            model,
        }
    } else {
        let ratings_path = require(cfg.ratings.clone(), "ratings")?;
        let ratings = ingest::load_ratings(&ratings_path)?;
        let (privacy_map, lambda) = match &cfg.privacy {
            Some(p) => (
                ingest::load_privacy(p, &ratings)?,
                require(cfg.lambda, "lambda")?,
            ),
            None => (PrivacyMap::empty(ratings.n_items()), cfg.lambda.unwrap_or(0.0)),
        };
        let model = rec::fit_privacy(&ratings, &privacy_map, lambda, opts)?;
        write_json(&cfg.out.join("id_map.json"), &serde_json::json!({
            "users": ratings.users.ids(),
            "items": ratings.items.ids(),
        }))?;
        RecModelFile::Privacy {
            users: ratings.users.ids().to_vec(),
            items: ratings.items.ids().to_vec(),
            permissions: privacy_map.permissions.ids().to_vec(),
            model,
        }
    };
    write_json(&cfg.out.join("model.json"), &model_file)
}

// ------------------------------------------------------------- rec topk

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecTopkFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    user: Option<String>,
    k: Option<usize>,
    context: Option<String>,
    ratings: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RecTopkConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    model: PathBuf,
    user: String,
    k: usize,
    context: Option<String>,
    ratings: Option<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
fn rec_topk(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    user: Option<String>,
    k: Option<usize>,
    context: Option<String>,
    ratings: Option<PathBuf>,
) -> Result<(), CliError> {
    let file: RecTopkFile = load_file_cfg(&config)?;
    let cfg = RecTopkConfig {
        subcommand: "rec topk",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        model: require(model.or(file.model), "model")?,
        user: require(user.or(file.user), "user")?,
        k: k.or(file.k).unwrap_or(10),
        context: context.or(file.context),
        ratings: ratings.or(file.ratings),
    };
    echo_config(&cfg.out, &cfg)?;

    let model_file: RecModelFile = read_json(&cfg.model)?;
    let (users, items): (&[String], &[String]) = match &model_file {
        RecModelFile::Privacy { users, items, .. } => (users, items),
        RecModelFile::Context { users, items, .. } => (users, items),
    };
    let user_idx = users
        .iter()
        .position(|u| *u == cfg.user)
        .ok_or_else(|| CliError::Compute(format!("unknown user {:?}", cfg.user)))?;

    // Seen items from an optional ratings file, resolved by external id.
    let mut seen = BTreeSet::new();
    if let Some(path) = &cfg.ratings {
        let ratings = ingest::load_ratings(path)?;
        for &(u, i, _) in &ratings.triples {
            if ratings.users.name(u) == cfg.user {
                let name = ratings.items.name(i);
                if let Some(idx) = items.iter().position(|it| it == name) {
                    seen.insert(idx);
                }
            }
        }
    }

    let top = match &model_file {
        RecModelFile::Privacy { model, .. } => model.top_k(user_idx, cfg.k, &seen)?,
        RecModelFile::Context {
            model, contexts, ..
        } => {
            let ctx_name = require(cfg.context.clone(), "context")?;
            let ctx_idx = contexts
                .iter()
                .position(|c| *c == ctx_name)
                .ok_or_else(|| CliError::Compute(format!("unknown context {ctx_name:?}")))?;
            model.top_k(user_idx, ctx_idx, cfg.k, &seen)?
        }
    };

    let mut w = CsvOut::create(&cfg.out.join("topk.csv"), &["rank", "item_id", "score"])?;
    for (rank, &(item, score)) in top.items.iter().enumerate() {
        let row = [
            (rank + 1).to_string(),
            items[item].clone(),
            fmt_float(score),
        ];
        println!("{}", row.join(","));
        w.row(row)?;
    }
    if top.clamped {
        println!("note: k clamped to catalog size {}", top.items.len());
    }
    w.finish()
}

// ------------------------------------------------------------- rec eval

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecEvalFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    ratings: Option<PathBuf>,
    heldout: Option<PathBuf>,
    k: Option<usize>,
}

#[derive(Debug, Serialize)]
struct RecEvalConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    model: PathBuf,
    ratings: PathBuf,
    heldout: PathBuf,
    k: usize,
}

/// Remap a ratings file onto the model's dense id space.
fn remap_ratings(
    raw: &RatingsTriples,
    users: &[String],
    items: &[String],
    what: &str,
) -> Result<RatingsTriples, CliError> {
    let user_map = IdMap::from_ids(users.to_vec());
    let item_map = IdMap::from_ids(items.to_vec());
    let mut triples = Vec::with_capacity(raw.triples.len());
    for &(u, i, y) in &raw.triples {
        let u2 = user_map.get(raw.users.name(u)).ok_or_else(|| {
            CliError::Io(format!(
                "{what}: user {:?} not in the model",
                raw.users.name(u)
            ))
        })?;
        let i2 = item_map.get(raw.items.name(i)).ok_or_else(|| {
            CliError::Io(format!(
                "{what}: item {:?} not in the model",
                raw.items.name(i)
            ))
        })?;
        triples.push((u2, i2, y));
    }
    RatingsTriples::new(user_map, item_map, triples).map_err(CliError::from)
}

fn rec_eval(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    ratings: Option<PathBuf>,
    heldout: Option<PathBuf>,
    k: Option<usize>,
) -> Result<(), CliError> {
    let file: RecEvalFile = load_file_cfg(&config)?;
    let cfg = RecEvalConfig {
        subcommand: "rec eval",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        model: require(model.or(file.model), "model")?,
        ratings: require(ratings.or(file.ratings), "ratings")?,
        heldout: require(heldout.or(file.heldout), "heldout")?,
        k: k.or(file.k).unwrap_or(10),
    };
    echo_config(&cfg.out, &cfg)?;

    let model_file: RecModelFile = read_json(&cfg.model)?;
    let RecModelFile::Privacy {
        users,
        items,
        model,
        ..
    } = model_file
    else {
        return Err(CliError::Config(
            "rec eval supports privacy/plain models only".into(),
        ));
    };
    let train = remap_ratings(&ingest::load_ratings(&cfg.ratings)?, &users, &items, "ratings")?;
    let held = remap_ratings(&ingest::load_ratings(&cfg.heldout)?, &users, &items, "heldout")?;
    let precision = rec::precision_at_k(&model, &train, &held, cfg.k)?;
    write_json(
        &cfg.out.join("eval.json"),
        &serde_json::json!({ "k": cfg.k, "precision_at_k": precision }),
    )
}

// ----------------------------------------------------------- embed train

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbedTrainFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    corpus: Option<PathBuf>,
    dim: Option<usize>,
    window: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EmbedTrainConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    corpus: PathBuf,
    dim: usize,
    window: usize,
    epochs: usize,
    learning_rate: f64,
}

#[allow(clippy::too_many_arguments)]
fn embed_train(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    corpus: Option<PathBuf>,
    dim: Option<usize>,
    window: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
) -> Result<(), CliError> {
    let file: EmbedTrainFile = load_file_cfg(&config)?;
    let cfg = EmbedTrainConfig {
        subcommand: "embed train",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        corpus: require(corpus.or(file.corpus), "corpus")?,
        dim: dim.or(file.dim).unwrap_or(50),
        window: window.or(file.window).unwrap_or(2),
        epochs: epochs.or(file.epochs).unwrap_or(5),
        learning_rate: learning_rate.or(file.learning_rate).unwrap_or(0.05),
    };
    echo_config(&cfg.out, &cfg)?;

    let corpus = ingest::load_corpus(&cfg.corpus)?;
    let table = maturity::train_skipgram(
        &corpus,
        maturity::SkipGramOptions {
            dim: cfg.dim,
            window: cfg.window,
            learning_rate: cfg.learning_rate,
            epochs: cfg.epochs,
            seed: cfg.seed,
        },
    )?;
    write_json(&cfg.out.join("emb.json"), &table)
}

// ----------------------------------------------------------- maturity

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaturityFitFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    docs: Option<PathBuf>,
    emb: Option<PathBuf>,
    policy: Option<PathBuf>,
    gamma: Option<f64>,
    regularizer: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MaturityFitConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    docs: PathBuf,
    emb: PathBuf,
    policy: PathBuf,
    gamma: f64,
    regularizer: f64,
}

/// Self-contained maturity artifact: classifier, embedding table, policy.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaturityModelFile {
    pub model: MaturityModel,
    pub embedding: EmbeddingTable,
    pub policy: MaturityPolicy,
}

fn embed_docs(
    docs: &ingest::AppDocs,
    table: &EmbeddingTable,
) -> Result<Array2<f64>, CliError> {
    let mut x = Array2::zeros((docs.n(), table.dim));
    for i in 0..docs.n() {
        let e = maturity::app_embed(&docs.tokens[i], table).map_err(|err| {
            CliError::Compute(format!("app {:?}: {err}", docs.app_ids[i]))
        })?;
        x.row_mut(i).assign(&e);
    }
    Ok(x)
}

#[allow(clippy::too_many_arguments)]
fn maturity_fit(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    docs: Option<PathBuf>,
    emb: Option<PathBuf>,
    policy: Option<PathBuf>,
    gamma: Option<f64>,
    regularizer: Option<f64>,
) -> Result<(), CliError> {
    let file: MaturityFitFile = load_file_cfg(&config)?;
    let cfg = MaturityFitConfig {
        subcommand: "maturity fit",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        docs: require(docs.or(file.docs), "docs")?,
        emb: require(emb.or(file.emb), "emb")?,
        policy: require(policy.or(file.policy), "policy")?,
        gamma: gamma.or(file.gamma).unwrap_or(0.2),
        regularizer: regularizer.or(file.regularizer).unwrap_or(1e-3),
    };
    echo_config(&cfg.out, &cfg)?;

    let docs = ingest::load_app_docs(&cfg.docs)?;
    let table: EmbeddingTable = read_json(&cfg.emb)?;
    let policy: MaturityPolicy = read_json(&cfg.policy)?;
    for label in &docs.label_universe {
        if !policy.contains_key(label) {
            return Err(CliError::Config(format!(
                "policy does not cover label {label:?}"
            )));
        }
    }
    let x = embed_docs(&docs, &table)?;
    let model = maturity::fit_maturity(
        &x,
        &docs.labels,
        &docs.label_universe,
        cfg.gamma,
        cfg.regularizer,
    )?;
    write_json(
        &cfg.out.join("mat.json"),
        &MaturityModelFile {
            model,
            embedding: table,
            policy,
        },
    )
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaturityPredictFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    docs: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct MaturityPredictConfig {
    subcommand: &'static str,
    seed: u64,
    out: PathBuf,
    model: PathBuf,
    docs: PathBuf,
}

fn maturity_predict(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
    docs: Option<PathBuf>,
) -> Result<(), CliError> {
    let file: MaturityPredictFile = load_file_cfg(&config)?;
    let cfg = MaturityPredictConfig {
        subcommand: "maturity predict",
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: prepare_out(out.or(file.out))?,
        model: require(model.or(file.model), "model")?,
        docs: require(docs.or(file.docs), "docs")?,
    };
    echo_config(&cfg.out, &cfg)?;

    let artifact: MaturityModelFile = read_json(&cfg.model)?;
    let docs = ingest::load_app_docs(&cfg.docs)?;
    let mut w = CsvOut::create(&cfg.out.join("pred.csv"), &["app_id", "labels", "level"])?;
    for i in 0..docs.n() {
        let e: Array1<f64> = maturity::app_embed(&docs.tokens[i], &artifact.embedding)
            .map_err(|err| CliError::Compute(format!("app {:?}: {err}", docs.app_ids[i])))?;
        let labels = artifact.model.predict(&e)?;
        let level = maturity::maturity_level(&labels, &artifact.policy)?;
        w.row([
            docs.app_ids[i].clone(),
            labels.join(";"),
            level.to_string(),
        ])?;
    }
    w.finish()
}
