use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Growth and risk analytics over app-market data.
#[derive(Debug, Parser)]
#[command(name = "appgrowth", version, disable_help_subcommand = true)]
pub struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master RNG seed (default 42).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the multi-view sparse risk model.
    #[command(name = "risk-fit")]
    RiskFit {
        /// multiview.csv (app_id, label, f1..fp)
        #[arg(long)]
        data: Option<PathBuf>,
        /// views.json ({"view": ["f1", ...]})
        #[arg(long)]
        views: Option<PathBuf>,
        /// Group (inter-view) penalty weight.
        #[arg(long)]
        alpha: Option<f64>,
        /// Exclusive (intra-view) penalty weight.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },

    /// Score and rank apps with a fitted risk model.
    #[command(name = "risk-rank")]
    RiskRank {
        /// model.json produced by risk-fit.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        views: Option<PathBuf>,
        /// Label treated as the risk class (default "risky").
        #[arg(long)]
        risk_class: Option<String>,
    },

    /// Aggregate crowd annotations and rank apps by fitted risk scores.
    #[command(name = "crowd-rank")]
    CrowdRank {
        /// ann.csv (app_id, annotator_id, label)
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// pairs.csv (better_app_id, worse_app_id)
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Ridge weight of the ranking objective.
        #[arg(long)]
        lambda: Option<f64>,
        /// Pairwise-loss weight of the ranking objective.
        #[arg(long = "C")]
        c: Option<f64>,
        #[arg(long)]
        em_max_iter: Option<usize>,
        #[arg(long)]
        em_tol: Option<f64>,
    },

    /// Cohort retention table and survival curves from an event log.
    Retention {
        /// events.csv (user_id, timestamp, event)
        #[arg(long)]
        events: Option<PathBuf>,
        /// day | week | month | secs:<n>
        #[arg(long)]
        period: Option<String>,
        /// Number of elapsed periods to track (table covers 0..=horizon).
        #[arg(long)]
        horizon: Option<usize>,
        /// RFC 3339 censoring boundary; defaults to the latest event.
        #[arg(long)]
        observation_end: Option<String>,
    },

    /// Campaign effectiveness analytics.
    Campaign {
        #[command(subcommand)]
        sub: CampaignCmd,
    },

    /// Poisson-factorization recommenders.
    Rec {
        #[command(subcommand)]
        sub: RecCmd,
    },

    /// Word embeddings.
    Embed {
        #[command(subcommand)]
        sub: EmbedCmd,
    },

    /// Maturity rating pipeline.
    Maturity {
        #[command(subcommand)]
        sub: MaturityCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum CampaignCmd {
    /// ATE/ATT from propensity scores.
    Effects {
        /// study.csv (outcome, treatment, x1..xd)
        #[arg(long)]
        study: Option<PathBuf>,
        /// probit | logit
        #[arg(long)]
        link: Option<String>,
        /// Covariate expansion degree (1 or 2).
        #[arg(long)]
        degree: Option<u32>,
        /// ipw | stratified
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        strata: Option<usize>,
    },
    /// Covariate balance before/after propensity stratification.
    Balance {
        #[arg(long)]
        study: Option<PathBuf>,
        #[arg(long)]
        link: Option<String>,
        #[arg(long)]
        degree: Option<u32>,
        #[arg(long)]
        strata: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Greedy marginal-ROI budget allocation over fitted response curves.
    Budget {
        /// curves.csv (channel, cap, rate, capacity)
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        total: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RecCmd {
    /// Fit a privacy-aware (default) or context-aware factorization.
    Fit {
        /// ratings.csv (user_id, item_id, count)
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// privacy.csv (item_id, permission_id); privacy-aware variant.
        #[arg(long)]
        privacy: Option<PathBuf>,
        /// Privacy trade-off weight.
        #[arg(long)]
        lambda: Option<f64>,
        /// context.csv (user_id, item_id, context_id, count); context
        /// variant, mutually exclusive with --privacy.
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Top-k recommendations for one user.
    Topk {
        /// model.json produced by rec fit.
        #[arg(long)]
        model: Option<PathBuf>,
        /// External user id.
        #[arg(long)]
        user: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// Context id (context models only).
        #[arg(long)]
        context: Option<String>,
        /// Optional ratings.csv whose (user, item) pairs are excluded as
        /// already seen.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Precision@k of a fitted model on held-out ratings.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Training ratings (excluded from candidate lists).
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Held-out ratings: positive counts are the relevant items.
        #[arg(long)]
        heldout: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EmbedCmd {
    /// Train skip-gram embeddings on a corpus.
    Train {
        /// corpus.txt, one whitespace-tokenized document per line.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MaturityCmd {
    /// Fit the multi-label maturity classifier over app embeddings.
    Fit {
        /// app_docs.csv (app_id, text, labels)
        #[arg(long)]
        docs: Option<PathBuf>,
        /// emb.json produced by embed train.
        #[arg(long)]
        emb: Option<PathBuf>,
        /// policy.json mapping labels to severity levels.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Label-correlation mix weight.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        regularizer: Option<f64>,
    },
    /// Predict content labels and maturity levels for new docs.
    Predict {
        /// mat.json produced by maturity fit.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Docs to rate (app_docs.csv schema; labels column may be empty).
        #[arg(long)]
        docs: Option<PathBuf>,
    },
}
