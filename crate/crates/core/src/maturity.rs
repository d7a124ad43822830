//! Maturity rating pipeline: skip-gram word embeddings, word-to-app
//! aggregation, a multi-label content classifier with Pearson label
//! correlations, and the policy table mapping content labels to a maturity
//! level.
//!
//! The skip-gram stage maximizes the average log probability of context
//! words within a window around each center word, with the exact softmax
//! `Pr(o | i) = exp(v'_o . v_i) / sum_w exp(v'_w . v_i)` over the whole
//! vocabulary (no negative sampling; vocabularies here are small enough
//! that the exact objective is testable).

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TokenCorpus;
use crate::matrix_serde;
use crate::rng::SplitMix64;

/// Input ("v") and output ("v'") vectors per vocabulary word.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub vocab: Vec<String>,
    pub dim: usize,
    pub window: usize,
    #[serde(with = "matrix_serde")]
    pub input: Array2<f64>,
    #[serde(with = "matrix_serde")]
    pub output: Array2<f64>,
    /// Average pair log-likelihood after each epoch.
    pub epoch_loglik: Vec<f64>,
}

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.vocab.iter().position(|w| w == word)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SkipGramOptions {
    pub dim: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SkipGramOptions {
    fn default() -> Self {
        SkipGramOptions {
            dim: 50,
            window: 2,
            learning_rate: 0.05,
            epochs: 5,
            seed: 42,
        }
    }
}

/// Softmax distribution over output words for a given input word.
fn context_distribution(table: &EmbeddingTable, input_word: usize) -> Array1<f64> {
    let vi = table.input.row(input_word);
    let mut logits = table.output.dot(&vi);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logits.mapv_inplace(|z| (z - m).exp());
    let sum = logits.sum();
    logits / sum
}

/// `Pr(output_word | input_word)` under the full softmax.
pub fn softmax_prob(table: &EmbeddingTable, output_word: usize, input_word: usize) -> f64 {
    context_distribution(table, input_word)[output_word]
}

/// Log probability of one (center, context) pair.
pub fn pair_log_prob(table: &EmbeddingTable, center: usize, context: usize) -> f64 {
    softmax_prob(table, context, center).ln()
}

/// Analytic gradient of `pair_log_prob` with respect to the center's input
/// vector and the full output table.
pub fn pair_gradient(
    table: &EmbeddingTable,
    center: usize,
    context: usize,
) -> (Array1<f64>, Array2<f64>) {
    let probs = context_distribution(table, center);
    let vi = table.input.row(center).to_owned();
    // d/d v_center = v'_context - sum_o p_o v'_o
    let mut grad_in = table.output.row(context).to_owned();
    for (o, &p) in probs.iter().enumerate() {
        grad_in.scaled_add(-p, &table.output.row(o));
    }
    // d/d v'_o = (1[o = context] - p_o) * v_center
    let mut grad_out = Array2::zeros(table.output.dim());
    for (o, &p) in probs.iter().enumerate() {
        let coef = f64::from(o == context) - p;
        grad_out.row_mut(o).assign(&(&vi * coef));
    }
    (grad_in, grad_out)
}

fn window_pairs(corpus: &TokenCorpus, window: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for doc in &corpus.docs {
        for (t, &center) in doc.iter().enumerate() {
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(doc.len() - 1);
            for j in lo..=hi {
                if j != t {
                    pairs.push((center, doc[j]));
                }
            }
        }
    }
    pairs
}

/// Train skip-gram embeddings by stochastic gradient ascent over all
/// (center, context) pairs, in corpus order, with the exact softmax.
pub fn train_skipgram(corpus: &TokenCorpus, opts: SkipGramOptions) -> Result<EmbeddingTable> {
    if corpus.vocab_size() < 2 {
        return Err(Error::Param(format!(
            "vocabulary must have at least 2 words, got {}",
            corpus.vocab_size()
        )));
    }
    if opts.learning_rate <= 0.0 {
        return Err(Error::Param(format!(
            "learning rate must be positive, got {}",
            opts.learning_rate
        )));
    }
    if opts.dim == 0 || opts.window == 0 {
        return Err(Error::Param("dim and window must be at least 1".into()));
    }
    let pairs = window_pairs(corpus, opts.window);
    if pairs.is_empty() {
        return Err(Error::Param(
            "corpus yields no (center, context) pairs".into(),
        ));
    }

    let w = corpus.vocab_size();
    let mut rng = SplitMix64::derived(opts.seed, "skipgram");
    let span = 0.5 / opts.dim as f64;
    let mut table = EmbeddingTable {
        vocab: corpus.vocab.clone(),
        dim: opts.dim,
        window: opts.window,
        input: Array2::from_shape_fn((w, opts.dim), |_| rng.uniform(-span, span)),
        output: Array2::from_shape_fn((w, opts.dim), |_| rng.uniform(-span, span)),
        epoch_loglik: Vec::new(),
    };

    for _ in 0..opts.epochs {
        for &(center, context) in &pairs {
            let (grad_in, grad_out) = pair_gradient(&table, center, context);
            table
                .input
                .row_mut(center)
                .scaled_add(opts.learning_rate, &grad_in);
            table.output.scaled_add(opts.learning_rate, &grad_out);
        }
        let avg: f64 = pairs
            .iter()
            .map(|&(c, o)| pair_log_prob(&table, c, o))
            .sum::<f64>()
            / pairs.len() as f64;
        if !avg.is_finite() {
            return Err(Error::NonFinite("skip-gram log-likelihood".into()));
        }
        table.epoch_loglik.push(avg);
    }
    Ok(table)
}

/// App embedding: arithmetic mean of the input vectors of in-vocabulary
/// tokens. Errors when nothing in the document is in vocabulary.
pub fn app_embed<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<Array1<f64>> {
    let index: BTreeMap<&str, usize> = table
        .vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let mut sum = Array1::zeros(table.dim);
    let mut count = 0usize;
    for t in tokens {
        if let Some(&i) = index.get(t.as_ref()) {
            sum += &table.input.row(i);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate(
            "document has no in-vocabulary tokens".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Maturity severity levels, ordered.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    #[default]
    Everyone,
    Low,
    Medium,
    High,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Severity::Everyone => "everyone",
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
        };
        f.write_str(s)
    }
}

/// Label -> severity table; must cover every label it is asked about.
pub type MaturityPolicy = BTreeMap<String, Severity>;

/// Maximum severity among the predicted labels; empty set rates as
/// `everyone`.
pub fn maturity_level<S: AsRef<str>>(labels: &[S], policy: &MaturityPolicy) -> Result<Severity> {
    let mut level = Severity::Everyone;
    for l in labels {
        let l = l.as_ref();
        let sev = policy
            .get(l)
            .ok_or_else(|| Error::Param(format!("label {l:?} missing from the policy table")))?;
        level = level.max(*sev);
    }
    Ok(level)
}

/// One-vs-rest linear classifiers with squared-hinge loss plus a Pearson
/// label-correlation adjustment of the prediction scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaturityModel {
    /// Label universe, sorted.
    pub labels: Vec<String>,
    /// Labels with both positive and negative training examples; others are
    /// excluded and never predicted.
    pub fitted: Vec<bool>,
    /// L x (d+1) weights, bias in the last column.
    #[serde(with = "matrix_serde")]
    pub weights: Array2<f64>,
    /// L x L Pearson correlations between training label indicators;
    /// zero-variance labels carry an identity row.
    #[serde(with = "matrix_serde")]
    pub correlations: Array2<f64>,
    pub gamma: f64,
    pub regularizer: f64,
    pub warnings: Vec<String>,
}

/// Squared-hinge one-vs-rest fit by gradient descent with backtracking.
fn fit_one_label(x: &Array2<f64>, y: &[f64], reg: f64) -> Array1<f64> {
    let (n, d) = x.dim();
    let mut w = Array1::<f64>::zeros(d + 1);
    let loss = |w: &Array1<f64>| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let f: f64 = x.row(i).dot(&w.slice(ndarray::s![..d])) + w[d];
            let margin = 1.0 - y[i] * f;
            if margin > 0.0 {
                total += margin * margin;
            }
        }
        total + reg * w.slice(ndarray::s![..d]).dot(&w.slice(ndarray::s![..d]))
    };
    let mut f = loss(&w);
    let mut step = 1.0f64;
    for _ in 0..500 {
        let mut grad = Array1::<f64>::zeros(d + 1);
        for i in 0..n {
            let fx: f64 = x.row(i).dot(&w.slice(ndarray::s![..d])) + w[d];
            let margin = 1.0 - y[i] * fx;
            if margin > 0.0 {
                let coef = -2.0 * margin * y[i];
                for j in 0..d {
                    grad[j] += coef * x[[i, j]];
                }
                grad[d] += coef;
            }
        }
        for j in 0..d {
            grad[j] += 2.0 * reg * w[j];
        }
        let gnorm2 = grad.dot(&grad);
        if gnorm2.sqrt() < 1e-10 * (1.0 + f) {
            break;
        }
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &w - &(&grad * step);
            let cf = loss(&cand);
            if cf <= f - 1e-4 * step * gnorm2 {
                let improved = f - cf;
                w = cand;
                f = cf;
                accepted = true;
                if improved <= 1e-12 * (1.0 + f) {
                    step = 0.0;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || step == 0.0 {
            break;
        }
    }
    w
}

fn pearson_indicator(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa.sqrt() * sbb.sqrt()))
    }
}

/// Fit the multi-label maturity classifier over app embeddings.
///
/// `label_sets[i]` holds app i's content labels from `universe`. Labels
/// that are all-positive or all-negative in training are excluded with a
/// warning. Prediction scores are adjusted as `s' = s + gamma * R * s`
/// before thresholding at zero.
pub fn fit_maturity(
    embeddings: &Array2<f64>,
    label_sets: &[BTreeSet<String>],
    universe: &[String],
    gamma: f64,
    regularizer: f64,
) -> Result<MaturityModel> {
    let n = embeddings.nrows();
    if n < 2 {
        return Err(Error::Param(format!("need at least 2 apps, got {n}")));
    }
    if label_sets.len() != n {
        return Err(Error::Dimension(format!(
            "{} label sets for {n} embeddings",
            label_sets.len()
        )));
    }
    if regularizer < 0.0 {
        return Err(Error::Param("regularizer must be nonnegative".into()));
    }
    let labels: Vec<String> = universe.to_vec();
    let l = labels.len();
    if l == 0 {
        return Err(Error::Param("empty label universe".into()));
    }
    for set in label_sets {
        for lab in set {
            if !labels.contains(lab) {
                return Err(Error::Invariant(format!(
                    "label {lab:?} not in the declared universe"
                )));
            }
        }
    }

    let d = embeddings.ncols();
    // Indicator matrix, one column per label.
    let indicators: Vec<Vec<f64>> = labels
        .iter()
        .map(|lab| {
            label_sets
                .iter()
                .map(|s| f64::from(s.contains(lab)))
                .collect()
        })
        .collect();

    let mut fitted = vec![false; l];
    let mut warnings = Vec::new();
    let mut weights = Array2::zeros((l, d + 1));
    for (li, lab) in labels.iter().enumerate() {
        let pos = indicators[li].iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == n {
            warnings.push(format!(
                "label {lab:?} is {} in training; excluded",
                if pos == 0 { "all-negative" } else { "all-positive" }
            ));
            continue;
        }
        fitted[li] = true;
        let y: Vec<f64> = indicators[li].iter().map(|&v| 2.0 * v - 1.0).collect();
        let w = fit_one_label(embeddings, &y, regularizer);
        weights.row_mut(li).assign(&w);
    }
    if !fitted.iter().any(|&f| f) {
        return Err(Error::Degenerate(
            "no label has both positive and negative examples".into(),
        ));
    }

    let mut correlations = Array2::eye(l);
    for a in 0..l {
        for b in a + 1..l {
            if let Some(r) = pearson_indicator(&indicators[a], &indicators[b]) {
                correlations[[a, b]] = r;
                correlations[[b, a]] = r;
            }
        }
    }
    // Zero-variance labels keep an identity row.
    for (li, ind) in indicators.iter().enumerate() {
        let pos = ind.iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == n {
            for b in 0..l {
                correlations[[li, b]] = f64::from(li == b);
                correlations[[b, li]] = f64::from(li == b);
            }
        }
    }

    Ok(MaturityModel {
        labels,
        fitted,
        weights,
        correlations,
        gamma,
        regularizer,
        warnings,
    })
}

impl MaturityModel {
    pub fn dim(&self) -> usize {
        self.weights.ncols() - 1
    }

    /// Raw one-vs-rest scores for one embedding.
    pub fn raw_scores(&self, embedding: &Array1<f64>) -> Result<Vec<f64>> {
        if embedding.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "embedding has {} dims, model expects {}",
                embedding.len(),
                self.dim()
            )));
        }
        let d = self.dim();
        Ok((0..self.labels.len())
            .map(|li| {
                self.weights
                    .row(li)
                    .slice(ndarray::s![..d])
                    .dot(embedding)
                    + self.weights[[li, d]]
            })
            .collect())
    }

    /// Correlation-adjusted scores `s + gamma * R * s`.
    pub fn adjusted_scores(&self, embedding: &Array1<f64>) -> Result<Vec<f64>> {
        let s = Array1::from_vec(self.raw_scores(embedding)?);
        let adj = &s + &(self.correlations.dot(&s) * self.gamma);
        Ok(adj.to_vec())
    }

    /// Labels whose adjusted score is positive; excluded labels never fire.
    pub fn predict(&self, embedding: &Array1<f64>) -> Result<Vec<String>> {
        let s = self.adjusted_scores(embedding)?;
        Ok(self
            .labels
            .iter()
            .zip(&self.fitted)
            .zip(&s)
            .filter(|((_, &fit), &score)| fit && score > 0.0)
            .map(|((lab, _), _)| lab.clone())
            .collect())
    }
}
