//! Cross-validated classification metrics, rho-square and inverse
//! probability weighting.

use std::cmp::Ordering;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::detection::ThresholdPair;
use crate::error::{Error, Result};
use crate::inference::{fit_logit_with, Dataset, FitOptions, LogitFit, Scope};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> ConfusionMetrics {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let n = self.n();
        let tpr = ratio(self.tp, self.tp + self.fn_);
        let tnr = ratio(self.tn, self.tn + self.fp);
        ConfusionMetrics {
            n_obs: n,
            observed_rate: ratio(self.tp + self.fn_, n).unwrap_or(0.0),
            accuracy: ratio(self.tp + self.tn, n).unwrap_or(0.0),
            balanced_accuracy: tpr.zip(tnr).map(|(a, b)| (a + b) / 2.0),
            tpr,
            tnr,
            ppv: ratio(self.tp, self.tp + self.fp),
            fnr: tpr.map(|t| 1.0 - t),
            fpr: tnr.map(|t| 1.0 - t),
        }
    }
}

/// Rates that are undefined for the given counts are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMetrics {
    pub n_obs: usize,
    pub observed_rate: f64,
    pub accuracy: f64,
    pub balanced_accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub ppv: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
}

pub fn confusion_counts(probabilities: &[f64], truths: &[bool], threshold: f64) -> Result<Confusion> {
    if probabilities.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} outcomes",
            probabilities.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Validation("no predictions".into()));
    }
    let mut c = Confusion::default();
    for (p, t) in probabilities.iter().zip(truths) {
        c.add(*p >= threshold, *t);
    }
    Ok(c)
}

pub fn confusion_metrics(probabilities: &[f64], truths: &[bool], threshold: f64) -> Result<ConfusionMetrics> {
    Ok(confusion_counts(probabilities, truths, threshold)?.metrics())
}

/// McFadden rho-square and its parameter-adjusted form.
pub fn rho_square(fit: &LogitFit) -> Result<(f64, f64)> {
    if fit.null_log_likelihood >= 0.0 {
        return Err(Error::Precondition("null log-likelihood is zero".into()));
    }
    let k = fit.n_parameters() as f64;
    Ok((
        1.0 - fit.log_likelihood / fit.null_log_likelihood,
        1.0 - (fit.log_likelihood - k) / fit.null_log_likelihood,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub threshold: f64,
    pub max_reshuffles: usize,
    pub fit: FitOptions,
    /// Reject folds whose fit stopped before the convergence tolerance.
    pub require_convergence: bool,
}

impl CvOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            folds: 10,
            seed,
            threshold: 0.5,
            max_reshuffles: 100,
            fit: FitOptions::default(),
            require_convergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvMetrics {
    pub confusion: Confusion,
    pub metrics: ConfusionMetrics,
    /// Full-sample fit.
    pub rho_square: f64,
    pub adj_rho_square: f64,
    /// From held-out log-likelihoods against a training-mean null.
    pub cv_rho_square: f64,
    /// Shuffles tried before every training fold could be fitted.
    pub attempts: usize,
}

fn cmp_rows(data: &Dataset, a: usize, b: usize) -> Ordering {
    let x = data.x();
    data.y()[a].total_cmp(&data.y()[b]).then_with(|| {
        (0..x.ncols())
            .map(|k| x[(a, k)].total_cmp(&x[(b, k)]))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Fold label per row for one shuffle attempt, stratified by outcome.
fn assign_folds(data: &Dataset, folds: usize, seed: u64, attempt: usize) -> Vec<usize> {
    let n = data.n_obs();
    let mut order: Vec<usize> = (0..n).collect();
    // Canonical order first, so the result does not depend on input row order.
    order.sort_by(|&a, &b| cmp_rows(data, a, b));
    let (mut neg, mut pos): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&r| data.y()[r] == 0.0);
    let mut r = rng::derived(seed, attempt as u64);
    neg.shuffle(&mut r);
    pos.shuffle(&mut r);
    let mut label = vec![0; n];
    for (i, row) in neg.into_iter().chain(pos).enumerate() {
        label[row] = i % folds;
    }
    label
}

fn held_out_ll(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    y * p.ln() + (1.0 - y) * (1.0 - p).ln()
}

struct FoldResult {
    confusion: Confusion,
    ll: f64,
    null_ll: f64,
}

fn run_fold(data: &Dataset, labels: &[usize], fold: usize, opts: &CvOptions) -> Result<FoldResult> {
    let train: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != fold).collect();
    let test: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == fold).collect();
    let train_data = data.subset(&train);
    let fit = fit_logit_with(&train_data, &opts.fit)?;
    if opts.require_convergence && !fit.converged {
        return Err(Error::Precondition(format!("fold {fold} fit did not converge")));
    }
    let test_data = data.subset(&test);
    let probs = fit.probabilities(&test_data)?;
    let ybar = train_data.y().mean();
    let mut confusion = Confusion::default();
    let (mut ll, mut null_ll) = (0.0, 0.0);
    for (p, y) in probs.iter().zip(test_data.y().iter()) {
        confusion.add(*p >= opts.threshold, *y == 1.0);
        ll += held_out_ll(*p, *y);
        null_ll += held_out_ll(ybar, *y);
    }
    Ok(FoldResult { confusion, ll, null_ll })
}

/// Stratified k-fold cross-validation with confusion counts pooled over folds.
pub fn kfold_cv(data: &Dataset, opts: &CvOptions) -> Result<CvMetrics> {
    let n = data.n_obs();
    if opts.folds < 2 || n < opts.folds {
        return Err(Error::Precondition(format!("{n} observations cannot fill {} folds", opts.folds)));
    }
    let full = fit_logit_with(data, &opts.fit)?;
    let (rho, adj) = rho_square(&full)?;
    let mut last_err = None;
    for attempt in 0..opts.max_reshuffles.max(1) {
        let labels = assign_folds(data, opts.folds, opts.seed, attempt);
        let results: Vec<Result<FoldResult>> = (0..opts.folds)
            .into_par_iter()
            .map(|f| run_fold(data, &labels, f, opts))
            .collect();
        match results.into_iter().collect::<Result<Vec<_>>>() {
            Ok(folds) => {
                let mut confusion = Confusion::default();
                let (mut ll, mut null_ll) = (0.0, 0.0);
                for f in &folds {
                    confusion.tp += f.confusion.tp;
                    confusion.fp += f.confusion.fp;
                    confusion.tn += f.confusion.tn;
                    confusion.fn_ += f.confusion.fn_;
                    ll += f.ll;
                    null_ll += f.null_ll;
                }
                return Ok(CvMetrics {
                    confusion,
                    metrics: confusion.metrics(),
                    rho_square: rho,
                    adj_rho_square: adj,
                    cv_rho_square: 1.0 - ll / null_ll,
                    attempts: attempt + 1,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Precondition(format!(
        "no fold assignment in {} shuffles supports a fit on every training fold: {}",
        opts.max_reshuffles,
        last_err.map_or_else(String::new, |e| e.to_string())
    )))
}

pub const CV_HEADER: [&str; 15] = [
    "scope",
    "Threshold settings",
    "Num. observations",
    "GLH activity detection rate (observed)",
    "Model accuracy",
    "Model balanced accuracy (TPR+TNR)/2",
    "TPR (True positive rate)",
    "TNR (True negative rate)",
    "PPV (Positive prediction value)",
    "FNR (False negative rate)",
    "FPR (False positive rate)",
    "Rho-square",
    "Adjusted rho square",
    "Rho-square (cross-validated)",
    "Reshuffles",
];

fn threshold_label(t: &ThresholdPair) -> String {
    match t.spatial().meters() {
        Some(s) => format!("S = {s}m T = {}", t.temporal()),
        None => format!("S = gID T = {}", t.temporal()),
    }
}

pub fn write_cv_csv<W: Write>(rows: &[(Scope, ThresholdPair, CvMetrics)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CV_HEADER)?;
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
    for (scope, thr, cv) in rows {
        let m = &cv.metrics;
        w.write_record([
            scope.name().to_string(),
            threshold_label(thr),
            m.n_obs.to_string(),
            format!("{:.6}", m.observed_rate),
            format!("{:.6}", m.accuracy),
            opt(m.balanced_accuracy),
            opt(m.tpr),
            opt(m.tnr),
            opt(m.ppv),
            opt(m.fnr),
            opt(m.fpr),
            format!("{:.6}", cv.rho_square),
            format!("{:.6}", cv.adj_rho_square),
            format!("{:.6}", cv.cv_rho_square),
            (cv.attempts - 1).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const DEFAULT_PROPENSITY_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct IpwEstimate {
    /// `1/p` for detected observations, 0 otherwise.
    pub weights: Vec<f64>,
    /// Rows whose propensity fell below the floor.
    pub flagged: Vec<usize>,
    pub raw_count: usize,
    pub weighted_count: f64,
}

impl IpwEstimate {
    pub fn raw_frequency(&self, exposure: f64) -> f64 {
        self.raw_count as f64 / exposure
    }

    pub fn weighted_frequency(&self, exposure: f64) -> f64 {
        self.weighted_count / exposure
    }
}

pub fn ipw_from_propensities(propensities: &[f64], detected: &[bool], floor: f64) -> Result<IpwEstimate> {
    if propensities.len() != detected.len() {
        return Err(Error::Validation(format!(
            "{} propensities for {} observations",
            propensities.len(),
            detected.len()
        )));
    }
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::Validation(format!("propensity floor {floor} outside (0, 1]")));
    }
    let mut weights = Vec::with_capacity(detected.len());
    let mut flagged = Vec::new();
    for (i, (p, d)) in propensities.iter().zip(detected).enumerate() {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::Validation(format!("propensity {p} at row {i} is not a probability")));
        }
        if *p < floor {
            flagged.push(i);
        }
        weights.push(if *d { 1.0 / p.max(floor) } else { 0.0 });
    }
    Ok(IpwEstimate {
        raw_count: detected.iter().filter(|d| **d).count(),
        weighted_count: weights.iter().sum(),
        weights,
        flagged,
    })
}

/// Weights from a fitted detection-propensity model; the dataset's outcome
/// column is the detection indicator.
pub fn ipw_weights(fit: &LogitFit, data: &Dataset, floor: f64) -> Result<IpwEstimate> {
    let p: Vec<f64> = fit.probabilities(data)?.iter().copied().collect();
    let detected: Vec<bool> = data.y().iter().map(|y| *y == 1.0).collect();
    ipw_from_propensities(&p, &detected, floor)
}
