//! Binary logit estimation by Newton-Raphson / IRLS.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Dummy,
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

impl Column {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
            values,
        }
    }

    pub fn dummy(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::NotBinary(name));
        }
        Ok(Self {
            name,
            kind: ColumnKind::Dummy,
            values,
        })
    }
}

/// Design matrix with a leading intercept column, plus binary outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, y: Vec<bool>) -> Result<Self> {
        let n = y.len();
        let mut names = vec![INTERCEPT.to_string()];
        let mut kinds = vec![ColumnKind::Continuous];
        for c in &columns {
            if c.values.len() != n {
                return Err(Error::Validation(format!(
                    "column `{}` has {} values for {n} outcomes",
                    c.name,
                    c.values.len()
                )));
            }
            if names.contains(&c.name) {
                return Err(Error::DuplicateKey(c.name.clone()));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("column `{}` has non-finite values", c.name)));
            }
            names.push(c.name.clone());
            kinds.push(c.kind);
        }
        let p = names.len();
        let x = DMatrix::from_fn(n, p, |r, k| if k == 0 { 1.0 } else { columns[k - 1].values[r] });
        let y = DVector::from_iterator(n, y.iter().map(|b| f64::from(u8::from(*b))));
        Ok(Self { names, kinds, x, y })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Covariates excluding the intercept.
    pub fn n_covariates(&self) -> usize {
        self.names.len() - 1
    }

    /// Parameter names, intercept first.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kind(&self, k: usize) -> ColumnKind {
        self.kinds[k]
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .skip(1)
            .position(|n| n == name)
            .map(|i| i + 1)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        Ok(self.x.column(k).iter().copied().collect())
    }

    /// Rows `idx` in the given order (repeats allowed).
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }

    /// Copy with covariate `name` multiplied by `factor`.
    pub fn scaled(&self, name: &str, factor: f64) -> Result<Self> {
        let k = self.column_index(name)?;
        let mut out = self.clone();
        out.x.column_mut(k).scale_mut(factor);
        Ok(out)
    }

    /// Copy with covariate `name` shifted by `delta`.
    pub fn shifted(&self, name: &str, delta: f64) -> Result<Self> {
        let k = self.column_index(name)?;
        let mut out = self.clone();
        out.x.column_mut(k).add_scalar_mut(delta);
        Ok(out)
    }

    /// Copy with covariate `name` set to `value` on every row.
    pub fn with_value(&self, name: &str, value: f64) -> Result<Self> {
        let k = self.column_index(name)?;
        let mut out = self.clone();
        out.x.column_mut(k).fill(value);
        Ok(out)
    }
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^eta) without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Log-likelihood of the intercept-only model.
pub fn null_log_likelihood(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let n1 = y.sum();
    let n0 = n - n1;
    let term = |k: f64| if k > 0.0 { k * (k / n).ln() } else { 0.0 };
    term(n1) + term(n0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Max-norm of the score at convergence.
    pub gradient_tolerance: f64,
    /// Coefficients beyond this magnitude that are still moving signal separation.
    pub separation_bound: f64,
    /// Require `n >= min_obs_per_covariate * covariates`.
    pub min_obs_per_covariate: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            separation_bound: 50.0,
            min_obs_per_covariate: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted step, starting from the initial value.
    pub trace: Vec<f64>,
}

impl LogitFit {
    pub fn coefficient(&self, name: &str) -> Result<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn std_error(&self, name: &str) -> Result<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.std_errors[i])
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    /// Predicted probabilities for every row of `data`.
    pub fn probabilities(&self, data: &Dataset) -> Result<DVector<f64>> {
        if data.names != self.names {
            return Err(Error::Validation("dataset columns differ from the fitted model".into()));
        }
        Ok((data.x() * &self.coefficients).map(logistic))
    }

    pub fn score(&self, data: &Dataset) -> Result<DVector<f64>> {
        let p = self.probabilities(data)?;
        Ok(data.x().transpose() * (data.y() - p))
    }

    pub fn n_parameters(&self) -> usize {
        self.names.len()
    }
}

fn check_preconditions(data: &Dataset, opts: &FitOptions) -> Result<()> {
    let n = data.n_obs();
    let k = data.n_covariates();
    if n < opts.min_obs_per_covariate * k.max(1) {
        return Err(Error::Precondition(format!(
            "{n} observations for {k} covariates; at least {} required",
            opts.min_obs_per_covariate * k.max(1)
        )));
    }
    let ones = data.y().sum();
    if ones == 0.0 || ones == n as f64 {
        return Err(Error::Precondition("outcome has a single class".into()));
    }
    for j in 1..data.names.len() {
        let col = data.x.column(j);
        let first = col[0];
        if col.iter().all(|v| *v == first) {
            return Err(Error::Precondition(format!("covariate `{}` has zero variance", data.names[j])));
        }
    }
    Ok(())
}

/// Names the first column that is (numerically) a linear combination of the
/// earlier ones, with the earlier column it most resembles.
fn find_collinear_pair(data: &Dataset) -> Option<(String, String)> {
    let x = data.x();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for k in 0..x.ncols() {
        let orig = x.column(k).into_owned();
        let norm = orig.norm();
        let mut r = orig.clone();
        for q in &basis {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
        let rn = r.norm();
        if rn <= 1e-9 * norm.max(f64::MIN_POSITIVE) {
            let partner = (0..k)
                .max_by(|&a, &b| {
                    let cos = |j: usize| {
                        let c = x.column(j);
                        (c.dot(&orig) / (c.norm() * norm)).abs()
                    };
                    cos(a).total_cmp(&cos(b))
                })
                .unwrap_or(0);
            return Some((data.names[partner].clone(), data.names[k].clone()));
        }
        basis.push(r / rn);
    }
    None
}

const DECREMENT_TOLERANCE: f64 = 1e-20;
const NEWTON_REGION: f64 = 1e-6;

pub fn fit_logit(data: &Dataset) -> Result<LogitFit> {
    fit_logit_with(data, &FitOptions::default())
}

pub fn fit_logit_with(data: &Dataset, opts: &FitOptions) -> Result<LogitFit> {
    check_preconditions(data, opts)?;
    if let Some((first, second)) = find_collinear_pair(data) {
        return Err(Error::Collinear { first, second });
    }
    let x = data.x();
    let y = data.y();
    let n = data.n_obs();
    let p = x.ncols();
    let ybar = y.sum() / n as f64;

    // Starting at the null model keeps every accepted iterate above it.
    let mut beta = DVector::zeros(p);
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let null_ll = null_log_likelihood(y);
    let mut ll = log_likelihood(x, y, &beta);
    let mut trace = vec![ll];
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut hessian;

    loop {
        let prob = (x * &beta).map(logistic);
        let grad = x.transpose() * (y - &prob);
        let w = prob.map(|pi| pi * (1.0 - pi));
        let xw = DMatrix::from_fn(n, p, |r, c| x[(r, c)] * w[r]);
        hessian = x.transpose() * xw;
        let chol = hessian.clone().cholesky();
        let step = chol.as_ref().map(|c| c.solve(&grad));
        // The Newton decrement bounds the log-likelihood still available; it
        // stays meaningful when an unscaled covariate keeps the raw score
        // above the tolerance at the rounding floor.
        let decrement = step.as_ref().map_or(f64::INFINITY, |s| s.dot(&grad));
        if last_step <= 1e-6 && (grad.amax() <= opts.gradient_tolerance || decrement <= DECREMENT_TOLERANCE) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations || last_step == 0.0 {
            // Out of iterations, or no progress is possible.
            break;
        }
        let Some(step) = step else {
            let max_abs_beta = beta.amax();
            if max_abs_beta > opts.separation_bound / 2.0 {
                return Err(Error::Separation { max_abs_beta });
            }
            let (first, second) = find_collinear_pair(data).unwrap_or_else(|| (data.names[0].clone(), data.names[p - 1].clone()));
            return Err(Error::Collinear { first, second });
        };
        let mut t = 1.0;
        let (mut cand, mut cand_ll);
        if decrement < NEWTON_REGION {
            // Close to the optimum the log-likelihood change is below its
            // rounding error, so comparisons cannot guide a line search.
            cand = &beta + &step;
            cand_ll = log_likelihood(x, y, &cand);
            last_step = step.amax();
            beta = cand;
            ll = cand_ll;
            trace.push(ll);
            iterations += 1;
            continue;
        }
        loop {
            cand = &beta + &step * t;
            cand_ll = log_likelihood(x, y, &cand);
            if cand_ll >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        if cand_ll < ll {
            // Rounding floor: keep the better iterate.
            cand = beta.clone();
            cand_ll = ll;
        }
        last_step = (&cand - &beta).amax();
        beta = cand;
        ll = cand_ll;
        trace.push(ll);
        iterations += 1;
        // Diverging coefficients: the score may underflow long before the
        // Newton steps shrink, so the step size is the divergence signal.
        if beta.amax() > opts.separation_bound && last_step > 1e-6 {
            return Err(Error::Separation { max_abs_beta: beta.amax() });
        }
    }

    let std_errors = hessian
        .cholesky()
        .map(|c| c.inverse().diagonal().map(f64::sqrt))
        .unwrap_or_else(|| DVector::from_element(p, f64::NAN));
    Ok(LogitFit {
        names: data.names.clone(),
        coefficients: beta,
        std_errors,
        log_likelihood: ll,
        null_log_likelihood: null_ll,
        n_obs: n,
        converged,
        iterations,
        trace,
    })
}
