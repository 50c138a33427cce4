//! Elasticities and marginal effects aggregated over the sample.

use std::fmt;

use super::logit::{logistic, ColumnKind, Dataset, LogitFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EffectKind {
    Elasticity,
    MarginalEffect,
}

impl EffectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectKind::Elasticity => "elasticity",
            EffectKind::MarginalEffect => "marginal_effect",
        }
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How per-observation continuous marginal effects are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Plain mean: the derivative of the mean predicted probability.
    #[default]
    Unweighted,
    /// Weighted by each observation's predicted probability.
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EffectOptions {
    pub marginal_weighting: Weighting,
}

fn continuous_index(fit: &LogitFit, data: &Dataset, name: &str) -> Result<usize> {
    let k = data.column_index(name)?;
    if !fit.names.iter().any(|n| n == name) {
        return Err(Error::UnknownCovariate(name.to_string()));
    }
    Ok(k)
}

/// Probability-weighted aggregate of `beta_k * x_nk * (1 - P_n)`.
pub fn elasticity_continuous(fit: &LogitFit, data: &Dataset, name: &str) -> Result<f64> {
    let k = continuous_index(fit, data, name)?;
    let p = fit.probabilities(data)?;
    let beta = fit.coefficients[k];
    let x = data.x().column(k);
    let num: f64 = p.iter().zip(x.iter()).map(|(pn, xn)| pn * beta * xn * (1.0 - pn)).sum();
    Ok(num / p.sum())
}

/// Aggregate of `beta_k * P_n * (1 - P_n)`.
pub fn marginal_effect_continuous(fit: &LogitFit, data: &Dataset, name: &str, weighting: Weighting) -> Result<f64> {
    let k = continuous_index(fit, data, name)?;
    let p = fit.probabilities(data)?;
    let beta = fit.coefficients[k];
    Ok(match weighting {
        Weighting::Unweighted => p.iter().map(|pn| beta * pn * (1.0 - pn)).sum::<f64>() / p.len() as f64,
        Weighting::Probability => p.iter().map(|pn| pn * beta * pn * (1.0 - pn)).sum::<f64>() / p.sum(),
    })
}

/// Mean difference between the two counterfactual probabilities.
pub fn marginal_effect_dummy(fit: &LogitFit, data: &Dataset, name: &str) -> Result<f64> {
    let k = continuous_index(fit, data, name)?;
    if data.x().column(k).iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::NotBinary(name.to_string()));
    }
    let beta = &fit.coefficients;
    let bk = beta[k];
    let x = data.x();
    let total: f64 = (0..data.n_obs())
        .map(|r| {
            let eta_rest = x.row(r).dot(&beta.transpose()) - bk * x[(r, k)];
            logistic(eta_rest + bk) - logistic(eta_rest)
        })
        .sum();
    Ok(total / data.n_obs() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectValue {
    pub covariate: String,
    pub kind: EffectKind,
    pub value: f64,
}

/// Elasticity and marginal effect for continuous covariates, marginal effect
/// for dummies, in covariate order.
pub fn all_effects(fit: &LogitFit, data: &Dataset, opts: &EffectOptions) -> Result<Vec<EffectValue>> {
    let mut out = Vec::new();
    for (k, name) in data.names().iter().enumerate().skip(1) {
        match data.kind(k) {
            ColumnKind::Continuous => {
                out.push(EffectValue {
                    covariate: name.clone(),
                    kind: EffectKind::Elasticity,
                    value: elasticity_continuous(fit, data, name)?,
                });
                out.push(EffectValue {
                    covariate: name.clone(),
                    kind: EffectKind::MarginalEffect,
                    value: marginal_effect_continuous(fit, data, name, opts.marginal_weighting)?,
                });
            }
            ColumnKind::Dummy => out.push(EffectValue {
                covariate: name.clone(),
                kind: EffectKind::MarginalEffect,
                value: marginal_effect_dummy(fit, data, name)?,
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::logit::{fit_logit, Column};
    use nalgebra::DVector;
    use rand::Rng;

    fn fit_for(data: &Dataset, beta: &[f64]) -> LogitFit {
        LogitFit {
            names: data.names().to_vec(),
            coefficients: DVector::from_column_slice(beta),
            std_errors: DVector::zeros(beta.len()),
            log_likelihood: 0.0,
            null_log_likelihood: 0.0,
            n_obs: data.n_obs(),
            converged: true,
            iterations: 0,
            trace: vec![],
        }
    }

    #[test]
    fn single_observation_elasticity() {
        let data = Dataset::new(vec![Column::continuous("x", vec![2.0])], vec![true]).unwrap();
        let fit = fit_for(&data, &[0.0, 0.5]);
        let e = elasticity_continuous(&fit, &data, "x").unwrap();
        assert!((e - 0.5 * 2.0 * (1.0 - logistic(1.0))).abs() < 1e-12);
        assert!((e - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn marginal_at_half() {
        let data = Dataset::new(vec![Column::continuous("x", vec![0.0])], vec![true]).unwrap();
        let fit = fit_for(&data, &[0.0, 0.5]);
        for w in [Weighting::Unweighted, Weighting::Probability] {
            assert!((marginal_effect_continuous(&fit, &data, "x", w).unwrap() - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn null_effects() {
        let data = Dataset::new(
            vec![Column::continuous("x", vec![1.0, 2.0, 3.0]), Column::dummy("d", vec![0.0, 1.0, 0.0]).unwrap()],
            vec![true, false, true],
        )
        .unwrap();
        let fit = fit_for(&data, &[0.3, 0.0, 0.0]);
        assert_eq!(elasticity_continuous(&fit, &data, "x").unwrap(), 0.0);
        assert_eq!(marginal_effect_continuous(&fit, &data, "x", Weighting::Unweighted).unwrap(), 0.0);
        assert_eq!(marginal_effect_dummy(&fit, &data, "d").unwrap(), 0.0);
    }

    #[test]
    fn dummy_closed_form() {
        let data = Dataset::new(vec![Column::dummy("d", vec![0.0; 4]).unwrap()], vec![true, false, true, false]).unwrap();
        let fit = fit_for(&data, &[-1.0, 2.0]);
        let m = marginal_effect_dummy(&fit, &data, "d").unwrap();
        assert!((m - (logistic(1.0) - logistic(-1.0))).abs() < 1e-12);
        assert!((m - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn unknown_and_non_binary() {
        let data = Dataset::new(vec![Column::continuous("x", vec![0.5, 2.0])], vec![true, false]).unwrap();
        let fit = fit_for(&data, &[0.0, 1.0]);
        assert!(matches!(elasticity_continuous(&fit, &data, "z"), Err(Error::UnknownCovariate(_))));
        assert!(matches!(marginal_effect_dummy(&fit, &data, "x"), Err(Error::NotBinary(_))));
    }

    #[test]
    fn scaling_leaves_elasticity_unchanged() {
        let mut rng = crate::rng::master(9);
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(0.0..5.0)).collect();
        let y = x.iter().map(|v| rng.random_bool(logistic(0.5 - 0.4 * v))).collect();
        let data = Dataset::new(vec![Column::continuous("x", x)], y).unwrap();
        let fit = fit_logit(&data).unwrap();
        let scaled = data.scaled("x", 0.01).unwrap();
        let fit2 = fit_logit(&scaled).unwrap();
        let e1 = elasticity_continuous(&fit, &data, "x").unwrap();
        let e2 = elasticity_continuous(&fit2, &scaled, "x").unwrap();
        assert!((e1 - e2).abs() < 1e-8);
    }
}
