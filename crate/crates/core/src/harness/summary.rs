use serde::{Deserialize, Serialize};

use super::ReplicationRecord;
use crate::inference::AsymptoticsReport;
use crate::stats;

/// Empirical over theoretical variances of the standardized errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub theory_var_alpha: f64,
    pub theory_var_beta: f64,
    pub bound_var_alpha: f64,
    pub bound_var_beta: f64,
    pub ratio_alpha: f64,
    pub ratio_beta: f64,
    pub ratio_alpha_bound: f64,
    pub ratio_beta_bound: f64,
}

/// Moments of the standardized errors over converged replications.
/// Fields needing more replications than available are omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub converged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skewness_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skewness_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excess_kurtosis_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excess_kurtosis_beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

/// Unbiased variances, correlation, skewness and excess kurtosis of the
/// standardized errors, and their ratios to the theoretical variances.
pub fn summarize(records: &[ReplicationRecord], theory: Option<&AsymptoticsReport>) -> Summary {
    let (a, b): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| Some((r.std_err_alpha_scaled?, r.std_err_beta_scaled?)))
        .unzip();
    let nonempty = |v: &[f64]| (!v.is_empty()).then(|| stats::mean(v));
    let var_alpha = stats::variance(&a);
    let var_beta = stats::variance(&b);
    let comparison = match (theory, var_alpha, var_beta) {
        (Some(t), Some(va), Some(vb)) => Some(Comparison {
            theory_var_alpha: t.cov_rate_optimal[0][0],
            theory_var_beta: t.cov_rate_optimal[1][1],
            bound_var_alpha: t.sigma_bound[0][0],
            bound_var_beta: t.sigma_bound[1][1],
            ratio_alpha: va / t.cov_rate_optimal[0][0],
            ratio_beta: vb / t.cov_rate_optimal[1][1],
            ratio_alpha_bound: va / t.sigma_bound[0][0],
            ratio_beta_bound: vb / t.sigma_bound[1][1],
        }),
        _ => None,
    };
    Summary {
        converged: a.len(),
        mean_alpha: nonempty(&a),
        mean_beta: nonempty(&b),
        var_alpha,
        var_beta,
        correlation: stats::correlation(&a, &b),
        skewness_alpha: stats::skewness(&a),
        skewness_beta: stats::skewness(&b),
        excess_kurtosis_alpha: stats::excess_kurtosis(&a),
        excess_kurtosis_beta: stats::excess_kurtosis(&b),
        comparison,
    }
}
