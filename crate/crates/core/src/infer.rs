//! Model fitting and inference: maximum-likelihood logistic fits, the exact
//! Gaussian full-conditional draw for logistic coefficients under Polya-Gamma
//! augmentation, pooling rules for multiply imputed estimates, interval
//! construction, and simulation metric aggregation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::rng::{sample_polya_gamma, RngStream};
use crate::types::CompletedDataset;

/// Outcome analysis model.
///
/// `WithInteraction` is the effect-modification model with design row
/// (1, x1, x2, t, t*x2); `IttNoInteraction` drops the interaction column and
/// estimates a constant (log-odds) treatment effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisModel {
    WithInteraction,
    IttNoInteraction,
}

impl AnalysisModel {
    pub fn ncols(self) -> usize {
        match self {
            AnalysisModel::WithInteraction => 5,
            AnalysisModel::IttNoInteraction => 4,
        }
    }

    /// Column index of the treatment coefficient.
    pub const TREATMENT_COL: usize = 3;

    /// Column index of the interaction coefficient, when present.
    pub fn interaction_col(self) -> Option<usize> {
        match self {
            AnalysisModel::WithInteraction => Some(4),
            AnalysisModel::IttNoInteraction => None,
        }
    }

    fn fill_row(self, t: f64, x1: f64, x2: f64, row: &mut [f64; 5]) {
        row[0] = 1.0;
        row[1] = x1;
        row[2] = x2;
        row[3] = t;
        row[4] = if self == AnalysisModel::WithInteraction {
            t * x2
        } else {
            0.0
        };
    }
}

/// Design rows and responses for a completed dataset under a model.
pub fn design_matrix(data: &CompletedDataset, model: AnalysisModel) -> (Vec<[f64; 5]>, Vec<f64>) {
    let mut rows = Vec::with_capacity(data.n());
    let mut y = Vec::with_capacity(data.n());
    for u in data.units() {
        let mut row = [0.0; 5];
        model.fill_row(u.t as f64, u.x1, u.x2, &mut row);
        rows.push(row);
        y.push(u.y as f64);
    }
    (rows, y)
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Score vector and observed information of the logistic log-likelihood at
/// `beta` (information as a row-major k-by-k matrix).
pub fn logistic_score_information(
    rows: &[[f64; 5]],
    y: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let k = beta.len();
    let mut score = vec![0.0; k];
    let mut info = vec![0.0; k * k];
    for (row, &yi) in rows.iter().zip(y) {
        let eta: f64 = (0..k).map(|j| row[j] * beta[j]).sum();
        let p = logistic(eta);
        let w = p * (1.0 - p);
        let resid = yi - p;
        for a in 0..k {
            score[a] += row[a] * resid;
            for b in 0..=a {
                info[a * k + b] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            info[a * k + b] = info[b * k + a];
        }
    }
    (score, info)
}

/// Log-likelihood of the logistic model (used by tests and diagnostics).
pub fn logistic_loglik(rows: &[[f64; 5]], y: &[f64], beta: &[f64]) -> f64 {
    let k = beta.len();
    rows.iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta: f64 = (0..k).map(|j| row[j] * beta[j]).sum();
            // yi*eta - log(1 + e^eta), stable on both tails
            yi * eta - if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() }
        })
        .sum()
}

const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
/// Coefficients beyond this magnitude mean the odds are numerically
/// saturated; iteration is diverging rather than converging.
const SEPARATION_BOUND: f64 = 15.0;

/// Result of a maximum-likelihood logistic fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: AnalysisModel,
    /// Coefficients aligned with the model's design columns.
    pub coef: Vec<f64>,
    /// Inverse observed information, row-major, ncols x ncols.
    pub covariance: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation_flag: bool,
}

impl FitResult {
    pub fn beta_t(&self) -> f64 {
        self.coef[AnalysisModel::TREATMENT_COL]
    }

    pub fn var_beta_t(&self) -> f64 {
        let k = self.model.ncols();
        self.covariance[AnalysisModel::TREATMENT_COL * k + AnalysisModel::TREATMENT_COL]
    }

    pub fn beta_tx2(&self) -> Option<f64> {
        self.model.interaction_col().map(|c| self.coef[c])
    }

    pub fn var_beta_tx2(&self) -> Option<f64> {
        let k = self.model.ncols();
        self.model.interaction_col().map(|c| self.covariance[c * k + c])
    }
}

/// Model-agnostic IRLS result over raw design rows.
#[derive(Debug, Clone)]
pub(crate) struct RawFit {
    pub coef: Vec<f64>,
    pub covariance: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
}

/// IRLS over the first `k` design columns.
pub(crate) fn irls_fit(rows: &[[f64; 5]], y: &[f64], k: usize) -> Result<RawFit> {
    let mut beta = vec![0.0; k];
    let mut iterations = 0;
    loop {
        let (score, info) = logistic_score_information(rows, y, &beta);
        let max_score = score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let chol = Cholesky::factor(&info, k).map_err(|_| Error::RankDeficient)?;
        if max_score <= SCORE_TOL {
            return Ok(RawFit {
                coef: beta,
                covariance: chol.inverse(),
                converged: true,
                iterations,
                separation: false,
            });
        }
        if iterations >= MAX_ITER {
            return Err(Error::NoConvergence {
                iterations,
                max_score,
            });
        }
        let step = chol.solve(&score);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        iterations += 1;
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            let (_, info) = logistic_score_information(rows, y, &beta);
            let covariance = Cholesky::factor(&info, k)
                .map(|c| c.inverse())
                .unwrap_or_else(|_| vec![f64::NAN; k * k]);
            return Ok(RawFit {
                coef: beta,
                covariance,
                converged: false,
                iterations,
                separation: true,
            });
        }
    }
}

/// Fit the logistic model by iteratively reweighted least squares.
///
/// Stops when the largest score component falls below 1e-8; flags separation
/// when any coefficient passes ±15 during iteration (the fit is returned with
/// `converged = false` in that case, since the MLE does not exist).
pub fn fit_logistic(data: &CompletedDataset, model: AnalysisModel) -> Result<FitResult> {
    let (rows, y) = design_matrix(data, model);
    let raw = irls_fit(&rows, &y, model.ncols())?;
    Ok(FitResult {
        model,
        coef: raw.coef,
        covariance: raw.covariance,
        converged: raw.converged,
        iterations: raw.iterations,
        separation_flag: raw.separation,
    })
}

/// One sweep of the coefficient update in the augmented logistic sampler:
/// draw the latent Polya-Gamma weights at the current coefficients, then draw
/// new coefficients from the resulting Gaussian full conditional
/// N((V'ΩV + I/v)^(-1) V'κ, (V'ΩV + I/v)^(-1)) with κ = y - 1/2.
pub fn sample_beta_conditional(
    data: &CompletedDataset,
    model: AnalysisModel,
    current_beta: &[f64],
    prior_variance: f64,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    if !prior_variance.is_finite() || prior_variance <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "prior variance must be positive, got {prior_variance}"
        )));
    }
    let (rows, y) = design_matrix(data, model);
    sample_beta_conditional_rows(&rows, &y, model.ncols(), current_beta, prior_variance, stream)
}

pub(crate) fn sample_beta_conditional_rows(
    rows: &[[f64; 5]],
    y: &[f64],
    k: usize,
    current_beta: &[f64],
    prior_variance: f64,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    debug_assert_eq!(current_beta.len(), k);
    let mut precision = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (row, &yi) in rows.iter().zip(y) {
        let eta: f64 = (0..k).map(|j| row[j] * current_beta[j]).sum();
        let omega = sample_polya_gamma(stream, eta)?;
        let kappa = yi - 0.5;
        for a in 0..k {
            rhs[a] += row[a] * kappa;
            for b in 0..=a {
                precision[a * k + b] += omega * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        precision[a * k + a] += 1.0 / prior_variance;
        for b in (a + 1)..k {
            precision[a * k + b] = precision[b * k + a];
        }
    }
    let chol = Cholesky::factor(&precision, k)?;
    let mean = chol.solve(&rhs);
    let z: Vec<f64> = (0..k).map(|_| stream.standard_normal()).collect();
    let noise = chol.lt_solve(&z);
    Ok(mean.iter().zip(noise).map(|(m, n)| m + n).collect())
}

/// A pooled estimate over multiply imputed analyses.
#[derive(Debug, Clone, Serialize)]
pub struct PooledEstimate {
    pub qbar: f64,
    /// Within-imputation variance (mean of the per-imputation variances).
    pub w: f64,
    /// Between-imputation variance (sample variance of the estimates).
    pub b: f64,
    /// Total variance w + (1 + 1/M) b.
    pub t_var: f64,
    /// Degrees of freedom of the reference t distribution.
    pub df: f64,
    pub ci: (f64, f64),
    pub level: f64,
}

/// Degrees of freedom are capped here when the between-imputation variance is
/// zero (the limit is +infinity and the t quantile is continuous in df).
pub const DF_CAP: f64 = 1e6;

/// Pool per-imputation estimates and variances.
pub fn rubin_combine(estimates: &[f64], variances: &[f64], level: f64) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 || variances.len() != m {
        return Err(Error::InvalidConfig(format!(
            "pooling needs at least 2 imputations with matching variances (got {} and {})",
            m,
            variances.len()
        )));
    }
    if level.is_nan() || level <= 0.0 || level >= 1.0 {
        return Err(Error::InvalidConfig(format!("level {level} outside (0, 1)")));
    }
    if variances.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidConfig("variances must be nonnegative".into()));
    }
    let m_f = m as f64;
    let qbar = estimates.iter().sum::<f64>() / m_f;
    let w = variances.iter().sum::<f64>() / m_f;
    let b = estimates.iter().map(|e| (e - qbar) * (e - qbar)).sum::<f64>() / (m_f - 1.0);
    let inflation = 1.0 + 1.0 / m_f;
    let t_var = w + inflation * b;
    let df = if b > 0.0 {
        ((m_f - 1.0) * (1.0 + w / (inflation * b)).powi(2)).min(DF_CAP)
    } else {
        DF_CAP
    };
    let quantile = StudentsT::new(0.0, 1.0, df)
        .expect("valid df")
        .inverse_cdf(0.5 * (1.0 + level));
    let half = quantile * t_var.sqrt();
    Ok(PooledEstimate {
        qbar,
        w,
        b,
        t_var,
        df,
        ci: (qbar - half, qbar + half),
        level,
    })
}

/// Normal-quantile interval for a single estimate and variance.
pub fn wald_interval(estimate: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    if level.is_nan() || level <= 0.0 || level >= 1.0 {
        return Err(Error::InvalidConfig(format!("level {level} outside (0, 1)")));
    }
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.5 * (1.0 + level));
    let half = z * variance.sqrt();
    Ok((estimate - half, estimate + half))
}

/// One successful replication's contribution to a method's metrics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub estimate: f64,
    pub variance: f64,
    pub ci: (f64, f64),
}

/// Aggregated simulation metrics for one method and coefficient.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AggregateStats {
    pub absolute_bias: f64,
    /// Sample standard deviation of the point estimates across replications.
    pub mc_sd: f64,
    /// Root of the average estimated variance.
    pub se: f64,
    pub coverage: f64,
    pub avg_ci_length: f64,
    pub replications_used: usize,
}

/// Aggregate per-replication records against the true coefficient value.
pub fn aggregate_metrics(records: &[ReplicationRecord], truth: f64) -> Result<AggregateStats> {
    let n = records.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 replications to aggregate, got {n}"
        )));
    }
    let n_f = n as f64;
    let mean_est = records.iter().map(|r| r.estimate).sum::<f64>() / n_f;
    let mc_var = records
        .iter()
        .map(|r| (r.estimate - mean_est) * (r.estimate - mean_est))
        .sum::<f64>()
        / (n_f - 1.0);
    let mean_var = records.iter().map(|r| r.variance).sum::<f64>() / n_f;
    let covered = records
        .iter()
        .filter(|r| r.ci.0 <= truth && truth <= r.ci.1)
        .count();
    let avg_len = records.iter().map(|r| r.ci.1 - r.ci.0).sum::<f64>() / n_f;
    Ok(AggregateStats {
        absolute_bias: (mean_est - truth).abs(),
        mc_sd: mc_var.sqrt(),
        se: mean_var.sqrt(),
        coverage: covered as f64 / n_f,
        avg_ci_length: avg_len,
        replications_used: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{validate_dataset, CompletedDataset, Unit};

    fn completed(units: Vec<Unit>) -> CompletedDataset {
        CompletedDataset::from_fully_observed(&validate_dataset(units).unwrap()).unwrap()
    }

    #[test]
    fn balanced_two_by_two_gives_zero_coefficients() {
        // x = x2 in an intercept + x2 model; replicate the 4-point balanced
        // table so every (x, y) combination appears once
        let units = vec![
            Unit::new(0, 0, Some(0), Some(0)),
            Unit::new(0, 1, Some(0), Some(0)),
            Unit::new(0, 0, Some(0), Some(1)),
            Unit::new(0, 1, Some(0), Some(1)),
        ];
        let data = completed(units);
        let (rows, y) = design_matrix(&data, AnalysisModel::IttNoInteraction);
        // reduce to intercept + x2 by hand
        let rows2: Vec<[f64; 5]> = rows
            .iter()
            .map(|r| [r[0], r[2], 0.0, 0.0, 0.0])
            .collect();
        let (score, _) = logistic_score_information(&rows2[..], &y, &[0.0, 0.0]);
        assert!(score.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn separation_is_flagged() {
        // y identical to x2 while x1 and t vary freely: perfectly separated
        // along the x2 column with a full-rank design
        let mut units = Vec::new();
        for i in 0..40u8 {
            let x1 = i % 2;
            let t = (i / 2) % 2;
            let x2 = (i / 4) % 2;
            units.push(Unit::new(t, x2, Some(x1), Some(x2)));
        }
        let data = completed(units);
        let fit = fit_logistic(&data, AnalysisModel::IttNoInteraction).unwrap();
        assert!(fit.separation_flag);
        assert!(!fit.converged);
    }

    #[test]
    fn rank_deficiency_is_an_error() {
        // x1 constant and equal to the intercept column
        let units = vec![
            Unit::new(0, 0, Some(1), Some(0)),
            Unit::new(1, 1, Some(1), Some(1)),
            Unit::new(0, 1, Some(1), Some(1)),
            Unit::new(1, 0, Some(1), Some(0)),
        ];
        let data = completed(units);
        let err = fit_logistic(&data, AnalysisModel::WithInteraction).unwrap_err();
        assert!(matches!(err, Error::RankDeficient));
    }

    #[test]
    fn tight_prior_dominates_coefficient_draw() {
        let units: Vec<Unit> = (0..60)
            .map(|i: u8| Unit::new(i % 2, (i / 2) % 2, Some((i / 4) % 2), Some((i / 8) % 2)))
            .collect();
        let data = completed(units);
        let mut s = crate::rng::derive_stream(55, 0);
        let beta = sample_beta_conditional(
            &data,
            AnalysisModel::WithInteraction,
            &[0.0; 5],
            1e-12,
            &mut s,
        )
        .unwrap();
        assert!(beta.iter().all(|b| b.abs() < 1e-4), "{beta:?}");

        assert!(sample_beta_conditional(
            &data,
            AnalysisModel::WithInteraction,
            &[0.0; 5],
            0.0,
            &mut s
        )
        .is_err());
    }

    #[test]
    fn rubin_combine_hand_oracle() {
        let pooled = rubin_combine(&[0.2, 0.4, 0.6], &[0.01, 0.01, 0.01], 0.95).unwrap();
        assert!((pooled.qbar - 0.4).abs() < 1e-15);
        assert!((pooled.w - 0.01).abs() < 1e-15);
        assert!((pooled.b - 0.04).abs() < 1e-15);
        assert!((pooled.t_var - 0.06333333333333334).abs() < 1e-15);
        assert!((pooled.df - 2.8203125).abs() < 1e-12);
        assert!(pooled.ci.0 < pooled.qbar && pooled.qbar < pooled.ci.1);
        // t_var = w + (1 + 1/M) b identity
        assert!((pooled.t_var - (pooled.w + (1.0 + 1.0 / 3.0) * pooled.b)).abs() < 1e-15);
    }

    #[test]
    fn rubin_combine_zero_between_variance() {
        let pooled = rubin_combine(&[0.5; 4], &[0.04; 4], 0.95).unwrap();
        assert_eq!(pooled.b, 0.0);
        assert_eq!(pooled.t_var, pooled.w);
        assert_eq!(pooled.df, DF_CAP);
        // normal-limit interval: 0.5 +/- 1.96 * 0.2
        assert!((pooled.ci.0 - (0.5 - 1.959964 * 0.2)).abs() < 1e-4);
    }

    #[test]
    fn rubin_combine_preconditions() {
        assert!(rubin_combine(&[0.1], &[0.01], 0.95).is_err());
        assert!(rubin_combine(&[0.1, 0.2, 0.3], &[0.01, 0.01], 0.95).is_err());
        assert!(rubin_combine(&[0.1, 0.2], &[0.01, -0.01], 0.95).is_err());
    }

    #[test]
    fn rubin_combine_permutation_invariant() {
        let a = rubin_combine(&[0.1, 0.5, 0.3], &[0.02, 0.03, 0.04], 0.9).unwrap();
        let b = rubin_combine(&[0.3, 0.1, 0.5], &[0.04, 0.02, 0.03], 0.9).unwrap();
        assert!((a.qbar - b.qbar).abs() < 1e-15);
        assert!((a.t_var - b.t_var).abs() < 1e-15);
        assert!((a.df - b.df).abs() < 1e-12);
    }

    #[test]
    fn wald_interval_reference_points() {
        let (lo, hi) = wald_interval(0.0, 1.0, 0.95).unwrap();
        assert!((lo + 1.959964).abs() < 1e-5);
        assert!((hi - 1.959964).abs() < 1e-5);

        let (lo, hi) = wald_interval(2.0, 0.0, 0.95).unwrap();
        assert_eq!((lo, hi), (2.0, 2.0));

        // reference interval for estimate -0.692, sd 0.715
        let (lo, hi) = wald_interval(-0.692, 0.715 * 0.715, 0.95).unwrap();
        assert!((lo - -2.0934).abs() < 5e-4);
        assert!((hi - 0.7094).abs() < 5e-4);

        assert!(wald_interval(0.0, 1.0, 1.5).is_err());
        assert!(wald_interval(0.0, -1.0, 0.95).is_err());
    }

    #[test]
    fn aggregate_metrics_arithmetic() {
        let recs = vec![
            ReplicationRecord { estimate: 0.2, variance: 0.01, ci: (0.0, 0.4) },
            ReplicationRecord { estimate: 0.4, variance: 0.01, ci: (0.2, 0.6) },
        ];
        let stats = aggregate_metrics(&recs, 0.3).unwrap();
        assert!(stats.absolute_bias.abs() < 1e-15);
        assert!((stats.mc_sd - 0.1414213562373095).abs() < 1e-12);
        assert_eq!(stats.coverage, 1.0);
        assert!((stats.avg_ci_length - 0.4).abs() < 1e-12);

        assert!(aggregate_metrics(&recs[..1], 0.3).is_err());
    }
}
