//! The missing-data methods: multiple imputation from the identified joint
//! (design stage and outcome stage), mean imputation, stochastic regression
//! imputation, and complete-case analysis.
//!
//! Method names follow the -R / -NR / -RY / -NRY convention: `R` methods pool
//! across treatment arms (respecting that randomization balances the
//! covariate and missingness distributions), `NR` methods stratify by arm,
//! and the `Y` variants bring the outcome into the imputation model — for MI
//! through a factorized design-times-outcome model sampled by data
//! augmentation, for the single-imputation baselines by stratifying on
//! (treatment, outcome) cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::{build_identified_joint, IdentifiedJoint, Restriction};
use crate::infer::{irls_fit, logistic, sample_beta_conditional_rows, AnalysisModel};
use crate::rng::{sample_beta, sample_dirichlet, sample_mvnormal, RngStream};
use crate::types::{
    CompletedDataset, CompletedUnit, Dataset, ObservedProbs, StratifiedProbs, Stratification, Unit,
};

/// Every method the harness can run, including the no-imputation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    MiR,
    MiNr,
    MiRy,
    MiNry,
    MeanR,
    MeanNr,
    MeanNry,
    RegR,
    RegNr,
    RegNry,
    Cca,
    BeforeDeletion,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::MiR,
        Method::MiNr,
        Method::MiRy,
        Method::MiNry,
        Method::MeanR,
        Method::MeanNr,
        Method::MeanNry,
        Method::RegR,
        Method::RegNr,
        Method::RegNry,
        Method::Cca,
        Method::BeforeDeletion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MiR => "MI-R",
            Method::MiNr => "MI-NR",
            Method::MiRy => "MI-RY",
            Method::MiNry => "MI-NRY",
            Method::MeanR => "Mean-R",
            Method::MeanNr => "Mean-NR",
            Method::MeanNry => "Mean-NRY",
            Method::RegR => "Reg-R",
            Method::RegNr => "Reg-NR",
            Method::RegNry => "Reg-NRY",
            Method::Cca => "CCA",
            Method::BeforeDeletion => "BeforeDeletion",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }

    /// True for methods pooled over multiple imputed datasets.
    pub fn is_multiple_imputation(self) -> bool {
        matches!(self, Method::MiR | Method::MiNr | Method::MiRy | Method::MiNry)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Method::parse(&s).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "unknown method {s:?}; expected one of {}",
                Method::ALL.map(|m| m.name()).join(", ")
            ))
        })
    }
}

/// Observed-cell counts per stratum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedCounts {
    stratification: Stratification,
    counts: Vec<[u64; 9]>,
    sizes: Vec<usize>,
}

impl ObservedCounts {
    pub fn stratification(&self) -> Stratification {
        self.stratification
    }

    pub fn counts(&self, stratum: usize) -> &[u64; 9] {
        &self.counts[stratum]
    }

    pub fn size(&self, stratum: usize) -> usize {
        self.sizes[stratum]
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// Tabulate each unit into its observed cell within its stratum.
pub fn tabulate_counts(dataset: &Dataset, strat: Stratification) -> ObservedCounts {
    let k = strat.stratum_count();
    let mut counts = vec![[0u64; 9]; k];
    let mut sizes = vec![0usize; k];
    for unit in dataset.units() {
        let s = strat.stratum_of(unit);
        counts[s][ObservedProbs::cell_of(unit)] += 1;
        sizes[s] += 1;
    }
    ObservedCounts {
        stratification: strat,
        counts,
        sizes,
    }
}

/// Draw per-stratum observed-cell probabilities from the conjugate posterior.
///
/// The prior places total mass 1 split evenly over every cell of the
/// stratified parameterization: 1/9 per cell pooled, 1/18 per cell by arm,
/// 1/36 per cell by (arm, outcome).
pub fn draw_posterior_probs(
    counts: &ObservedCounts,
    stream: &mut RngStream,
) -> Result<StratifiedProbs> {
    let strat = counts.stratification();
    let k = strat.stratum_count();
    let prior = 1.0 / (9.0 * k as f64);
    let total = counts.total() as f64;
    let mut tables = Vec::with_capacity(k);
    for s in 0..k {
        let alpha: Vec<f64> = counts.counts(s).iter().map(|&c| c as f64 + prior).collect();
        let p = sample_dirichlet(stream, &alpha)?;
        let theta = ObservedProbs::new(std::array::from_fn(|i| p[i]))?;
        tables.push((theta, counts.size(s) as f64 / total));
    }
    StratifiedProbs::new(strat, tables)
}

/// Candidate completions of a unit: the observed values crossed with every
/// value of the missing components. Order is deterministic.
fn candidate_completions(unit: &Unit) -> Vec<(u8, u8)> {
    match (unit.x1, unit.x2) {
        (Some(a), Some(b)) => vec![(a, b)],
        (Some(a), None) => vec![(a, 0), (a, 1)],
        (None, Some(b)) => vec![(0, b), (1, b)],
        (None, None) => vec![(0, 0), (0, 1), (1, 0), (1, 1)],
    }
}

/// Draw a completion for `unit` with weights proportional to the identified
/// joint cell, optionally tilted by the outcome likelihood.
fn draw_completion(
    joint: &IdentifiedJoint,
    unit: &Unit,
    outcome: Option<(&[f64], AnalysisModel)>,
    stream: &mut RngStream,
) -> Result<(u8, u8)> {
    let (d1, d2) = (unit.d1(), unit.d2());
    let candidates = candidate_completions(unit);
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let mut weights = Vec::with_capacity(candidates.len());
    let mut total = 0.0;
    for &(x1, x2) in &candidates {
        let mut w = joint.cell(x1, x2, d1, d2);
        if let Some((beta, model)) = outcome {
            let row = completion_design(unit.t, x1, x2, model);
            let eta: f64 = row.iter().zip(beta).map(|(r, b)| r * b).sum();
            // p^y (1-p)^(1-y) = sigma((2y - 1) eta)
            w *= logistic((2.0 * unit.y as f64 - 1.0) * eta);
        }
        weights.push(w);
        total += w;
    }
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::UndefinedExtrapolation {
            event: format!("pattern ({d1},{d2}) with observed part {:?}/{:?}", unit.x1, unit.x2),
        });
    }
    let u = stream.uniform() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(candidates[i]);
        }
    }
    Ok(*candidates.last().unwrap())
}

fn completion_design(t: u8, x1: u8, x2: u8, model: AnalysisModel) -> [f64; 5] {
    let (t, x1, x2) = (t as f64, x1 as f64, x2 as f64);
    let interaction = if model == AnalysisModel::WithInteraction {
        t * x2
    } else {
        0.0
    };
    [1.0, x1, x2, t, interaction]
}

/// Completed-unit scaffold: observed entries prefilled, provenance flags set,
/// missing entries to be overwritten by the caller.
struct Scaffold {
    units: Vec<CompletedUnit>,
    imputed_x1: Vec<bool>,
    imputed_x2: Vec<bool>,
}

/// Build the scaffold plus the indices of incomplete units.
fn scaffold(dataset: &Dataset) -> (Scaffold, Vec<usize>) {
    let n = dataset.n();
    let mut units = Vec::with_capacity(n);
    let mut imputed_x1 = vec![false; n];
    let mut imputed_x2 = vec![false; n];
    let mut incomplete = Vec::new();
    for (i, u) in dataset.units().iter().enumerate() {
        if !u.is_complete() {
            incomplete.push(i);
        }
        imputed_x1[i] = u.x1.is_none();
        imputed_x2[i] = u.x2.is_none();
        units.push(CompletedUnit {
            t: u.t,
            y: u.y,
            x1: u.x1.map_or(f64::NAN, f64::from),
            x2: u.x2.map_or(f64::NAN, f64::from),
        });
    }
    (
        Scaffold {
            units,
            imputed_x1,
            imputed_x2,
        },
        incomplete,
    )
}

impl Scaffold {
    fn set(&mut self, i: usize, unit: &Unit, x1: u8, x2: u8) {
        debug_assert!(unit.x1.is_none_or(|v| v == x1));
        debug_assert!(unit.x2.is_none_or(|v| v == x2));
        self.units[i].x1 = x1 as f64;
        self.units[i].x2 = x2 as f64;
    }

    fn finish(&self) -> CompletedDataset {
        debug_assert!(self
            .units
            .iter()
            .all(|u| u.x1.is_finite() && u.x2.is_finite()));
        CompletedDataset::from_parts(
            self.units.clone(),
            self.imputed_x1.clone(),
            self.imputed_x2.clone(),
        )
    }
}

/// Design-stage multiple imputation: draw observed-cell probabilities from
/// their posterior, build the identified joint per stratum, and fill each
/// missing value from its extrapolation distribution. Repeated `m`
/// independent times.
///
/// Covers MI-R (pooled), MI-NR (by arm), and the by-(arm, outcome) variant
/// used as MI-NRY.
pub fn mi_design_stage(
    dataset: &Dataset,
    restriction: Restriction,
    strat: Stratification,
    m: usize,
    stream: &mut RngStream,
) -> Result<Vec<CompletedDataset>> {
    if m < 1 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    let counts = tabulate_counts(dataset, strat);
    let (mut work, incomplete) = scaffold(dataset);
    // strata that actually need a joint built
    let needs_joint: Vec<bool> = {
        let mut needed = vec![false; strat.stratum_count()];
        for &i in &incomplete {
            needed[strat.stratum_of(&dataset.units()[i])] = true;
        }
        needed
    };

    let mut out = Vec::with_capacity(m);
    for rep in 0..m {
        let mut run = || -> Result<CompletedDataset> {
            let probs = draw_posterior_probs(&counts, stream)?;
            let mut joints: Vec<Option<IdentifiedJoint>> = Vec::with_capacity(needs_joint.len());
            for (s, needed) in needs_joint.iter().enumerate() {
                joints.push(if *needed {
                    Some(build_identified_joint(probs.table(s), restriction)?)
                } else {
                    None
                });
            }
            for &i in &incomplete {
                let unit = &dataset.units()[i];
                let joint = joints[strat.stratum_of(unit)]
                    .as_ref()
                    .expect("joint built for stratum with missingness");
                let (x1, x2) = draw_completion(joint, unit, None, stream)?;
                work.set(i, unit, x1, x2);
            }
            Ok(work.finish())
        };
        out.push(run().map_err(|e| Error::Imputation {
            replication: rep,
            source: Box::new(e),
        })?);
    }
    Ok(out)
}

/// Chain schedule and prior for the outcome-stage sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    pub burnin: usize,
    /// Iterations between retained completed datasets.
    pub thin: usize,
    /// Number of retained datasets.
    pub m: usize,
    pub beta_prior_variance: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            burnin: 500,
            thin: 50,
            m: 100,
            beta_prior_variance: 100.0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("thin and m must be positive".into()));
        }
        if !self.beta_prior_variance.is_finite() || self.beta_prior_variance <= 0.0 {
            return Err(Error::InvalidConfig(
                "beta prior variance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome-stage multiple imputation.
///
/// Pooled stratification runs data augmentation on the factorized model:
/// the covariate/missingness joint (identified from the arm-collapsed table)
/// times the logistic outcome model. Each sweep draws the observed-cell
/// probabilities from their conjugate posterior, draws outcome coefficients
/// through the latent-variable Gaussian conditional, and redraws every
/// missing value with weights proportional to joint cell times outcome
/// likelihood.
///
/// By-(arm, outcome) stratification needs no outcome model: it is the
/// design-stage sampler on the 36-cell parameterization.
pub fn mi_outcome_stage(
    dataset: &Dataset,
    restriction: Restriction,
    strat: Stratification,
    model: AnalysisModel,
    cfg: &GibbsConfig,
    stream: &mut RngStream,
) -> Result<Vec<CompletedDataset>> {
    cfg.validate()?;
    match strat {
        Stratification::ByArmOutcome => {
            mi_design_stage(dataset, restriction, strat, cfg.m, stream)
        }
        Stratification::Pooled => gibbs_outcome_stage(dataset, restriction, model, cfg, stream),
        Stratification::ByArm => Err(Error::InvalidConfig(
            "outcome-stage imputation is pooled or by (arm, outcome)".into(),
        )),
    }
}

fn gibbs_outcome_stage(
    dataset: &Dataset,
    restriction: Restriction,
    model: AnalysisModel,
    cfg: &GibbsConfig,
    stream: &mut RngStream,
) -> Result<Vec<CompletedDataset>> {
    let counts = tabulate_counts(dataset, Stratification::Pooled);
    let (mut work, incomplete) = scaffold(dataset);
    let k = model.ncols();
    let mut beta = vec![0.0; k];

    // initial fill from the extrapolation distribution alone (equivalent to
    // scoring with beta = 0)
    {
        let probs = draw_posterior_probs(&counts, stream)?;
        let joint = build_identified_joint(probs.table(0), restriction)?;
        for &i in &incomplete {
            let unit = &dataset.units()[i];
            let (x1, x2) = draw_completion(&joint, unit, None, stream)?;
            work.set(i, unit, x1, x2);
        }
    }

    let mut retained = Vec::with_capacity(cfg.m);
    let mut iteration = 0usize;
    while retained.len() < cfg.m {
        iteration += 1;
        let probs = draw_posterior_probs(&counts, stream)?;
        let joint = build_identified_joint(probs.table(0), restriction).map_err(|e| {
            Error::ChainFailure(format!("iteration {iteration}: {e}"))
        })?;

        let completed = work.finish();
        let (rows, y) = crate::infer::design_matrix(&completed, model);
        beta = sample_beta_conditional_rows(&rows, &y, k, &beta, cfg.beta_prior_variance, stream)?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::ChainFailure(format!(
                "non-finite coefficient update at iteration {iteration}"
            )));
        }

        for &i in &incomplete {
            let unit = &dataset.units()[i];
            let (x1, x2) = draw_completion(&joint, unit, Some((&beta, model)), stream)?;
            work.set(i, unit, x1, x2);
        }

        if iteration > cfg.burnin && (iteration - cfg.burnin).is_multiple_of(cfg.thin) {
            retained.push(work.finish());
        }
    }
    Ok(retained)
}

/// Replace each missing value with the stratum mean of the observed values
/// of that covariate. Deterministic; completed covariates may be fractional.
pub fn mean_impute(dataset: &Dataset, strat: Stratification) -> Result<CompletedDataset> {
    let k = strat.stratum_count();
    let mut sum = vec![[0.0f64; 2]; k];
    let mut cnt = vec![[0usize; 2]; k];
    for u in dataset.units() {
        let s = strat.stratum_of(u);
        if let Some(v) = u.x1 {
            sum[s][0] += v as f64;
            cnt[s][0] += 1;
        }
        if let Some(v) = u.x2 {
            sum[s][1] += v as f64;
            cnt[s][1] += 1;
        }
    }
    let (mut work, _) = scaffold(dataset);
    for (i, u) in dataset.units().iter().enumerate() {
        let s = strat.stratum_of(u);
        let mean_of = |j: usize| -> Result<f64> {
            if cnt[s][j] == 0 {
                return Err(Error::EmptyStratum {
                    stratum: strat.stratum_label(s),
                    covariate: if j == 0 { "x1".into() } else { "x2".into() },
                });
            }
            Ok(sum[s][j] / cnt[s][j] as f64)
        };
        if u.x1.is_none() {
            work.units[i].x1 = mean_of(0)?;
        }
        if u.x2.is_none() {
            work.units[i].x2 = mean_of(1)?;
        }
    }
    Ok(work.finish())
}

/// Coefficient draws for one stratum's imputation regressions.
struct StratumModels {
    /// Drawn coefficients of x1 ~ x2 (intercept, slope).
    x1_given_x2: [f64; 2],
    /// Drawn coefficients of x2 ~ x1.
    x2_given_x1: [f64; 2],
    /// Drawn marginal P(X1 = 1) for units missing both covariates.
    p_x1: f64,
}

fn fit_stratum_models(
    dataset: &Dataset,
    strat: Stratification,
    s: usize,
    stream: &mut RngStream,
) -> Result<StratumModels> {
    let label = || strat.stratum_label(s);
    let complete: Vec<&Unit> = dataset
        .units()
        .iter()
        .filter(|u| strat.stratum_of(u) == s && u.is_complete())
        .collect();

    let fit_one = |xs: Vec<f64>, ys: Vec<f64>| -> Result<crate::infer::RawFit> {
        let rows: Vec<[f64; 5]> = xs.iter().map(|&x| [1.0, x, 0.0, 0.0, 0.0]).collect();
        let raw = irls_fit(&rows, &ys, 2).map_err(|e| Error::StratumFit {
            stratum: label(),
            source: Box::new(e),
        })?;
        if raw.separation || !raw.converged {
            return Err(Error::StratumFit {
                stratum: label(),
                source: Box::new(Error::Separation { context: label() }),
            });
        }
        Ok(raw)
    };

    let x1_vals: Vec<f64> = complete.iter().map(|u| u.x1.unwrap() as f64).collect();
    let x2_vals: Vec<f64> = complete.iter().map(|u| u.x2.unwrap() as f64).collect();
    let fit1 = fit_one(x2_vals.clone(), x1_vals.clone())?;
    let fit2 = fit_one(x1_vals, x2_vals)?;

    // posterior draws: normal around the MLE with the inverse observed
    // information, and a Jeffreys posterior for the x1 margin
    let d1 = sample_mvnormal(stream, &fit1.coef, &fit1.covariance)?;
    let d2 = sample_mvnormal(stream, &fit2.coef, &fit2.covariance)?;
    let x1_given_x2 = [d1[0], d1[1]];
    let x2_given_x1 = [d2[0], d2[1]];

    let successes = complete.iter().filter(|u| u.x1 == Some(1)).count() as f64;
    let failures = complete.len() as f64 - successes;
    let p_x1 = sample_beta(stream, successes + 0.5, failures + 0.5)?;

    Ok(StratumModels {
        x1_given_x2,
        x2_given_x1,
        p_x1,
    })
}

/// Stochastic regression imputation: per stratum, fit each covariate on the
/// other using complete cases only, draw coefficients from the asymptotic
/// normal posterior, and draw missing values from the resulting predictive
/// distributions. Units missing both covariates draw x1 from a posterior
/// draw of its margin, then x2 from the drawn conditional model.
pub fn regression_impute(
    dataset: &Dataset,
    strat: Stratification,
    stream: &mut RngStream,
) -> Result<CompletedDataset> {
    let k = strat.stratum_count();
    let (mut work, incomplete) = scaffold(dataset);

    // strata needing models
    let mut needs = vec![false; k];
    for &i in &incomplete {
        needs[strat.stratum_of(&dataset.units()[i])] = true;
    }
    let mut models: Vec<Option<StratumModels>> = Vec::with_capacity(k);
    for (s, needed) in needs.iter().enumerate() {
        models.push(if *needed {
            Some(fit_stratum_models(dataset, strat, s, stream)?)
        } else {
            None
        });
    }

    for &i in &incomplete {
        let unit = &dataset.units()[i];
        let m = models[strat.stratum_of(unit)]
            .as_ref()
            .expect("models fit for stratum with missingness");
        let (x1, x2) = match (unit.x1, unit.x2) {
            (Some(a), None) => {
                let p = logistic(m.x2_given_x1[0] + m.x2_given_x1[1] * a as f64);
                (a, stream.bernoulli(p))
            }
            (None, Some(b)) => {
                let p = logistic(m.x1_given_x2[0] + m.x1_given_x2[1] * b as f64);
                (stream.bernoulli(p), b)
            }
            (None, None) => {
                let a = stream.bernoulli(m.p_x1);
                let p = logistic(m.x2_given_x1[0] + m.x2_given_x1[1] * a as f64);
                (a, stream.bernoulli(p))
            }
            (Some(_), Some(_)) => unreachable!("complete units are not in the incomplete list"),
        };
        work.set(i, unit, x1, x2);
    }
    Ok(work.finish())
}

/// The subsequence of units with both covariates observed, order preserved.
pub fn complete_cases(dataset: &Dataset) -> Result<Dataset> {
    let kept: Vec<Unit> = dataset
        .units()
        .iter()
        .copied()
        .filter(Unit::is_complete)
        .collect();
    if kept.is_empty() {
        return Err(Error::NoCompleteCases);
    }
    crate::types::validate_dataset(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use crate::simgen::{generate_dataset, Association, Mechanism, ScenarioConfig};
    use crate::types::validate_dataset;

    fn unit(t: u8, y: u8, x1: Option<u8>, x2: Option<u8>) -> Unit {
        Unit::new(t, y, x1, x2)
    }

    /// A balanced fully observed block plus optional extra units.
    fn uniform_complete_block(per_cell: usize) -> Vec<Unit> {
        let mut units = Vec::new();
        for x1 in 0..2u8 {
            for x2 in 0..2u8 {
                for i in 0..per_cell {
                    units.push(unit((i % 2) as u8, (i / 2 % 2) as u8, Some(x1), Some(x2)));
                }
            }
        }
        units
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("mi-r"), Some(Method::MiR));
        assert_eq!(Method::parse("nope"), None);
    }

    #[test]
    fn tabulate_counts_basic() {
        let data = validate_dataset(vec![
            unit(0, 0, Some(0), Some(0)),
            unit(1, 0, Some(1), None),
            unit(1, 1, None, Some(1)),
            unit(0, 1, None, None),
        ])
        .unwrap();
        let counts = tabulate_counts(&data, Stratification::Pooled);
        assert_eq!(counts.counts(0)[0], 1);
        assert_eq!(counts.counts(0)[4], 1);
        assert_eq!(counts.counts(0)[6], 1);
        assert_eq!(counts.counts(0)[8], 1);
        assert_eq!(counts.total(), 4);

        // fully observed data puts all mass in the complete cells
        let complete = validate_dataset(uniform_complete_block(2)).unwrap();
        let c = tabulate_counts(&complete, Stratification::Pooled);
        assert_eq!(c.counts(0)[4..].iter().sum::<u64>(), 0);

        // constant outcome leaves half the (arm, outcome) strata empty
        let data = validate_dataset(vec![
            unit(0, 0, Some(0), Some(0)),
            unit(1, 0, Some(1), Some(1)),
        ])
        .unwrap();
        let c = tabulate_counts(&data, Stratification::ByArmOutcome);
        let nonempty = (0..4).filter(|&s| c.size(s) > 0).count();
        assert_eq!(nonempty, 2);
    }

    /// A published single-draw observed table for the loglinear generator at
    /// n = 1000: complete cells 103/55/97/133, x2-missing 65 (x1=0) and 197
    /// (x1=1), x1-missing 68 (x2=0) and 155 (x2=1), both missing 127.
    fn reference_observed_table() -> Dataset {
        let mut units = Vec::new();
        let mut push = |n: usize, x1: Option<u8>, x2: Option<u8>| {
            for i in 0..n {
                units.push(unit((i % 2) as u8, ((i / 2) % 2) as u8, x1, x2));
            }
        };
        push(103, Some(0), Some(0));
        push(55, Some(0), Some(1));
        push(97, Some(1), Some(0));
        push(133, Some(1), Some(1));
        push(65, Some(0), None);
        push(197, Some(1), None);
        push(68, None, Some(0));
        push(155, None, Some(1));
        push(127, None, None);
        validate_dataset(units).unwrap()
    }

    #[test]
    fn reference_table_counts_map_to_canonical_cells() {
        let data = reference_observed_table();
        assert_eq!(data.n(), 1000);
        let counts = tabulate_counts(&data, Stratification::Pooled);
        assert_eq!(
            counts.counts(0),
            &[103, 55, 97, 133, 197, 65, 155, 68, 127]
        );
        assert_eq!(counts.total(), 1000);
        assert_eq!(complete_cases(&data).unwrap().n(), 388);
    }

    #[test]
    fn design_stage_identity_without_missingness() {
        let data = validate_dataset(uniform_complete_block(3)).unwrap();
        let mut s = derive_stream(20, 0);
        let imputations =
            mi_design_stage(&data, Restriction::Icin, Stratification::Pooled, 3, &mut s).unwrap();
        assert_eq!(imputations.len(), 3);
        for c in &imputations {
            for (cu, u) in c.units().iter().zip(data.units()) {
                assert_eq!(cu.x1, u.x1.unwrap() as f64);
                assert_eq!(cu.x2, u.x2.unwrap() as f64);
            }
        }
    }

    #[test]
    fn symmetric_table_imputes_half_and_half() {
        // uniform complete cells force f(x2 | x1, pattern) ~ 1/2 on average
        let mut units = uniform_complete_block(100);
        units.push(unit(0, 0, Some(0), None));
        let data = validate_dataset(units).unwrap();
        let mut s = derive_stream(21, 0);
        let m = 10_000;
        let imputations =
            mi_design_stage(&data, Restriction::Icin, Stratification::Pooled, m, &mut s).unwrap();
        let idx = data.n() - 1;
        let freq = imputations
            .iter()
            .filter(|c| c.units()[idx].x2 == 1.0)
            .count() as f64
            / m as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
        for c in &imputations {
            assert!(c.x2_imputed(idx));
            assert!(!c.x1_imputed(idx));
        }
    }

    #[test]
    fn design_stage_matches_posterior_predictive_oracle() {
        // small dataset; empirical imputation frequency for one unit must
        // match the posterior-predictive probability integrated by brute
        // force over posterior draws
        let cfg = ScenarioConfig::new(1, Mechanism::IcinLoglinear, Association::High, 60);
        let mut gen_stream = derive_stream(22, 0);
        let (data, _) = generate_dataset(&cfg, &mut gen_stream).unwrap();
        let target = data
            .units()
            .iter()
            .position(|u| u.x2.is_none() && u.x1.is_some())
            .expect("a unit missing x2");

        let m = 20_000;
        let mut s = derive_stream(22, 1);
        let imputations =
            mi_design_stage(&data, Restriction::Icin, Stratification::Pooled, m, &mut s).unwrap();
        let freq = imputations
            .iter()
            .filter(|c| c.units()[target].x2 == 1.0)
            .count() as f64
            / m as f64;

        // oracle: average the extrapolation probability over fresh posterior
        // draws of the observed-cell table
        let counts = tabulate_counts(&data, Stratification::Pooled);
        let mut oracle_stream = derive_stream(22, 2);
        let draws = 10_000;
        let mut p = 0.0;
        let x1 = data.units()[target].x1.unwrap();
        for _ in 0..draws {
            let probs = draw_posterior_probs(&counts, &mut oracle_stream).unwrap();
            let joint = build_identified_joint(probs.table(0), Restriction::Icin).unwrap();
            let table = crate::identify::extrapolation_dist(
                &joint,
                crate::types::MissingnessPattern::X2Missing,
                crate::identify::ObservedPart::X1(x1),
            )
            .unwrap();
            p += table[1];
        }
        p /= draws as f64;
        assert!((freq - p).abs() < 0.02, "empirical {freq} vs oracle {p}");
    }

    #[test]
    fn outcome_stage_by_arm_outcome_is_design_stage() {
        let cfg = ScenarioConfig::new(1, Mechanism::IcinLoglinear, Association::High, 80);
        let mut gen_stream = derive_stream(23, 0);
        let (data, _) = generate_dataset(&cfg, &mut gen_stream).unwrap();

        let gibbs = GibbsConfig {
            m: 4,
            ..Default::default()
        };
        let mut s1 = derive_stream(23, 1);
        let a = mi_outcome_stage(
            &data,
            Restriction::Icin,
            Stratification::ByArmOutcome,
            AnalysisModel::WithInteraction,
            &gibbs,
            &mut s1,
        )
        .unwrap();
        let mut s2 = derive_stream(23, 1);
        let b = mi_design_stage(
            &data,
            Restriction::Icin,
            Stratification::ByArmOutcome,
            4,
            &mut s2,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outcome_stage_rejects_by_arm() {
        let data = validate_dataset(uniform_complete_block(2)).unwrap();
        let mut s = derive_stream(23, 9);
        assert!(mi_outcome_stage(
            &data,
            Restriction::Icin,
            Stratification::ByArm,
            AnalysisModel::WithInteraction,
            &GibbsConfig::default(),
            &mut s,
        )
        .is_err());
    }

    #[test]
    fn gibbs_runs_and_preserves_observed_entries() {
        let cfg = ScenarioConfig::new(1, Mechanism::IcinLoglinear, Association::High, 120);
        let mut gen_stream = derive_stream(24, 0);
        let (data, _) = generate_dataset(&cfg, &mut gen_stream).unwrap();
        let gibbs = GibbsConfig {
            burnin: 20,
            thin: 2,
            m: 5,
            beta_prior_variance: 100.0,
        };
        let mut s = derive_stream(24, 1);
        let imputations = mi_outcome_stage(
            &data,
            Restriction::Icin,
            Stratification::Pooled,
            AnalysisModel::WithInteraction,
            &gibbs,
            &mut s,
        )
        .unwrap();
        assert_eq!(imputations.len(), 5);
        for c in &imputations {
            for (i, (cu, u)) in c.units().iter().zip(data.units()).enumerate() {
                assert_eq!(cu.t, u.t);
                assert_eq!(cu.y, u.y);
                if let Some(v) = u.x1 {
                    assert_eq!(cu.x1, v as f64);
                    assert!(!c.x1_imputed(i));
                } else {
                    assert!(cu.x1 == 0.0 || cu.x1 == 1.0);
                    assert!(c.x1_imputed(i));
                }
                if let Some(v) = u.x2 {
                    assert_eq!(cu.x2, v as f64);
                }
            }
        }
    }

    #[test]
    fn zero_coefficients_reduce_to_extrapolation_weights() {
        // with beta = 0 the outcome tilt is constant, so completion draws
        // follow the joint cells exactly
        let theta = crate::types::ObservedProbs::new([
            0.20, 0.05, 0.10, 0.15, 0.12, 0.08, 0.09, 0.06, 0.15,
        ])
        .unwrap();
        let joint = build_identified_joint(&theta, Restriction::Icin).unwrap();
        let u = unit(1, 1, Some(1), None);
        let beta = vec![0.0; 5];
        let m = 40_000;
        let mut s = derive_stream(25, 0);
        let mut count = 0;
        for _ in 0..m {
            let (_, x2) = draw_completion(
                &joint,
                &u,
                Some((&beta, AnalysisModel::WithInteraction)),
                &mut s,
            )
            .unwrap();
            count += x2 as usize;
        }
        let freq = count as f64 / m as f64;
        let expected = joint.cell(1, 1, 0, 1) / (joint.cell(1, 0, 0, 1) + joint.cell(1, 1, 0, 1));
        assert!((freq - expected).abs() < 0.01, "{freq} vs {expected}");
    }

    #[test]
    fn mean_impute_arithmetic_and_identity() {
        let data = validate_dataset(vec![
            unit(0, 0, Some(1), Some(0)),
            unit(0, 0, Some(1), Some(1)),
            unit(1, 0, Some(0), Some(1)),
            unit(1, 1, Some(0), Some(0)),
            unit(0, 1, None, Some(1)),
        ])
        .unwrap();
        let completed = mean_impute(&data, Stratification::Pooled).unwrap();
        assert_eq!(completed.units()[4].x1, 0.5);
        assert!(completed.x1_imputed(4));

        let full = validate_dataset(uniform_complete_block(2)).unwrap();
        let completed = mean_impute(&full, Stratification::Pooled).unwrap();
        for (cu, u) in completed.units().iter().zip(full.units()) {
            assert_eq!(cu.x1, u.x1.unwrap() as f64);
            assert_eq!(cu.x2, u.x2.unwrap() as f64);
        }
    }

    #[test]
    fn mean_impute_empty_stratum_errors() {
        // stratum (t=1, y=1) has a unit missing x2 and no observed x2
        let data = validate_dataset(vec![
            unit(0, 0, Some(1), Some(0)),
            unit(1, 1, Some(0), None),
        ])
        .unwrap();
        let err = mean_impute(&data, Stratification::ByArmOutcome).unwrap_err();
        match err {
            Error::EmptyStratum { stratum, covariate } => {
                assert_eq!(stratum, "t=1,y=1");
                assert_eq!(covariate, "x2");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn mean_r_equals_mean_nr_when_arm_means_coincide() {
        // both arms have observed mean 0.5 for each covariate
        let data = validate_dataset(vec![
            unit(0, 0, Some(0), Some(1)),
            unit(0, 0, Some(1), Some(0)),
            unit(1, 0, Some(0), Some(0)),
            unit(1, 0, Some(1), Some(1)),
            unit(0, 1, None, None),
            unit(1, 1, None, None),
        ])
        .unwrap();
        let pooled = mean_impute(&data, Stratification::Pooled).unwrap();
        let by_arm = mean_impute(&data, Stratification::ByArm).unwrap();
        assert_eq!(pooled, by_arm);
    }

    #[test]
    fn regression_impute_identity_and_frequencies() {
        let full = validate_dataset(uniform_complete_block(2)).unwrap();
        let mut s = derive_stream(26, 0);
        let completed = regression_impute(&full, Stratification::Pooled, &mut s).unwrap();
        for (cu, u) in completed.units().iter().zip(full.units()) {
            assert_eq!(cu.x1, u.x1.unwrap() as f64);
        }

        // x2 independent of x1 with P(X2=1) = 0.5 in the complete cases: the
        // imputed x2 frequency over many draws sits near 1/2
        let mut units = uniform_complete_block(200);
        for _ in 0..50 {
            units.push(unit(0, 0, Some(0), None));
        }
        let data = validate_dataset(units).unwrap();
        let mut total = 0usize;
        let reps = 200;
        for r in 0..reps {
            let mut s = derive_stream(27, r);
            let completed = regression_impute(&data, Stratification::Pooled, &mut s).unwrap();
            total += completed.units()[800..].iter().filter(|u| u.x2 == 1.0).count();
        }
        let freq = total as f64 / (reps as usize * 50) as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn regression_impute_fills_double_missing() {
        let mut units = uniform_complete_block(50);
        units.push(unit(1, 0, None, None));
        let data = validate_dataset(units).unwrap();
        let mut s = derive_stream(28, 0);
        let completed = regression_impute(&data, Stratification::Pooled, &mut s).unwrap();
        let last = completed.units().last().unwrap();
        assert!(last.x1 == 0.0 || last.x1 == 1.0);
        assert!(last.x2 == 0.0 || last.x2 == 1.0);
    }

    #[test]
    fn regression_impute_separation_names_stratum() {
        // complete cases have x2 identical to x1: x2 ~ x1 is separated
        let mut units = Vec::new();
        for i in 0..30 {
            let v = (i % 2) as u8;
            units.push(unit(0, 0, Some(v), Some(v)));
        }
        units.push(unit(0, 0, Some(0), None));
        let data = validate_dataset(units).unwrap();
        let mut s = derive_stream(29, 0);
        let err = regression_impute(&data, Stratification::Pooled, &mut s).unwrap_err();
        assert!(matches!(err, Error::StratumFit { .. }));
        assert!(err.to_string().contains("pooled"));
    }

    #[test]
    fn complete_cases_subsets_in_order() {
        let data = validate_dataset(vec![
            unit(0, 0, Some(0), Some(0)),
            unit(1, 0, Some(1), None),
            unit(1, 1, Some(1), Some(1)),
            unit(0, 1, None, None),
        ])
        .unwrap();
        let cc = complete_cases(&data).unwrap();
        assert_eq!(cc.n(), 2);
        assert_eq!(cc.units()[0], data.units()[0]);
        assert_eq!(cc.units()[1], data.units()[2]);

        let full = validate_dataset(uniform_complete_block(1)).unwrap();
        assert_eq!(complete_cases(&full).unwrap(), full);

        let none = validate_dataset(vec![unit(0, 0, None, None)]).unwrap();
        assert!(matches!(
            complete_cases(&none).unwrap_err(),
            Error::NoCompleteCases
        ));
    }
}
