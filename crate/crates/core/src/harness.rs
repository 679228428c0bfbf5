//! The Monte Carlo harness: runs replications of (generate, impute, fit,
//! pool), aggregates per-method metrics, and assembles run reports. Also
//! hosts the single-dataset analysis used by the CLI `analyze` command.
//!
//! Replication `r` draws everything from the stream labeled (master seed, r);
//! each method uses a child stream keyed by the method's fixed tag, so the
//! report is identical regardless of worker count or which other methods were
//! requested.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::Restriction;
use crate::impute::{
    complete_cases, mean_impute, mi_design_stage, mi_outcome_stage, regression_impute,
    GibbsConfig, Method,
};
use crate::infer::{
    aggregate_metrics, fit_logistic, rubin_combine, wald_interval, AnalysisModel, FitResult,
    ReplicationRecord,
};
use crate::rng::{derive_stream, RngStream};
use crate::simgen::{generate_dataset, ScenarioConfig};
use crate::types::{CompletedDataset, Dataset, Stratification};

/// Confidence level used throughout the study.
pub const CI_LEVEL: f64 = 0.95;

/// Chain schedule knobs exposed in the run configuration (the number of
/// retained datasets always equals the configured imputation count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsTuning {
    pub burnin: usize,
    pub thin: usize,
    pub beta_prior_variance: f64,
}

impl Default for GibbsTuning {
    fn default() -> Self {
        let d = GibbsConfig::default();
        GibbsTuning {
            burnin: d.burnin,
            thin: d.thin,
            beta_prior_variance: d.beta_prior_variance,
        }
    }
}

impl GibbsTuning {
    pub fn with_m(self, m: usize) -> GibbsConfig {
        GibbsConfig {
            burnin: self.burnin,
            thin: self.thin,
            m,
            beta_prior_variance: self.beta_prior_variance,
        }
    }
}

/// Full simulation-run configuration. This struct is the JSON schema of the
/// `simulate --config` file (snake_case keys, unknown keys rejected).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario_config: ScenarioConfig,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_imputations")]
    pub imputations: usize,
    pub methods: Vec<Method>,
    pub restriction: Restriction,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub gibbs: GibbsTuning,
}

fn default_replications() -> usize {
    1000
}

fn default_imputations() -> usize {
    100
}

fn default_workers() -> usize {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario_config.validate()?;
        if self.replications < 2 {
            return Err(Error::InvalidConfig("replications must be >= 2".into()));
        }
        if self.imputations < 2 {
            return Err(Error::InvalidConfig("imputations must be >= 2".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must be nonempty".into()));
        }
        if self.workers < 1 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        self.gibbs.with_m(self.imputations).validate()?;
        Ok(())
    }
}

/// Point estimate, variance, and interval for one coefficient.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub estimate: f64,
    pub variance: f64,
    pub ci: (f64, f64),
}

impl CoefficientEstimate {
    fn record(&self) -> ReplicationRecord {
        ReplicationRecord {
            estimate: self.estimate,
            variance: self.variance,
            ci: self.ci,
        }
    }
}

/// One method's estimates on one dataset (interaction coefficient present
/// only under the effect-modification model).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MethodEstimates {
    pub beta_t: CoefficientEstimate,
    pub beta_tx2: Option<CoefficientEstimate>,
}

fn fit_checked(data: &CompletedDataset, model: AnalysisModel) -> Result<FitResult> {
    let fit = fit_logistic(data, model)?;
    if fit.separation_flag {
        return Err(Error::Separation {
            context: "analysis fit".into(),
        });
    }
    Ok(fit)
}

/// Pool fits across multiply imputed datasets (t-reference intervals).
fn pooled_estimates(imputations: &[CompletedDataset], model: AnalysisModel) -> Result<MethodEstimates> {
    let fits: Vec<FitResult> = imputations
        .iter()
        .map(|c| fit_checked(c, model))
        .collect::<Result<_>>()?;
    let pool = |est: Vec<f64>, var: Vec<f64>| -> Result<CoefficientEstimate> {
        let p = rubin_combine(&est, &var, CI_LEVEL)?;
        Ok(CoefficientEstimate {
            estimate: p.qbar,
            variance: p.t_var,
            ci: p.ci,
        })
    };
    let beta_t = pool(
        fits.iter().map(|f| f.beta_t()).collect(),
        fits.iter().map(|f| f.var_beta_t()).collect(),
    )?;
    let beta_tx2 = match model.interaction_col() {
        Some(_) => Some(pool(
            fits.iter().map(|f| f.beta_tx2().unwrap()).collect(),
            fits.iter().map(|f| f.var_beta_tx2().unwrap()).collect(),
        )?),
        None => None,
    };
    Ok(MethodEstimates { beta_t, beta_tx2 })
}

/// One fit with normal-quantile intervals (single imputation, complete-case,
/// before-deletion).
fn single_estimates(data: &CompletedDataset, model: AnalysisModel) -> Result<MethodEstimates> {
    let fit = fit_checked(data, model)?;
    let beta_t = CoefficientEstimate {
        estimate: fit.beta_t(),
        variance: fit.var_beta_t(),
        ci: wald_interval(fit.beta_t(), fit.var_beta_t(), CI_LEVEL)?,
    };
    let beta_tx2 = match (fit.beta_tx2(), fit.var_beta_tx2()) {
        (Some(e), Some(v)) => Some(CoefficientEstimate {
            estimate: e,
            variance: v,
            ci: wald_interval(e, v, CI_LEVEL)?,
        }),
        _ => None,
    };
    Ok(MethodEstimates { beta_t, beta_tx2 })
}

/// Run one method on one dataset. `pre_deletion` is required only by the
/// before-deletion benchmark; `m` and `gibbs` only by the MI methods.
#[allow(clippy::too_many_arguments)]
pub fn run_method(
    method: Method,
    observed: &Dataset,
    pre_deletion: Option<&Dataset>,
    restriction: Restriction,
    model: AnalysisModel,
    m: usize,
    gibbs: &GibbsTuning,
    stream: &mut RngStream,
) -> Result<MethodEstimates> {
    match method {
        Method::MiR => pooled_estimates(
            &mi_design_stage(observed, restriction, Stratification::Pooled, m, stream)?,
            model,
        ),
        Method::MiNr => pooled_estimates(
            &mi_design_stage(observed, restriction, Stratification::ByArm, m, stream)?,
            model,
        ),
        Method::MiRy => pooled_estimates(
            &mi_outcome_stage(
                observed,
                restriction,
                Stratification::Pooled,
                model,
                &gibbs.with_m(m),
                stream,
            )?,
            model,
        ),
        Method::MiNry => pooled_estimates(
            &mi_outcome_stage(
                observed,
                restriction,
                Stratification::ByArmOutcome,
                model,
                &gibbs.with_m(m),
                stream,
            )?,
            model,
        ),
        Method::MeanR => single_estimates(&mean_impute(observed, Stratification::Pooled)?, model),
        Method::MeanNr => single_estimates(&mean_impute(observed, Stratification::ByArm)?, model),
        Method::MeanNry => {
            single_estimates(&mean_impute(observed, Stratification::ByArmOutcome)?, model)
        }
        Method::RegR => single_estimates(
            &regression_impute(observed, Stratification::Pooled, stream)?,
            model,
        ),
        Method::RegNr => single_estimates(
            &regression_impute(observed, Stratification::ByArm, stream)?,
            model,
        ),
        Method::RegNry => single_estimates(
            &regression_impute(observed, Stratification::ByArmOutcome, stream)?,
            model,
        ),
        Method::Cca => {
            let cc = complete_cases(observed)?;
            single_estimates(&CompletedDataset::from_fully_observed(&cc)?, model)
        }
        Method::BeforeDeletion => {
            let full = pre_deletion.ok_or_else(|| {
                Error::InvalidConfig("before-deletion benchmark needs generated data".into())
            })?;
            single_estimates(&CompletedDataset::from_fully_observed(full)?, model)
        }
    }
}

/// Stable stream tag per method; independent of the requested subset.
fn method_tag(method: Method) -> u64 {
    1 + Method::ALL.iter().position(|m| *m == method).unwrap() as u64
}

const GENERATION_TAG: u64 = 0;

type MethodOutcome = std::result::Result<MethodEstimates, String>;

fn run_one_replication(cfg: &SimConfig, replication: u64) -> Result<Vec<MethodOutcome>> {
    let rep_stream = derive_stream(cfg.master_seed, replication);
    let mut gen_stream = rep_stream.substream(GENERATION_TAG);
    let (observed, full) = generate_dataset(&cfg.scenario_config, &mut gen_stream)?;
    let mut outcomes = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut method_stream = rep_stream.substream(method_tag(method));
        let res = run_method(
            method,
            &observed,
            Some(&full),
            cfg.restriction,
            AnalysisModel::WithInteraction,
            cfg.imputations,
            &cfg.gibbs,
            &mut method_stream,
        )
        .map_err(|e| e.to_string());
        outcomes.push(res);
    }
    Ok(outcomes)
}

/// One metrics row of the final report (method crossed with coefficient).
/// The statistics are absent when fewer than two replications succeeded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub coefficient: String,
    pub abs_bias: Option<f64>,
    pub mc_sd: Option<f64>,
    pub se: Option<f64>,
    pub coverage: Option<f64>,
    pub avg_ci_length: Option<f64>,
    pub n_used: usize,
    pub n_failed: usize,
}

/// Signed summary of the before-deletion benchmark (the metrics rows carry
/// only absolute bias).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BeforeDeletionSummary {
    pub mean_beta_t: f64,
    pub mc_sd_beta_t: f64,
    pub coverage_beta_t: f64,
    pub mean_beta_tx2: f64,
    pub mc_sd_beta_tx2: f64,
    pub coverage_beta_tx2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MethodFailures {
    pub method: String,
    pub count: usize,
    pub first_error: Option<String>,
}

/// The full output of a simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SimConfig,
    pub truth_beta_t: f64,
    pub truth_beta_tx2: f64,
    pub rows: Vec<MetricsRow>,
    pub before_deletion: Option<BeforeDeletionSummary>,
    pub failures: Vec<MethodFailures>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn row(&self, method: Method, coefficient: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.coefficient == coefficient)
    }
}

/// Run the full simulation study described by `cfg`.
///
/// Replications are distributed round-robin over `workers` threads; results
/// are merged by replication index, so the report does not depend on the
/// worker count.
pub fn run_simulation(cfg: &SimConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let r_total = cfg.replications;
    let workers = cfg.workers.min(r_total).max(1);

    let mut per_rep: Vec<Option<Vec<MethodOutcome>>> = vec![None; r_total];
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let cfg_ref = &*cfg;
            handles.push(scope.spawn(move || -> Result<Vec<(usize, Vec<MethodOutcome>)>> {
                let mut out = Vec::new();
                let mut r = w + 1;
                while r <= r_total {
                    out.push((r, run_one_replication(cfg_ref, r as u64)?));
                    r += workers;
                }
                Ok(out)
            }));
        }
        for h in handles {
            let chunk = h.join().expect("worker panicked")?;
            for (r, outcomes) in chunk {
                per_rep[r - 1] = Some(outcomes);
            }
        }
        Ok(())
    })?;

    let truth = cfg.scenario_config.truth();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut before_deletion = None;

    for (mi, &method) in cfg.methods.iter().enumerate() {
        let outcomes: Vec<&MethodOutcome> = per_rep
            .iter()
            .map(|rep| &rep.as_ref().expect("all replications filled")[mi])
            .collect();
        let successes: Vec<&MethodEstimates> =
            outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let n_failed = outcomes.len() - successes.len();
        let first_error = outcomes
            .iter()
            .filter_map(|o| o.as_ref().err())
            .next()
            .cloned();
        failures.push(MethodFailures {
            method: method.name().to_string(),
            count: n_failed,
            first_error,
        });

        let t_records: Vec<ReplicationRecord> =
            successes.iter().map(|e| e.beta_t.record()).collect();
        rows.push(make_row(method, "beta_t", &t_records, truth.bt, n_failed));
        let tx2_records: Vec<ReplicationRecord> = successes
            .iter()
            .filter_map(|e| e.beta_tx2.map(|c| c.record()))
            .collect();
        rows.push(make_row(method, "beta_tx2", &tx2_records, truth.btx2, n_failed));

        if method == Method::BeforeDeletion && t_records.len() >= 2 {
            let stats_t = aggregate_metrics(&t_records, truth.bt)?;
            let stats_tx2 = aggregate_metrics(&tx2_records, truth.btx2)?;
            let mean = |rs: &[ReplicationRecord]| {
                rs.iter().map(|r| r.estimate).sum::<f64>() / rs.len() as f64
            };
            before_deletion = Some(BeforeDeletionSummary {
                mean_beta_t: mean(&t_records),
                mc_sd_beta_t: stats_t.mc_sd,
                coverage_beta_t: stats_t.coverage,
                mean_beta_tx2: mean(&tx2_records),
                mc_sd_beta_tx2: stats_tx2.mc_sd,
                coverage_beta_tx2: stats_tx2.coverage,
            });
        }
    }

    Ok(RunReport {
        config: cfg.clone(),
        truth_beta_t: truth.bt,
        truth_beta_tx2: truth.btx2,
        rows,
        before_deletion,
        failures,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn make_row(
    method: Method,
    coefficient: &str,
    records: &[ReplicationRecord],
    truth: f64,
    n_failed: usize,
) -> MetricsRow {
    let stats = aggregate_metrics(records, truth).ok();
    MetricsRow {
        method: method.name().to_string(),
        coefficient: coefficient.to_string(),
        abs_bias: stats.map(|s| s.absolute_bias),
        mc_sd: stats.map(|s| s.mc_sd),
        se: stats.map(|s| s.se),
        coverage: stats.map(|s| s.coverage),
        avg_ci_length: stats.map(|s| s.avg_ci_length),
        n_used: records.len(),
        n_failed,
    }
}

/// Options for analyzing a single ingested dataset.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub method: Method,
    pub restriction: Restriction,
    pub imputations: usize,
    pub seed: u64,
    pub gibbs: GibbsTuning,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            method: Method::Cca,
            restriction: Restriction::Icin,
            imputations: 100,
            seed: 1,
            gibbs: GibbsTuning::default(),
        }
    }
}

/// Result of a single-dataset analysis under the constant-effect model.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub method: String,
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

/// Estimate the treatment effect on one dataset with one method, under the
/// constant-effect (no interaction) analysis model.
pub fn analyze_dataset(dataset: &Dataset, opts: &AnalyzeOptions) -> Result<AnalyzeReport> {
    if opts.method == Method::BeforeDeletion {
        return Err(Error::InvalidConfig(
            "before-deletion benchmark needs generated data".into(),
        ));
    }
    if opts.method.is_multiple_imputation() && opts.imputations < 2 {
        return Err(Error::InvalidConfig("imputations must be >= 2".into()));
    }
    let rep_stream = derive_stream(opts.seed, 0);
    let mut stream = rep_stream.substream(method_tag(opts.method));
    let est = run_method(
        opts.method,
        dataset,
        None,
        opts.restriction,
        AnalysisModel::IttNoInteraction,
        opts.imputations,
        &opts.gibbs,
        &mut stream,
    )?;
    Ok(AnalyzeReport {
        method: opts.method.name().to_string(),
        n: dataset.n(),
        estimate: est.beta_t.estimate,
        se: est.beta_t.variance.sqrt(),
        ci: est.beta_t.ci,
    })
}

/// Produce the completed datasets a method would hand to the analyst (the
/// `impute` CLI command). Multiple-imputation methods produce `m` copies;
/// the single-imputation baselines produce one.
pub fn impute_datasets(
    dataset: &Dataset,
    method: Method,
    restriction: Restriction,
    m: usize,
    gibbs: &GibbsTuning,
    seed: u64,
) -> Result<Vec<CompletedDataset>> {
    let rep_stream = derive_stream(seed, 0);
    let mut stream = rep_stream.substream(method_tag(method));
    match method {
        Method::MiR => mi_design_stage(dataset, restriction, Stratification::Pooled, m, &mut stream),
        Method::MiNr => mi_design_stage(dataset, restriction, Stratification::ByArm, m, &mut stream),
        Method::MiRy => mi_outcome_stage(
            dataset,
            restriction,
            Stratification::Pooled,
            AnalysisModel::WithInteraction,
            &gibbs.with_m(m),
            &mut stream,
        ),
        Method::MiNry => mi_outcome_stage(
            dataset,
            restriction,
            Stratification::ByArmOutcome,
            AnalysisModel::WithInteraction,
            &gibbs.with_m(m),
            &mut stream,
        ),
        Method::MeanR => Ok(vec![mean_impute(dataset, Stratification::Pooled)?]),
        Method::MeanNr => Ok(vec![mean_impute(dataset, Stratification::ByArm)?]),
        Method::MeanNry => Ok(vec![mean_impute(dataset, Stratification::ByArmOutcome)?]),
        Method::RegR => Ok(vec![regression_impute(
            dataset,
            Stratification::Pooled,
            &mut stream,
        )?]),
        Method::RegNr => Ok(vec![regression_impute(
            dataset,
            Stratification::ByArm,
            &mut stream,
        )?]),
        Method::RegNry => Ok(vec![regression_impute(
            dataset,
            Stratification::ByArmOutcome,
            &mut stream,
        )?]),
        Method::Cca | Method::BeforeDeletion => Err(Error::InvalidConfig(format!(
            "{} does not produce completed datasets",
            method.name()
        ))),
    }
}
