//! Synthetic randomized-experiment generators for the simulation study.
//!
//! Three missingness scenarios are supported: indicators drawn independently
//! of treatment (scenario 1), indicator rates that differ by arm (scenario
//! 2), and indicators that additionally shift the outcome (scenario 3). Under
//! the MCAR mechanism the covariates are drawn first and values deleted at
//! random; under the loglinear mechanism the indicators are drawn first and
//! the covariate pair is drawn from pattern-specific tables whose loglinear
//! structure carries no covariate-with-own-indicator interaction, which is
//! exactly the conditional-independence restriction the identified imputation
//! model assumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_categorical, RngStream};
use crate::types::{validate_dataset, Dataset, OutcomeCoefficients, Unit};

/// Coefficients of the loglinear model for expected counts in the partial
/// (x1, x2) tables, one table per missingness pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoglinearSpec {
    pub intercept: f64,
    pub x1: f64,
    pub x2: f64,
    pub d1: f64,
    pub d2: f64,
    pub x1x2: f64,
    pub x1d2: f64,
    pub x2d1: f64,
    pub d1d2: f64,
}

impl Default for LoglinearSpec {
    fn default() -> Self {
        LoglinearSpec {
            intercept: 5.0,
            x1: 0.3,
            x2: -0.5,
            d1: 0.009,
            d2: 0.05,
            x1x2: 0.5,
            x1d2: 0.75,
            x2d1: 1.0,
            d1d2: 0.25,
        }
    }
}

impl LoglinearSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.intercept,
            self.x1,
            self.x2,
            self.d1,
            self.d2,
            self.x1x2,
            self.x1d2,
            self.x2d1,
            self.d1d2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loglinear coefficients".into()));
        }
        Ok(())
    }

    /// Expected count for the cell (x1, x2) in the partial table for the
    /// pattern (d1, d2).
    pub fn expected_count(&self, x1: u8, x2: u8, d1: u8, d2: u8) -> f64 {
        let (x1, x2, d1, d2) = (x1 as f64, x2 as f64, d1 as f64, d2 as f64);
        (self.intercept
            + self.x1 * x1
            + self.x2 * x2
            + self.d1 * d1
            + self.d2 * d2
            + self.x1x2 * x1 * x2
            + self.x1d2 * x1 * d2
            + self.x2d1 * x2 * d1
            + self.d1d2 * d1 * d2)
            .exp()
    }
}

/// Per-pattern covariate tables: `probs[pattern][cell]` with pattern index
/// 2*d1 + d2 and cell index 2*x1 + x2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternProbs {
    pub probs: [[f64; 4]; 4],
}

impl PatternProbs {
    pub fn pattern(&self, d1: u8, d2: u8) -> &[f64; 4] {
        &self.probs[(2 * d1 + d2) as usize]
    }
}

/// Normalize the loglinear expected counts into per-pattern probabilities.
pub fn loglinear_cell_probs(spec: &LoglinearSpec) -> Result<PatternProbs> {
    spec.validate()?;
    let mut probs = [[0.0; 4]; 4];
    for d1 in 0..2u8 {
        for d2 in 0..2u8 {
            let mut total = 0.0;
            let mut table = [0.0; 4];
            for x1 in 0..2u8 {
                for x2 in 0..2u8 {
                    let m = spec.expected_count(x1, x2, d1, d2);
                    if !m.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "loglinear expected count at ({x1},{x2},{d1},{d2})"
                        )));
                    }
                    table[(2 * x1 + x2) as usize] = m;
                    total += m;
                }
            }
            for cell in table.iter_mut() {
                *cell /= total;
            }
            probs[(2 * d1 + d2) as usize] = table;
        }
    }
    Ok(PatternProbs { probs })
}

/// Which mechanism produces the missingness indicators and covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    /// Covariates drawn marginally; values deleted completely at random.
    #[serde(rename = "mcar")]
    Mcar,
    /// Indicators drawn first; covariates drawn from the loglinear
    /// pattern-conditional tables.
    #[serde(rename = "icin-loglinear")]
    IcinLoglinear,
}

/// Strength of the covariate-outcome association in the generated outcome
/// model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Association {
    High,
    Low,
}

/// Marginal covariate law used by the MCAR mechanism:
/// P(X1 = 1) = 0.7, P(X2 = 1 | X1 = 1) = 0.6, P(X2 = 1 | X1 = 0) = 0.45.
pub const MCAR_P_X1: f64 = 0.7;
pub const MCAR_P_X2_GIVEN_X1_1: f64 = 0.6;
pub const MCAR_P_X2_GIVEN_X1_0: f64 = 0.45;

/// Per-arm missingness rates for the two covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessRates {
    /// (P(D1 = 1), P(D2 = 1)) in the treated arm.
    pub treated: (f64, f64),
    /// Rates in the control arm (equal to `treated` except in scenario 2).
    pub control: (f64, f64),
}

impl MissingnessRates {
    pub fn same(d1: f64, d2: f64) -> Self {
        MissingnessRates {
            treated: (d1, d2),
            control: (d1, d2),
        }
    }

    pub fn for_arm(&self, t: u8) -> (f64, f64) {
        if t == 1 {
            self.treated
        } else {
            self.control
        }
    }

    fn validate(&self) -> Result<()> {
        for p in [self.treated.0, self.treated.1, self.control.0, self.control.1] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "missingness rate {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Full specification of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: u8,
    pub mechanism: Mechanism,
    pub association: Association,
    pub n: usize,
    #[serde(default = "default_treatment_prob")]
    pub treatment_prob: f64,
    /// Outcome-model coefficients used for generation; defaults follow the
    /// association level when omitted.
    #[serde(default)]
    pub truth: Option<OutcomeCoefficients>,
    #[serde(default)]
    pub rates: Option<MissingnessRates>,
    #[serde(default)]
    pub loglinear: Option<LoglinearSpec>,
}

fn default_treatment_prob() -> f64 {
    0.5
}

impl ScenarioConfig {
    pub fn new(scenario: u8, mechanism: Mechanism, association: Association, n: usize) -> Self {
        ScenarioConfig {
            scenario,
            mechanism,
            association,
            n,
            treatment_prob: default_treatment_prob(),
            truth: None,
            rates: None,
            loglinear: None,
        }
    }

    /// Generation coefficients: no intercept; scenario 3 adds the indicator
    /// adjustments (-0.6, -0.4).
    pub fn truth(&self) -> OutcomeCoefficients {
        if let Some(t) = self.truth {
            return t;
        }
        let mut c = match self.association {
            Association::High => OutcomeCoefficients::new(0.0, 0.8, 0.9, 0.3, 0.5),
            Association::Low => OutcomeCoefficients::new(0.0, 0.02, 0.05, 0.3, 0.015),
        };
        if self.scenario == 3 {
            c.bd1 = Some(-0.6);
            c.bd2 = Some(-0.4);
        }
        c
    }

    pub fn rates(&self) -> MissingnessRates {
        if let Some(r) = self.rates {
            return r;
        }
        match self.scenario {
            2 => MissingnessRates {
                treated: (0.35, 0.40),
                control: (0.10, 0.10),
            },
            _ => MissingnessRates::same(0.35, 0.40),
        }
    }

    pub fn loglinear(&self) -> LoglinearSpec {
        self.loglinear.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.scenario) {
            return Err(Error::InvalidConfig(format!(
                "scenario must be 1, 2, or 3 (got {})",
                self.scenario
            )));
        }
        if self.n < 1 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.treatment_prob) {
            return Err(Error::InvalidConfig(format!(
                "treatment probability {} outside [0, 1]",
                self.treatment_prob
            )));
        }
        self.truth().validate()?;
        self.rates().validate()?;
        self.loglinear().validate()?;
        Ok(())
    }
}

/// Generate one experiment: the observed dataset and its pre-deletion
/// counterpart (same units with every covariate value retained).
pub fn generate_dataset(config: &ScenarioConfig, stream: &mut RngStream) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let truth = config.truth();
    let rates = config.rates();
    let pattern_probs = match config.mechanism {
        Mechanism::IcinLoglinear => Some(loglinear_cell_probs(&config.loglinear())?),
        Mechanism::Mcar => None,
    };

    let mut observed = Vec::with_capacity(config.n);
    let mut full = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let t = stream.bernoulli(config.treatment_prob);
        let (p_d1, p_d2) = rates.for_arm(t);
        let d1 = stream.bernoulli(p_d1);
        let d2 = stream.bernoulli(p_d2);

        let (x1, x2) = match &pattern_probs {
            None => {
                let x1 = stream.bernoulli(MCAR_P_X1);
                let p2 = if x1 == 1 {
                    MCAR_P_X2_GIVEN_X1_1
                } else {
                    MCAR_P_X2_GIVEN_X1_0
                };
                (x1, stream.bernoulli(p2))
            }
            Some(probs) => {
                let cell = sample_categorical(stream, probs.pattern(d1, d2))? as u8;
                (cell >> 1, cell & 1)
            }
        };

        let mut logit = truth.b1 * x1 as f64
            + truth.b2 * x2 as f64
            + truth.bt * t as f64
            + truth.btx2 * (t * x2) as f64;
        if let Some(bd1) = truth.bd1 {
            logit += bd1 * d1 as f64;
        }
        if let Some(bd2) = truth.bd2 {
            logit += bd2 * d2 as f64;
        }
        let y = stream.bernoulli(crate::infer::logistic(logit));

        full.push(Unit::new(t, y, Some(x1), Some(x2)));
        observed.push(Unit::new(
            t,
            y,
            (d1 == 0).then_some(x1),
            (d2 == 0).then_some(x2),
        ));
    }
    Ok((validate_dataset(observed)?, validate_dataset(full)?))
}
