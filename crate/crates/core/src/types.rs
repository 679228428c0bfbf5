//! Domain value types shared by every other module.
//!
//! The unit of analysis is a subject in a two-arm randomized experiment with a
//! binary outcome and two binary baseline covariates, either of which may be
//! missing. Missingness indicators are never stored: they are recomputed from
//! absence, so the indicator/absence invariant holds by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// One experimental unit. Treatment and outcome are always observed; the two
/// covariates may be absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub t: u8,
    pub y: u8,
    pub x1: Option<u8>,
    pub x2: Option<u8>,
}

impl Unit {
    pub fn new(t: u8, y: u8, x1: Option<u8>, x2: Option<u8>) -> Self {
        Unit { t, y, x1, x2 }
    }

    /// Missingness indicator for the first covariate: 1 exactly when absent.
    pub fn d1(&self) -> u8 {
        self.x1.is_none() as u8
    }

    /// Missingness indicator for the second covariate: 1 exactly when absent.
    pub fn d2(&self) -> u8 {
        self.x2.is_none() as u8
    }

    pub fn pattern(&self) -> MissingnessPattern {
        MissingnessPattern::from_indicators(self.d1(), self.d2())
    }

    pub fn is_complete(&self) -> bool {
        self.x1.is_some() && self.x2.is_some()
    }
}

/// A validated collection of units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    units: Vec<Unit>,
}

impl Dataset {
    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }
}

fn check_binary(value: u8, what: &str, row: usize) -> Result<()> {
    if value > 1 {
        return Err(Error::InvalidUnit {
            row,
            reason: format!("{what} not binary (got {value})"),
        });
    }
    Ok(())
}

/// Validate a raw sequence of units into a [`Dataset`].
///
/// Treatment, outcome, and any present covariate value must be 0 or 1, and the
/// sequence must be nonempty. Missingness indicators are implied by absence,
/// so there is nothing to recompute beyond these checks.
pub fn validate_dataset(raw: Vec<Unit>) -> Result<Dataset> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (row, unit) in raw.iter().enumerate() {
        check_binary(unit.t, "treatment", row)?;
        check_binary(unit.y, "outcome", row)?;
        if let Some(v) = unit.x1 {
            check_binary(v, "covariate x1", row)?;
        }
        if let Some(v) = unit.x2 {
            check_binary(v, "covariate x2", row)?;
        }
    }
    Ok(Dataset { units: raw })
}

/// One of the four missingness patterns over the two covariates.
///
/// The indicator pair is (d1, d2) with d = 1 meaning missing, so `X2Missing`
/// is the pattern (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MissingnessPattern {
    Complete,
    X2Missing,
    X1Missing,
    BothMissing,
}

impl MissingnessPattern {
    pub const ALL: [MissingnessPattern; 4] = [
        MissingnessPattern::Complete,
        MissingnessPattern::X2Missing,
        MissingnessPattern::X1Missing,
        MissingnessPattern::BothMissing,
    ];

    pub fn from_indicators(d1: u8, d2: u8) -> Self {
        match (d1, d2) {
            (0, 0) => MissingnessPattern::Complete,
            (0, _) => MissingnessPattern::X2Missing,
            (_, 0) => MissingnessPattern::X1Missing,
            _ => MissingnessPattern::BothMissing,
        }
    }

    pub fn indicators(self) -> (u8, u8) {
        match self {
            MissingnessPattern::Complete => (0, 0),
            MissingnessPattern::X2Missing => (0, 1),
            MissingnessPattern::X1Missing => (1, 0),
            MissingnessPattern::BothMissing => (1, 1),
        }
    }

    pub fn has_missing(self) -> bool {
        self != MissingnessPattern::Complete
    }
}

/// The nine observed-data cell probabilities for the (X1, X2, D1, D2) table.
///
/// The observation space partitions into nine cells: four complete-case cells
/// over (x1, x2), two cells for "x1 observed, x2 missing" (indexed by x1 = 1
/// then x1 = 0), two cells for "x2 observed, x1 missing" (x2 = 1 then x2 = 0),
/// and one cell for "both missing". This ordering is the wire format used by
/// `check-identify` input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedProbs {
    p: [f64; 9],
}

impl ObservedProbs {
    pub fn new(p: [f64; 9]) -> Result<Self> {
        let mut sum = 0.0;
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidProbabilities(format!(
                    "cell {i} is {v}, must be a nonnegative finite real"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbabilities(format!(
                "cells sum to {sum}, expected 1"
            )));
        }
        Ok(ObservedProbs { p })
    }

    /// Normalize nonnegative cell counts or weights into probabilities.
    pub fn from_weights(w: [f64; 9]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::InvalidProbabilities(format!(
                "weights sum to {sum}, expected a positive finite total"
            )));
        }
        ObservedProbs::new(w.map(|v| v / sum))
    }

    pub fn as_slice(&self) -> &[f64; 9] {
        &self.p
    }

    /// Index of the complete-case cell for covariate values (x1, x2).
    pub fn complete_index(x1: u8, x2: u8) -> usize {
        (2 * x1 + x2) as usize
    }

    /// Index of the "x1 observed, x2 missing" cell.
    pub fn x1_only_index(x1: u8) -> usize {
        if x1 == 1 {
            4
        } else {
            5
        }
    }

    /// Index of the "x2 observed, x1 missing" cell.
    pub fn x2_only_index(x2: u8) -> usize {
        if x2 == 1 {
            6
        } else {
            7
        }
    }

    pub const BOTH_MISSING_INDEX: usize = 8;

    /// P(X1 = x1, X2 = x2, both observed).
    pub fn complete(&self, x1: u8, x2: u8) -> f64 {
        self.p[Self::complete_index(x1, x2)]
    }

    /// P(X1 = x1, x2 missing).
    pub fn x1_only(&self, x1: u8) -> f64 {
        self.p[Self::x1_only_index(x1)]
    }

    /// P(X2 = x2, x1 missing).
    pub fn x2_only(&self, x2: u8) -> f64 {
        self.p[Self::x2_only_index(x2)]
    }

    /// P(both missing).
    pub fn both_missing(&self) -> f64 {
        self.p[Self::BOTH_MISSING_INDEX]
    }

    /// Observed-cell index for a unit, following the ordering above.
    pub fn cell_of(unit: &Unit) -> usize {
        match (unit.x1, unit.x2) {
            (Some(a), Some(b)) => Self::complete_index(a, b),
            (Some(a), None) => Self::x1_only_index(a),
            (None, Some(b)) => Self::x2_only_index(b),
            (None, None) => Self::BOTH_MISSING_INDEX,
        }
    }
}

/// How imputation-model estimation is partitioned across the sample.
///
/// `Pooled` collapses over the treatment arm (it leans on randomization making
/// the covariate and missingness distributions equal across arms), `ByArm`
/// estimates separately in each arm, and `ByArmOutcome` within each cell of
/// the (treatment, outcome) cross-classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratification {
    Pooled,
    ByArm,
    ByArmOutcome,
}

impl Stratification {
    pub fn stratum_count(self) -> usize {
        match self {
            Stratification::Pooled => 1,
            Stratification::ByArm => 2,
            Stratification::ByArmOutcome => 4,
        }
    }

    /// Index of the stratum a unit belongs to. Strata are ordered by t, then y.
    pub fn stratum_of(self, unit: &Unit) -> usize {
        match self {
            Stratification::Pooled => 0,
            Stratification::ByArm => unit.t as usize,
            Stratification::ByArmOutcome => (2 * unit.t + unit.y) as usize,
        }
    }

    /// Human-readable label for error messages and reports.
    pub fn stratum_label(self, index: usize) -> String {
        match self {
            Stratification::Pooled => "pooled".to_string(),
            Stratification::ByArm => format!("t={index}"),
            Stratification::ByArmOutcome => format!("t={},y={}", index / 2, index % 2),
        }
    }
}

/// Observed-cell probabilities per stratum, with stratum weights.
#[derive(Debug, Clone)]
pub struct StratifiedProbs {
    stratification: Stratification,
    tables: Vec<(ObservedProbs, f64)>,
}

impl StratifiedProbs {
    pub fn new(stratification: Stratification, tables: Vec<(ObservedProbs, f64)>) -> Result<Self> {
        if tables.len() != stratification.stratum_count() {
            return Err(Error::InvalidProbabilities(format!(
                "expected {} strata, got {}",
                stratification.stratum_count(),
                tables.len()
            )));
        }
        let wsum: f64 = tables.iter().map(|(_, w)| w).sum();
        if tables.iter().any(|(_, w)| *w < 0.0) || (wsum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbabilities(format!(
                "stratum weights must be nonnegative and sum to 1 (sum {wsum})"
            )));
        }
        Ok(StratifiedProbs {
            stratification,
            tables,
        })
    }

    pub fn stratification(&self) -> Stratification {
        self.stratification
    }

    pub fn table(&self, stratum: usize) -> &ObservedProbs {
        &self.tables[stratum].0
    }

    pub fn weight(&self, stratum: usize) -> f64 {
        self.tables[stratum].1
    }
}

/// Coefficients of the logistic outcome model on the log-odds scale.
///
/// `bd1`/`bd2` carry the missingness-indicator adjustments used only when
/// generating outcomes in the scenario where indicators predict the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub bt: f64,
    pub btx2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bd1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bd2: Option<f64>,
}

impl OutcomeCoefficients {
    pub fn new(b0: f64, b1: f64, b2: f64, bt: f64, btx2: f64) -> Self {
        OutcomeCoefficients {
            b0,
            b1,
            b2,
            bt,
            btx2,
            bd1: None,
            bd2: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.b0,
            self.b1,
            self.b2,
            self.bt,
            self.btx2,
            self.bd1.unwrap_or(0.0),
            self.bd2.unwrap_or(0.0),
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome coefficients".into()));
        }
        Ok(())
    }
}

/// A unit with both covariates filled in. Covariate values are reals so that
/// mean imputation can store a stratum mean; draw-based methods always store
/// exact 0.0 or 1.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletedUnit {
    pub t: u8,
    pub y: u8,
    pub x1: f64,
    pub x2: f64,
}

/// One completed copy of a dataset, with provenance flags marking which
/// entries were imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDataset {
    units: Vec<CompletedUnit>,
    imputed_x1: Vec<bool>,
    imputed_x2: Vec<bool>,
}

impl CompletedDataset {
    pub(crate) fn from_parts(
        units: Vec<CompletedUnit>,
        imputed_x1: Vec<bool>,
        imputed_x2: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(units.len(), imputed_x1.len());
        debug_assert_eq!(units.len(), imputed_x2.len());
        CompletedDataset {
            units,
            imputed_x1,
            imputed_x2,
        }
    }

    /// View a fully observed dataset as a completed one (nothing imputed).
    pub fn from_fully_observed(dataset: &Dataset) -> Result<Self> {
        let mut units = Vec::with_capacity(dataset.n());
        for (row, u) in dataset.units().iter().enumerate() {
            match (u.x1, u.x2) {
                (Some(a), Some(b)) => units.push(CompletedUnit {
                    t: u.t,
                    y: u.y,
                    x1: a as f64,
                    x2: b as f64,
                }),
                _ => {
                    return Err(Error::InvalidUnit {
                        row,
                        reason: "dataset has missing covariates".into(),
                    })
                }
            }
        }
        let n = units.len();
        Ok(CompletedDataset {
            units,
            imputed_x1: vec![false; n],
            imputed_x2: vec![false; n],
        })
    }

    pub fn units(&self) -> &[CompletedUnit] {
        &self.units
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn x1_imputed(&self, i: usize) -> bool {
        self.imputed_x1[i]
    }

    pub fn x2_imputed(&self, i: usize) -> bool {
        self.imputed_x2[i]
    }
}
