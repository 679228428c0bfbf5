//! Non-parametric identification of the full-data distribution.
//!
//! The observed data determine nine cell probabilities (four complete-case
//! cells, two per single-missing pattern, one for both-missing). An
//! identifying restriction extends them to a unique 16-cell distribution over
//! (X1, X2, D1, D2):
//!
//! - **ICIN** (itemwise conditionally independent non-response): each
//!   covariate is independent of its own missingness indicator given the
//!   other covariate and the other indicator. The joint is a product of
//!   log-factors attached to missingness patterns; single-missing cells scale
//!   the complete-case table by observed-to-complete margin ratios, and the
//!   both-missing cells need a normalizer so they sum to the observed
//!   both-missing mass.
//! - **MAR** (missing at random): the conditional law of the missing part
//!   given the observed part is the same in every pattern, so each pattern's
//!   cells are the complete-case conditionals times the pattern's observed
//!   mass.
//!
//! Imputation draws missing values from the extrapolation distribution: the
//! identified joint conditioned on the observed part and the pattern.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{MissingnessPattern, ObservedProbs};

/// The identifying restriction used to extend observed cells to a full joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    Icin,
    Mar,
}

impl std::fmt::Display for Restriction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Restriction::Icin => write!(f, "ICIN"),
            Restriction::Mar => write!(f, "MAR"),
        }
    }
}

/// The identified 16-cell distribution over (x1, x2, d1, d2).
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedJoint {
    cells: [f64; 16],
    normalizer: f64,
    restriction: Restriction,
    source: ObservedProbs,
}

fn cell_index(x1: u8, x2: u8, d1: u8, d2: u8) -> usize {
    ((x1 as usize) << 3) | ((x2 as usize) << 2) | ((d1 as usize) << 1) | (d2 as usize)
}

impl IdentifiedJoint {
    /// Probability of the cell (x1, x2, d1, d2).
    pub fn cell(&self, x1: u8, x2: u8, d1: u8, d2: u8) -> f64 {
        self.cells[cell_index(x1, x2, d1, d2)]
    }

    /// The both-missing normalizer (1 under MAR).
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn source(&self) -> &ObservedProbs {
        &self.source
    }

    /// Recompute the nine observed cells implied by the joint.
    pub fn implied_observed(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for x1 in 0..2u8 {
            for x2 in 0..2u8 {
                out[ObservedProbs::complete_index(x1, x2)] = self.cell(x1, x2, 0, 0);
                out[ObservedProbs::x1_only_index(x1)] += self.cell(x1, x2, 0, 1);
                out[ObservedProbs::x2_only_index(x2)] += self.cell(x1, x2, 1, 0);
                out[ObservedProbs::BOTH_MISSING_INDEX] += self.cell(x1, x2, 1, 1);
            }
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn with_cells(mut self, cells: [f64; 16]) -> Self {
        self.cells = cells;
        self
    }
}

/// Complete-case margins of the observed table; identification requires them
/// to be positive wherever they divide.
struct Margins {
    // f(x1, both observed), f(x2, both observed)
    x1_complete: [f64; 2],
    x2_complete: [f64; 2],
    complete_mass: f64,
}

fn margins(theta: &ObservedProbs) -> Margins {
    let x1_complete = [
        theta.complete(0, 0) + theta.complete(0, 1),
        theta.complete(1, 0) + theta.complete(1, 1),
    ];
    let x2_complete = [
        theta.complete(0, 0) + theta.complete(1, 0),
        theta.complete(0, 1) + theta.complete(1, 1),
    ];
    Margins {
        x1_complete,
        x2_complete,
        complete_mass: x1_complete[0] + x1_complete[1],
    }
}

/// Build the identified 16-cell joint from observed-cell probabilities.
pub fn build_identified_joint(
    theta: &ObservedProbs,
    restriction: Restriction,
) -> Result<IdentifiedJoint> {
    let m = margins(theta);
    let mut cells = [0.0; 16];
    for x1 in 0..2u8 {
        for x2 in 0..2u8 {
            cells[cell_index(x1, x2, 0, 0)] = theta.complete(x1, x2);
        }
    }

    let normalizer = match restriction {
        Restriction::Icin => build_icin(theta, &m, &mut cells)?,
        Restriction::Mar => {
            build_mar(theta, &m, &mut cells)?;
            1.0
        }
    };

    Ok(IdentifiedJoint {
        cells,
        normalizer,
        restriction,
        source: theta.clone(),
    })
}

fn require_positive(value: f64, margin: &str) -> Result<f64> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::DegenerateIdentification {
            margin: margin.to_string(),
        })
    }
}

fn build_icin(theta: &ObservedProbs, m: &Margins, cells: &mut [f64; 16]) -> Result<f64> {
    for x1 in 0..2usize {
        require_positive(m.x1_complete[x1], &format!("f(x1={x1}, complete)"))?;
    }
    for x2 in 0..2usize {
        require_positive(m.x2_complete[x2], &format!("f(x2={x2}, complete)"))?;
    }

    // Single-missing cells scale the complete-case table by the ratio of the
    // observed-margin mass in that pattern to the complete-case margin.
    for x1 in 0..2u8 {
        let ratio1 = theta.x1_only(x1) / m.x1_complete[x1 as usize];
        for x2 in 0..2u8 {
            cells[cell_index(x1, x2, 0, 1)] = theta.complete(x1, x2) * ratio1;
        }
    }
    for x2 in 0..2u8 {
        let ratio2 = theta.x2_only(x2) / m.x2_complete[x2 as usize];
        for x1 in 0..2u8 {
            cells[cell_index(x1, x2, 1, 0)] = theta.complete(x1, x2) * ratio2;
        }
    }

    // Both-missing cells multiply both ratios and renormalize to the observed
    // both-missing mass.
    let mut weights = [0.0; 4];
    let mut total = 0.0;
    for x1 in 0..2u8 {
        for x2 in 0..2u8 {
            let w = theta.complete(x1, x2) * theta.x1_only(x1) * theta.x2_only(x2)
                / (m.x1_complete[x1 as usize] * m.x2_complete[x2 as usize]);
            weights[(2 * x1 + x2) as usize] = w;
            total += w;
        }
    }
    let both = theta.both_missing();
    if both > 0.0 {
        require_positive(total, "both-missing normalizer")?;
        for x1 in 0..2u8 {
            for x2 in 0..2u8 {
                cells[cell_index(x1, x2, 1, 1)] =
                    weights[(2 * x1 + x2) as usize] * both / total;
            }
        }
    }
    Ok(total)
}

fn build_mar(theta: &ObservedProbs, m: &Margins, cells: &mut [f64; 16]) -> Result<()> {
    // Every pattern's missing part follows the complete-case conditional law
    // given the observed part; multiply by the pattern's observed mass.
    for x1 in 0..2u8 {
        let mass = theta.x1_only(x1);
        if mass > 0.0 {
            let margin = require_positive(
                m.x1_complete[x1 as usize],
                &format!("f(x1={x1}, complete)"),
            )?;
            for x2 in 0..2u8 {
                cells[cell_index(x1, x2, 0, 1)] = theta.complete(x1, x2) / margin * mass;
            }
        }
    }
    for x2 in 0..2u8 {
        let mass = theta.x2_only(x2);
        if mass > 0.0 {
            let margin = require_positive(
                m.x2_complete[x2 as usize],
                &format!("f(x2={x2}, complete)"),
            )?;
            for x1 in 0..2u8 {
                cells[cell_index(x1, x2, 1, 0)] = theta.complete(x1, x2) / margin * mass;
            }
        }
    }
    let both = theta.both_missing();
    if both > 0.0 {
        let margin = require_positive(m.complete_mass, "f(complete)")?;
        for x1 in 0..2u8 {
            for x2 in 0..2u8 {
                cells[cell_index(x1, x2, 1, 1)] = theta.complete(x1, x2) / margin * both;
            }
        }
    }
    Ok(())
}

/// The observed part of a unit under some missingness pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservedPart {
    /// X1 observed (pattern with X2 missing).
    X1(u8),
    /// X2 observed (pattern with X1 missing).
    X2(u8),
    /// Nothing observed (both missing).
    Neither,
}

/// Extrapolation distribution: the law of the missing part given the
/// observed part and the pattern.
///
/// For single-missing patterns the table is `[P(missing = 0), P(missing = 1)]`;
/// for the both-missing pattern it is over (x1, x2) in the order
/// (0,0), (0,1), (1,0), (1,1).
pub fn extrapolation_dist(
    joint: &IdentifiedJoint,
    pattern: MissingnessPattern,
    observed: ObservedPart,
) -> Result<Vec<f64>> {
    let raw: Vec<f64> = match (pattern, observed) {
        (MissingnessPattern::Complete, _) => return Err(Error::NothingToExtrapolate),
        (MissingnessPattern::X2Missing, ObservedPart::X1(x1)) => {
            (0..2u8).map(|x2| joint.cell(x1, x2, 0, 1)).collect()
        }
        (MissingnessPattern::X1Missing, ObservedPart::X2(x2)) => {
            (0..2u8).map(|x1| joint.cell(x1, x2, 1, 0)).collect()
        }
        (MissingnessPattern::BothMissing, ObservedPart::Neither) => (0..4u8)
            .map(|i| joint.cell(i >> 1, i & 1, 1, 1))
            .collect(),
        (p, o) => {
            return Err(Error::InvalidConfig(format!(
                "observed part {o:?} does not match pattern {p:?}"
            )))
        }
    };
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::UndefinedExtrapolation {
            event: format!("pattern {pattern:?}, observed {observed:?}"),
        });
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// All extrapolation distributions of one pattern, keyed by the observed part.
#[derive(Debug, Clone)]
pub struct ExtrapolationTable {
    pub pattern: MissingnessPattern,
    /// (observed part, table); tables are `None` when the conditioning event
    /// has zero probability.
    pub entries: Vec<(ObservedPart, Option<Vec<f64>>)>,
}

pub fn extrapolation_table(
    joint: &IdentifiedJoint,
    pattern: MissingnessPattern,
) -> Result<ExtrapolationTable> {
    let observed_parts: Vec<ObservedPart> = match pattern {
        MissingnessPattern::Complete => return Err(Error::NothingToExtrapolate),
        MissingnessPattern::X2Missing => vec![ObservedPart::X1(0), ObservedPart::X1(1)],
        MissingnessPattern::X1Missing => vec![ObservedPart::X2(0), ObservedPart::X2(1)],
        MissingnessPattern::BothMissing => vec![ObservedPart::Neither],
    };
    let mut entries = Vec::with_capacity(observed_parts.len());
    for part in observed_parts {
        let table = match extrapolation_dist(joint, pattern, part) {
            Ok(t) => Some(t),
            Err(Error::UndefinedExtrapolation { .. }) => None,
            Err(e) => return Err(e),
        };
        entries.push((part, table));
    }
    Ok(ExtrapolationTable { pattern, entries })
}

/// Result of checking an identified joint against its construction contract.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub restriction: Restriction,
    /// Largest absolute gap between the joint's implied observed cells and
    /// the source table.
    pub max_marginalization_error: f64,
    /// Largest violation of the restriction itself. Under ICIN this is the
    /// largest |odds ratio - 1| between a covariate and its own indicator
    /// given the other pair; under MAR the largest gap between a pattern's
    /// extrapolation law and the complete-case conditional.
    pub max_restriction_error: f64,
    /// Conditioning events inspected for the restriction check.
    pub cells_checked: usize,
    /// Conditioning events skipped because they carry zero probability.
    pub undefined_cells: usize,
}

impl DiagnosticsReport {
    /// Render as the key-value block printed by `check-identify`.
    pub fn to_text(&self) -> String {
        format!(
            "restriction = {}\nmax_marginalization_error = {:.3e}\nmax_restriction_error = {:.3e}\ncells_checked = {}\nundefined_cells = {}\n",
            self.restriction,
            self.max_marginalization_error,
            self.max_restriction_error,
            self.cells_checked,
            self.undefined_cells
        )
    }
}

/// Verify the marginalization and restriction properties of a joint.
pub fn check_identification(joint: &IdentifiedJoint) -> DiagnosticsReport {
    let implied = joint.implied_observed();
    let source = joint.source().as_slice();
    let max_marginalization_error = implied
        .iter()
        .zip(source.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut max_restriction_error: f64 = 0.0;
    let mut cells_checked = 0;
    let mut undefined_cells = 0;

    match joint.restriction() {
        Restriction::Icin => {
            // X1 vs D1 given (x2, d2), then X2 vs D2 given (x1, d1).
            for other in 0..2u8 {
                for other_d in 0..2u8 {
                    let q = [
                        joint.cell(0, other, 0, other_d),
                        joint.cell(1, other, 0, other_d),
                        joint.cell(0, other, 1, other_d),
                        joint.cell(1, other, 1, other_d),
                    ];
                    tally_odds_ratio(&q, &mut max_restriction_error, &mut cells_checked, &mut undefined_cells);

                    let q = [
                        joint.cell(other, 0, other_d, 0),
                        joint.cell(other, 1, other_d, 0),
                        joint.cell(other, 0, other_d, 1),
                        joint.cell(other, 1, other_d, 1),
                    ];
                    tally_odds_ratio(&q, &mut max_restriction_error, &mut cells_checked, &mut undefined_cells);
                }
            }
        }
        Restriction::Mar => {
            // Each pattern's extrapolation law must match the complete-case
            // conditional of the same missing part.
            let m = margins(joint.source());
            for x1 in 0..2u8 {
                let mass: f64 = (0..2u8).map(|x2| joint.cell(x1, x2, 0, 1)).sum();
                if mass <= 0.0 || m.x1_complete[x1 as usize] <= 0.0 {
                    undefined_cells += 1;
                    continue;
                }
                cells_checked += 1;
                for x2 in 0..2u8 {
                    let extr = joint.cell(x1, x2, 0, 1) / mass;
                    let cc = joint.source().complete(x1, x2) / m.x1_complete[x1 as usize];
                    max_restriction_error = max_restriction_error.max((extr - cc).abs());
                }
            }
            for x2 in 0..2u8 {
                let mass: f64 = (0..2u8).map(|x1| joint.cell(x1, x2, 1, 0)).sum();
                if mass <= 0.0 || m.x2_complete[x2 as usize] <= 0.0 {
                    undefined_cells += 1;
                    continue;
                }
                cells_checked += 1;
                for x1 in 0..2u8 {
                    let extr = joint.cell(x1, x2, 1, 0) / mass;
                    let cc = joint.source().complete(x1, x2) / m.x2_complete[x2 as usize];
                    max_restriction_error = max_restriction_error.max((extr - cc).abs());
                }
            }
            let both: f64 = (0..4u8)
                .map(|i| joint.cell(i >> 1, i & 1, 1, 1))
                .sum();
            if both <= 0.0 || m.complete_mass <= 0.0 {
                undefined_cells += 1;
            } else {
                cells_checked += 1;
                for x1 in 0..2u8 {
                    for x2 in 0..2u8 {
                        let extr = joint.cell(x1, x2, 1, 1) / both;
                        let cc = joint.source().complete(x1, x2) / m.complete_mass;
                        max_restriction_error = max_restriction_error.max((extr - cc).abs());
                    }
                }
            }
        }
    }

    DiagnosticsReport {
        restriction: joint.restriction(),
        max_marginalization_error,
        max_restriction_error,
        cells_checked,
        undefined_cells,
    }
}

/// q = [p(a=0,b=0), p(a=1,b=0), p(a=0,b=1), p(a=1,b=1)] for an odds-ratio
/// check; zero cells make the ratio undefined.
fn tally_odds_ratio(q: &[f64; 4], max_err: &mut f64, checked: &mut usize, undefined: &mut usize) {
    if q.iter().any(|&v| v <= 0.0) {
        *undefined += 1;
        return;
    }
    *checked += 1;
    let or = (q[3] * q[0]) / (q[1] * q[2]);
    *max_err = max_err.max((or - 1.0).abs());
}
