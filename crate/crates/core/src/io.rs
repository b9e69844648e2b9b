//! Reading coefficient documents.
//!
//! A coefficient document is a JSON object describing a fitted (or
//! hand-entered) saturated model:
//!
//! ```json
//! {
//!   "factors": ["low_md", "high_bmi", "current_smoker"],
//!   "outcome": "death",
//!   "coefficients": {
//!     "low_md": 0.36,
//!     "high_bmi": 0.29,
//!     "current_smoker": 0.41,
//!     "low_md*high_bmi": -0.27,
//!     "low_md*current_smoker": -0.23,
//!     "high_bmi*current_smoker": -0.24,
//!     "low_md*high_bmi*current_smoker": 0.92
//!   },
//!   "covariance": [[0.0, ...], ...],
//!   "orientations": {"low_md": "risk"},
//!   "assume_missing_zero": false
//! }
//! ```
//!
//! Coefficient keys name a subset of factors joined by `*`; the order of
//! names within a key does not matter (`"a*b"` and `"b*a"` are the same
//! subset, and listing both is a duplicate). Only `factors` and
//! `coefficients` are required. The optional `covariance` matrix is indexed
//! by the canonical coefficient order (singletons first, then pairs, ...,
//! each level by factor position — the order [`CoefficientTable::label`]
//! enumerates) and is only accepted when every coefficient was written out
//! explicitly: silently treating an omitted coefficient as a zero with zero
//! variance would understate every interval that touches it.
//!
//! `assume_missing_zero: true` opts into filling absent subsets with 0.0
//! (each fill is reported as a warning); without it a missing subset is an
//! error, because an accidentally dropped product term changes every index.

use indexmap::IndexMap;
use serde::Deserialize;

use crate::coefficients::{CoefficientTable, CovarianceBlock};
use crate::error::{Error, Result};
use crate::factors::{FactorSet, Orientation};

/// A parsed coefficient document.
#[derive(Debug, Clone)]
pub struct ParsedCoefficients {
    pub table: CoefficientTable,
    pub covariance: Option<CovarianceBlock>,
    /// Outcome name carried through to reports, if the document names one.
    pub outcome: Option<String>,
    /// Non-fatal notes (e.g. subsets filled with zero).
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    factors: Vec<String>,
    #[serde(default)]
    outcome: Option<String>,
    coefficients: IndexMap<String, f64>,
    #[serde(default)]
    covariance: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    orientations: Option<IndexMap<String, String>>,
    #[serde(default)]
    assume_missing_zero: bool,
}

/// Parses a subset key such as `"a*c"` against a factor set, returning the
/// subset as a bitmask. Name order inside the key is irrelevant.
pub fn parse_subset_label(factors: &FactorSet, label: &str) -> Result<u32> {
    let mut mask = 0u32;
    for part in label.split('*') {
        let name = part.trim();
        if name.is_empty() {
            return Err(Error::CoefficientLabel {
                label: label.to_string(),
                reason: "empty factor name between '*' separators".into(),
            });
        }
        let i = factors
            .index_of(name)
            .ok_or_else(|| Error::UnknownFactor(name.to_string()))?;
        if mask & (1 << i) != 0 {
            return Err(Error::CoefficientLabel {
                label: label.to_string(),
                reason: format!("factor {name:?} appears more than once"),
            });
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

fn parse_orientation(label: &str, value: &str) -> Result<Orientation> {
    match value {
        "risk" => Ok(Orientation::Risk),
        "protective" => Ok(Orientation::Protective),
        "unknown" => Ok(Orientation::Unknown),
        other => Err(Error::FactorLabel {
            label: label.to_string(),
            reason: format!(
                "orientation must be \"risk\", \"protective\" or \"unknown\", got {other:?}"
            ),
        }),
    }
}

/// Parses a coefficient document from JSON text.
pub fn parse_coefficient_document(text: &str) -> Result<ParsedCoefficients> {
    let raw: RawDocument = serde_json::from_str(text)?;

    let mut factors = FactorSet::new(raw.factors)?;
    if let Some(orientations) = &raw.orientations {
        for (name, value) in orientations {
            let i = factors
                .index_of(name)
                .ok_or_else(|| Error::UnknownFactor(name.clone()))?;
            factors.set_orientation(i, parse_orientation(name, value)?)?;
        }
    }
    let n = factors.len();

    let mut entries = Vec::with_capacity(raw.coefficients.len());
    for (label, value) in &raw.coefficients {
        entries.push((parse_subset_label(&factors, label)?, *value));
    }
    let mut table = CoefficientTable::new(factors, &entries)?;

    let mut warnings = Vec::new();
    if raw.assume_missing_zero {
        if raw.covariance.is_some() && !table.is_saturated() {
            return Err(Error::Covariance(
                "a covariance matrix requires every coefficient to be explicit; remove \
                 \"assume_missing_zero\" and list all subsets"
                    .into(),
            ));
        }
        for mask in table.fill_missing_with_zero() {
            warnings.push(format!(
                "coefficient {:?} was not given and is assumed to be 0",
                table.label(mask)
            ));
        }
    } else {
        table.require_saturated()?;
    }

    let covariance = match raw.covariance {
        None => None,
        Some(rows) => {
            let block = CovarianceBlock::new(rows)?;
            let expected = (1usize << n) - 1;
            if block.dim() != expected {
                return Err(Error::Covariance(format!(
                    "covariance is {0}x{0} but a saturated model over {n} factors has {expected} \
                     coefficients (canonical order: singletons, pairs, ...)",
                    block.dim()
                )));
            }
            Some(block)
        }
    };

    Ok(ParsedCoefficients {
        table,
        covariance,
        outcome: raw.outcome,
        warnings,
    })
}

/// Parses a bare covariance matrix (`[[...], ...]`) for a model over `n`
/// factors, in the canonical coefficient order.
pub fn parse_covariance_matrix(text: &str, n: usize) -> Result<CovarianceBlock> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
    let block = CovarianceBlock::new(rows)?;
    let expected = (1usize << n) - 1;
    if block.dim() != expected {
        return Err(Error::Covariance(format!(
            "covariance is {0}x{0} but a saturated model over {n} factors has {expected} \
             coefficients",
            block.dim()
        )));
    }
    Ok(block)
}
