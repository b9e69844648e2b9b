//! Named sets of binary risk factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of factors. The subset lattice has `2^n` patterns,
/// so 20 factors already means a megapattern surface (~8 MB of `f64`);
/// anything beyond that is outside the intended use of these methods.
pub const MAX_FACTORS: usize = 20;

/// Orientation of a factor with respect to the outcome: whether presence of
/// the factor is believed to raise risk. Additive interaction indices are
/// only interpretable when every factor is risk-oriented, so this is tracked
/// per factor and checked before index computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Risk,
    Protective,
    #[default]
    Unknown,
}

/// An ordered set of 2..=20 uniquely named binary factors. Factor `i`
/// corresponds to bit `i` of an [`crate::lattice::ExposurePattern`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorSet {
    names: Vec<String>,
    orientations: Vec<Orientation>,
}

/// Characters that would collide with the separators used in coefficient
/// labels (`a*b`) and report keys (`RERI2(a,b|c=0)`).
const RESERVED: &[char] = &['*', ',', '|', '='];

fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(Error::FactorLabel {
            label: label.to_string(),
            reason: "label is empty".into(),
        });
    }
    if label != label.trim() {
        return Err(Error::FactorLabel {
            label: label.to_string(),
            reason: "label has leading or trailing whitespace".into(),
        });
    }
    if let Some(c) = label.chars().find(|c| RESERVED.contains(c) || c.is_control()) {
        return Err(Error::FactorLabel {
            label: label.to_string(),
            reason: format!("label contains reserved character {c:?}"),
        });
    }
    Ok(())
}

impl FactorSet {
    /// Builds a factor set with all orientations `Unknown`.
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 || names.len() > MAX_FACTORS {
            return Err(Error::FactorCount(names.len()));
        }
        for (i, name) in names.iter().enumerate() {
            validate_label(name)?;
            if names[..i].contains(name) {
                return Err(Error::DuplicateFactor(name.clone()));
            }
        }
        let orientations = vec![Orientation::Unknown; names.len()];
        Ok(FactorSet { names, orientations })
    }

    /// Number of factors `n`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees n >= 2
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn orientation(&self, index: usize) -> Orientation {
        self.orientations[index]
    }

    pub fn set_orientation(&mut self, index: usize, orientation: Orientation) -> Result<()> {
        if index >= self.len() {
            return Err(Error::FactorIndex(index, self.len()));
        }
        self.orientations[index] = orientation;
        Ok(())
    }

    /// Bitmask with one bit set per factor, i.e. the all-present pattern.
    pub fn full_mask(&self) -> u32 {
        (1u32 << self.len()) - 1
    }
}
