//! Coefficient tables for saturated log-linear risk models.
//!
//! A model over `n` factors has one coefficient per non-empty subset of
//! factors: main effects for singletons and product terms for everything
//! larger. Subsets are identified by bitmask and stored in *canonical order*:
//! ascending by subset size, ties broken by ascending mask. For three factors
//! the canonical order is `x1, x2, x3, x1*x2, x1*x3, x2*x3, x1*x2*x3` — main
//! effects first, then pairwise products, then the triple product. Covariance
//! matrices over the coefficients use the same entry order.

use crate::error::{Error, Result};
use crate::factors::FactorSet;

/// Coefficients of a log-linear model, keyed by factor-subset bitmask.
///
/// A table is *saturated* when every one of the `2^n - 1` subsets has a
/// value. Index computations require saturation; missing product terms may be
/// defaulted to zero only by an explicit caller decision (see
/// [`CoefficientTable::fill_missing_with_zero`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    factors: FactorSet,
    /// Values in canonical subset order; meaningful only where `present`.
    values: Vec<f64>,
    present: Vec<bool>,
    /// Mask -> position in canonical order (index 0 unused).
    position: Vec<u32>,
}

impl CoefficientTable {
    /// All non-empty subsets of `n` factors in canonical order.
    pub fn canonical_subsets(n: usize) -> Vec<u32> {
        let mut subsets: Vec<u32> = (1..(1u32 << n)).collect();
        subsets.sort_by_key(|m| (m.count_ones(), *m));
        subsets
    }

    fn empty(factors: FactorSet) -> Self {
        let n = factors.len();
        let subsets = Self::canonical_subsets(n);
        let mut position = vec![0u32; 1 << n];
        for (i, &mask) in subsets.iter().enumerate() {
            position[mask as usize] = i as u32;
        }
        CoefficientTable {
            factors,
            values: vec![0.0; subsets.len()],
            present: vec![false; subsets.len()],
            position,
        }
    }

    /// Builds a table from explicit `(subset mask, value)` entries. Entries
    /// may cover any sub-collection of subsets; duplicates are rejected.
    pub fn new(factors: FactorSet, entries: &[(u32, f64)]) -> Result<Self> {
        let mut table = Self::empty(factors);
        for &(mask, value) in entries {
            table.insert(mask, value)?;
        }
        Ok(table)
    }

    /// Builds a saturated table by evaluating `value` on every subset mask.
    pub fn saturated_from_fn(
        factors: FactorSet,
        mut value: impl FnMut(u32) -> f64,
    ) -> Result<Self> {
        let n = factors.len();
        let mut table = Self::empty(factors);
        for mask in 1..(1u32 << n) {
            table.insert(mask, value(mask))?;
        }
        Ok(table)
    }

    /// Builds a saturated table from values listed in canonical order.
    pub fn saturated_from_values(factors: FactorSet, values: &[f64]) -> Result<Self> {
        let n = factors.len();
        let m = (1usize << n) - 1;
        if values.len() != m {
            return Err(Error::InvalidArgument(format!(
                "expected {m} coefficients for {n} factors, got {}",
                values.len()
            )));
        }
        let subsets = Self::canonical_subsets(n);
        let mut table = Self::empty(factors);
        for (i, &mask) in subsets.iter().enumerate() {
            table.insert(mask, values[i])?;
        }
        Ok(table)
    }

    fn insert(&mut self, mask: u32, value: f64) -> Result<()> {
        let n = self.factors.len();
        if mask == 0 || mask >= (1u32 << n) {
            return Err(Error::InvalidArgument(format!(
                "subset mask {mask:#b} is out of range for {n} factors"
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteCoefficient(self.label(mask)));
        }
        let pos = self.position[mask as usize] as usize;
        if self.present[pos] {
            return Err(Error::DuplicateSubset(self.label(mask)));
        }
        self.values[pos] = value;
        self.present[pos] = true;
        Ok(())
    }

    pub fn factors(&self) -> &FactorSet {
        &self.factors
    }

    /// Human-readable label for a subset, e.g. `"x1*x3"`.
    pub fn label(&self, mask: u32) -> String {
        let names: Vec<&str> = (0..self.factors.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| self.factors.name(i))
            .collect();
        names.join("*")
    }

    /// The coefficient for a subset, if present.
    pub fn value(&self, mask: u32) -> Option<f64> {
        let pos = *self.position.get(mask as usize)? as usize;
        if mask != 0 && self.present[pos] {
            Some(self.values[pos])
        } else {
            None
        }
    }

    /// The coefficient on the all-factors product term, if present.
    pub fn top_value(&self) -> Option<f64> {
        self.value(self.factors.full_mask())
    }

    /// Number of subsets with a value.
    pub fn entry_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn is_saturated(&self) -> bool {
        self.present.iter().all(|&p| p)
    }

    pub fn require_saturated(&self) -> Result<()> {
        match self.present.iter().position(|&p| !p) {
            None => Ok(()),
            Some(pos) => {
                let mask = Self::canonical_subsets(self.factors.len())[pos];
                Err(Error::NotSaturated {
                    missing: self.label(mask),
                })
            }
        }
    }

    /// Subset masks with a value, in canonical order.
    pub fn present_subsets(&self) -> Vec<u32> {
        Self::canonical_subsets(self.factors.len())
            .into_iter()
            .enumerate()
            .filter(|&(i, _)| self.present[i])
            .map(|(_, mask)| mask)
            .collect()
    }

    /// All coefficients in canonical order; errors when not saturated.
    pub fn values_canonical(&self) -> Result<Vec<f64>> {
        self.require_saturated()?;
        Ok(self.values.clone())
    }

    /// Marks every missing subset as an explicit zero and returns the masks
    /// that were filled. This is the *opt-in* path for documents that list
    /// only main effects.
    pub fn fill_missing_with_zero(&mut self) -> Vec<u32> {
        let subsets = Self::canonical_subsets(self.factors.len());
        let mut filled = Vec::new();
        for (i, &mask) in subsets.iter().enumerate() {
            if !self.present[i] {
                self.values[i] = 0.0;
                self.present[i] = true;
                filled.push(mask);
            }
        }
        filled
    }
}

/// A symmetric covariance matrix over coefficient-table entries, in the same
/// canonical order as the table it accompanies.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlock {
    dim: usize,
    /// Row-major `dim x dim`.
    data: Vec<f64>,
}

/// Relative tolerance for the symmetry check on input covariance matrices.
const SYMMETRY_RTOL: f64 = 1e-10;

impl CovarianceBlock {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::Covariance("covariance matrix is empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Covariance(format!(
                    "row {i} has {} entries, expected {dim} (matrix must be square)",
                    row.len()
                )));
            }
        }
        let mut data = vec![0.0f64; dim * dim];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Covariance(format!(
                        "entry ({i}, {j}) is not finite"
                    )));
                }
                data[i * dim + j] = v;
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = data[i * dim + j];
                let b = data[j * dim + i];
                let scale = a.abs().max(b.abs()).max(1.0);
                if (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::Covariance(format!(
                        "matrix is not symmetric: entry ({i}, {j}) = {a} but ({j}, {i}) = {b}"
                    )));
                }
            }
            if data[i * dim + i] < 0.0 {
                return Err(Error::Covariance(format!(
                    "diagonal entry ({i}, {i}) is negative: {}",
                    data[i * dim + i]
                )));
            }
        }
        Ok(CovarianceBlock { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Variance (diagonal entry) for the coefficient at canonical position `i`.
    pub fn variance(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors(n: usize) -> FactorSet {
        FactorSet::new((0..n).map(|i| format!("x{}", i + 1)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn canonical_order_is_graded_then_by_mask() {
        assert_eq!(
            CoefficientTable::canonical_subsets(3),
            vec![0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111]
        );
        assert_eq!(CoefficientTable::canonical_subsets(2), vec![0b01, 0b10, 0b11]);
    }

    #[test]
    fn labels_follow_factor_order() {
        let t = CoefficientTable::new(factors(3), &[(0b101, 0.5)]).unwrap();
        assert_eq!(t.label(0b101), "x1*x3");
        assert_eq!(t.label(0b111), "x1*x2*x3");
        assert_eq!(t.label(0b010), "x2");
    }

    #[test]
    fn saturation_tracking() {
        let mut t = CoefficientTable::new(
            factors(2),
            &[(0b01, 0.1), (0b10, 0.2)],
        )
        .unwrap();
        assert!(!t.is_saturated());
        assert_eq!(t.entry_count(), 2);
        let err = t.require_saturated().unwrap_err();
        assert!(err.to_string().contains("x1*x2"));
        assert_eq!(t.value(0b11), None);
        let filled = t.fill_missing_with_zero();
        assert_eq!(filled, vec![0b11]);
        assert!(t.is_saturated());
        assert_eq!(t.value(0b11), Some(0.0));
    }

    #[test]
    fn rejects_duplicates_and_bad_values() {
        assert!(matches!(
            CoefficientTable::new(factors(2), &[(0b01, 0.1), (0b01, 0.2)]),
            Err(Error::DuplicateSubset(_))
        ));
        assert!(matches!(
            CoefficientTable::new(factors(2), &[(0b01, f64::NAN)]),
            Err(Error::NonFiniteCoefficient(_))
        ));
        assert!(CoefficientTable::new(factors(2), &[(0, 0.1)]).is_err());
        assert!(CoefficientTable::new(factors(2), &[(0b100, 0.1)]).is_err());
    }

    #[test]
    fn canonical_values_round_trip() {
        let values = [0.1, 0.2, 0.3, -0.1, -0.2, -0.3, 0.9];
        let t = CoefficientTable::saturated_from_values(factors(3), &values).unwrap();
        assert_eq!(t.values_canonical().unwrap(), values.to_vec());
        assert_eq!(t.value(0b011), Some(-0.1));
        assert_eq!(t.top_value(), Some(0.9));
    }

    #[test]
    fn covariance_validation() {
        assert!(CovarianceBlock::new(vec![vec![1.0, 0.2], vec![0.2, 2.0]]).is_ok());
        // not square
        assert!(CovarianceBlock::new(vec![vec![1.0, 0.2]]).is_err());
        // not symmetric
        let err = CovarianceBlock::new(vec![vec![1.0, 0.2], vec![0.3, 2.0]]).unwrap_err();
        assert!(err.to_string().contains("not symmetric"));
        // negative diagonal
        assert!(CovarianceBlock::new(vec![vec![-1.0, 0.0], vec![0.0, 1.0]]).is_err());
        // non-finite entry
        assert!(CovarianceBlock::new(vec![vec![f64::NAN, 0.0], vec![0.0, 1.0]]).is_err());
    }
}
