//! The subset lattice of joint exposure patterns.
//!
//! With `n` binary factors there are `2^n` joint exposure patterns, one per
//! subset of factors. A pattern is encoded as a bitmask (`bit i` set means
//! factor `i` is present), so subset tests, unions and complements are single
//! integer operations and a full relative-risk surface is a flat `Vec<f64>`
//! indexed by mask.
//!
//! The two transforms in this module connect a saturated log-linear model to
//! its risk surface:
//!
//! * [`surface_from_coefficients`]: `rr(S) = exp(sum of beta_T over all
//!   non-empty T ⊆ S)` — a subset-sum (zeta) transform in log space;
//! * [`coefficients_from_surface`]: the inverse Möbius transform,
//!   `beta_T = sum over S ⊆ T of (-1)^{|T\S|} · ln rr(S)`.
//!
//! They are exact inverses of each other up to floating-point rounding.

use crate::coefficients::{CoefficientTable, CovarianceBlock};
use crate::error::{Error, Result};
use crate::factors::{FactorSet, MAX_FACTORS};

/// A joint exposure pattern: bit `i` set ⇔ factor `i` present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExposurePattern(u32);

impl ExposurePattern {
    /// The all-absent (reference) pattern.
    pub const EMPTY: ExposurePattern = ExposurePattern(0);

    pub fn from_bits(bits: u32) -> Self {
        ExposurePattern(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, factor: usize) -> bool {
        self.0 & (1 << factor) != 0
    }

    pub fn with(self, factor: usize) -> Self {
        ExposurePattern(self.0 | (1 << factor))
    }

    pub fn without(self, factor: usize) -> Self {
        ExposurePattern(self.0 & !(1 << factor))
    }

    /// Number of factors present.
    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_subset_of(self, other: ExposurePattern) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: ExposurePattern) -> Self {
        ExposurePattern(self.0 | other.0)
    }

    /// Indices of the factors present in this pattern, ascending.
    pub fn present_factors(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |i| bits & (1 << i) != 0)
    }

    /// Renders the pattern as a 0/1 string in factor order, e.g. `"101"` for
    /// factors 0 and 2 present out of three.
    pub fn to_bitstring(self, n: usize) -> String {
        (0..n)
            .map(|i| if self.contains(i) { '1' } else { '0' })
            .collect()
    }

    /// Parses a 0/1 string in factor order (the inverse of
    /// [`ExposurePattern::to_bitstring`]).
    pub fn from_bitstring(s: &str, n: usize) -> Result<Self> {
        if s.len() != n {
            return Err(Error::Parse(format!(
                "exposure pattern {s:?} has {} characters, expected {n}",
                s.len()
            )));
        }
        let mut bits = 0u32;
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => bits |= 1 << i,
                '0' => {}
                _ => {
                    return Err(Error::Parse(format!(
                        "exposure pattern {s:?} contains {c:?}; expected only 0 or 1"
                    )))
                }
            }
        }
        Ok(ExposurePattern(bits))
    }
}

/// All `2^n` exposure patterns in ascending mask order, so the all-absent
/// pattern comes first and the all-present pattern last.
pub fn enumerate_patterns(n: usize) -> Result<Vec<ExposurePattern>> {
    if !(2..=MAX_FACTORS).contains(&n) {
        return Err(Error::FactorCount(n));
    }
    Ok((0..1u32 << n).map(ExposurePattern).collect())
}

/// A relative-risk surface: one finite positive `rr` value per exposure
/// pattern, with `rr(∅) = 1` (risks are relative to the all-absent pattern).
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSurface {
    factors: FactorSet,
    rr: Vec<f64>,
}

impl RiskSurface {
    /// `rr` is indexed by pattern mask and must have length `2^n`.
    pub fn new(factors: FactorSet, rr: Vec<f64>) -> Result<Self> {
        let n = factors.len();
        if rr.len() != 1 << n {
            return Err(Error::InvalidSurface(format!(
                "surface over {n} factors needs {} values, got {}",
                1usize << n,
                rr.len()
            )));
        }
        if rr[0] != 1.0 {
            return Err(Error::InvalidSurface(format!(
                "rr for the all-absent pattern must be exactly 1, got {}",
                rr[0]
            )));
        }
        for (mask, &v) in rr.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidSurface(format!(
                    "rr for pattern {} must be finite and positive, got {v}",
                    ExposurePattern(mask as u32).to_bitstring(n)
                )));
            }
        }
        Ok(RiskSurface { factors, rr })
    }

    pub fn factors(&self) -> &FactorSet {
        &self.factors
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn rr(&self, pattern: ExposurePattern) -> f64 {
        self.rr[pattern.bits() as usize]
    }

    /// Relative risk of the pattern where only factor `i` is present.
    pub fn singleton_rr(&self, factor: usize) -> f64 {
        self.rr[1usize << factor]
    }

    /// The full-exposure pattern `rr`.
    pub fn top_rr(&self) -> f64 {
        self.rr[self.factors.full_mask() as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.rr
    }
}

/// In-place subset-sum (zeta) transform: afterwards
/// `a[S] = sum over T ⊆ S of original a[T]`.
fn zeta_in_place(a: &mut [f64], n: usize) {
    for i in 0..n {
        let bit = 1usize << i;
        for s in 0..a.len() {
            if s & bit != 0 {
                a[s] += a[s ^ bit];
            }
        }
    }
}

/// In-place Möbius (inverse zeta) transform: afterwards
/// `a[T] = sum over S ⊆ T of (-1)^{|T\S|} · original a[S]`.
fn mobius_in_place(a: &mut [f64], n: usize) {
    for i in 0..n {
        let bit = 1usize << i;
        for s in 0..a.len() {
            if s & bit != 0 {
                a[s] -= a[s ^ bit];
            }
        }
    }
}

/// Expands a saturated coefficient table into the full relative-risk surface:
/// `rr(S) = exp(sum of beta_T over non-empty T ⊆ S)`.
pub fn surface_from_coefficients(table: &CoefficientTable) -> Result<RiskSurface> {
    table.require_saturated()?;
    let n = table.factors().len();
    let mut log_rr = vec![0.0f64; 1 << n];
    for mask in 1..(1u32 << n) {
        log_rr[mask as usize] = table.value(mask).expect("saturated table");
    }
    zeta_in_place(&mut log_rr, n);
    let mut rr: Vec<f64> = log_rr.iter().map(|&l| l.exp()).collect();
    rr[0] = 1.0;
    for (mask, &v) in rr.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Numerical(format!(
                "relative risk for pattern {} overflowed ({v}) while expanding coefficients",
                ExposurePattern(mask as u32).to_bitstring(n)
            )));
        }
    }
    RiskSurface::new(table.factors().clone(), rr)
}

/// Recovers the saturated coefficient table from a risk surface via Möbius
/// inversion of `ln rr`. Inverse of [`surface_from_coefficients`].
pub fn coefficients_from_surface(surface: &RiskSurface) -> CoefficientTable {
    let n = surface.factor_count();
    let mut log_rr: Vec<f64> = surface.values().iter().map(|&v| v.ln()).collect();
    log_rr[0] = 0.0;
    mobius_in_place(&mut log_rr, n);
    CoefficientTable::saturated_from_fn(surface.factors().clone(), |mask| {
        log_rr[mask as usize]
    })
    .expect("surface values are finite, so coefficients are finite")
}

/// Recodes factor `i` as its complement (presence ↔ absence) directly on the
/// risk surface. The new reference pattern is the old "only `i` present"
/// pattern, so
///
/// `rr'(S) = rr(S with bit i toggled) / rr(only i)`.
///
/// Applying the same flip twice returns the original surface. This is how a
/// protective factor (singleton rr < 1) is re-oriented so that all factors
/// are risk factors.
pub fn flip_factor(surface: &RiskSurface, factor: usize) -> Result<RiskSurface> {
    let n = surface.factor_count();
    if factor >= n {
        return Err(Error::FactorIndex(factor, n));
    }
    let bit = 1usize << factor;
    let denom = surface.singleton_rr(factor);
    let rr: Vec<f64> = (0..1usize << n)
        .map(|mask| surface.values()[mask ^ bit] / denom)
        .collect();
    RiskSurface::new(surface.factors().clone(), rr)
}

/// The linear map on coefficient vectors induced by [`flip_factor`].
///
/// Flipping a factor acts linearly on `ln rr` (a permutation followed by
/// subtracting the old singleton log-rr), and the coefficient vector is a
/// linear image of `ln rr`, so recoding a factor is multiplication of the
/// coefficient vector by an integer matrix `M` (entries in canonical order):
/// `beta' = M beta`, and a delta-method covariance transforms as
/// `Sigma' = M Sigma M^T`. Returned as a dense row-major `m x m` matrix with
/// `m = 2^n - 1`.
pub fn flip_coefficient_map(n: usize, factor: usize) -> Result<Vec<Vec<f64>>> {
    if !(2..=MAX_FACTORS).contains(&n) {
        return Err(Error::FactorCount(n));
    }
    if factor >= n {
        return Err(Error::FactorIndex(factor, n));
    }
    let subsets = CoefficientTable::canonical_subsets(n);
    let m = subsets.len();
    let bit = 1usize << factor;
    let mut columns = Vec::with_capacity(m);
    for &basis_mask in &subsets {
        // Push the basis coefficient vector through the flip entirely in log
        // space; every intermediate value is 0 or ±1, so the column is exact.
        let mut log_rr = vec![0.0f64; 1 << n];
        log_rr[basis_mask as usize] = 1.0;
        zeta_in_place(&mut log_rr, n);
        let singleton = log_rr[bit];
        let mut flipped: Vec<f64> = (0..1usize << n)
            .map(|mask| log_rr[mask ^ bit] - singleton)
            .collect();
        flipped[0] = 0.0;
        mobius_in_place(&mut flipped, n);
        columns.push(flipped);
    }
    let mut matrix = vec![vec![0.0f64; m]; m];
    for (col, column) in columns.iter().enumerate() {
        for (row, &subset) in subsets.iter().enumerate() {
            matrix[row][col] = column[subset as usize];
        }
    }
    Ok(matrix)
}

/// Applies [`flip_factor`] in coefficient space: returns the recoded
/// coefficient table and, when a covariance block is supplied, the exactly
/// transformed covariance `M Sigma M^T`.
pub fn flip_factor_coefficients(
    table: &CoefficientTable,
    covariance: Option<&CovarianceBlock>,
    factor: usize,
) -> Result<(CoefficientTable, Option<CovarianceBlock>)> {
    table.require_saturated()?;
    let n = table.factors().len();
    let m = flip_coefficient_map(n, factor)?;
    let beta = table.values_canonical()?;
    let dim = beta.len();
    let mut new_beta = vec![0.0f64; dim];
    for (r, row) in m.iter().enumerate() {
        new_beta[r] = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
    }
    let subsets = CoefficientTable::canonical_subsets(n);
    let new_table = CoefficientTable::saturated_from_fn(table.factors().clone(), |mask| {
        let idx = subsets.iter().position(|&s| s == mask).unwrap();
        new_beta[idx]
    })?;
    let new_cov = match covariance {
        None => None,
        Some(cov) => {
            if cov.dim() != dim {
                return Err(Error::Covariance(format!(
                    "covariance is {}x{} but the coefficient table has {dim} entries",
                    cov.dim(),
                    cov.dim()
                )));
            }
            // Sigma' = M Sigma M^T
            let mut ms = vec![vec![0.0f64; dim]; dim];
            for r in 0..dim {
                for c in 0..dim {
                    ms[r][c] = (0..dim).map(|k| m[r][k] * cov.get(k, c)).sum();
                }
            }
            let mut out = vec![vec![0.0f64; dim]; dim];
            for r in 0..dim {
                for c in 0..dim {
                    out[r][c] = (0..dim).map(|k| ms[r][k] * m[c][k]).sum();
                }
            }
            // Kill rounding asymmetry before revalidation.
            for r in 0..dim {
                for c in (r + 1)..dim {
                    let avg = 0.5 * (out[r][c] + out[c][r]);
                    out[r][c] = avg;
                    out[c][r] = avg;
                }
            }
            Some(CovarianceBlock::new(out)?)
        }
    };
    Ok((new_table, new_cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn factors(n: usize) -> FactorSet {
        FactorSet::new((0..n).map(|i| format!("x{}", i + 1)).collect::<Vec<_>>()).unwrap()
    }

    /// The worked three-factor example used throughout the test suite:
    /// coefficients (mains, pairwise products, triple product) =
    /// (0.36, 0.29, 0.41, -0.27, -0.23, -0.24, 0.92).
    pub(crate) fn worked_example_table() -> CoefficientTable {
        CoefficientTable::new(
            factors(3),
            &[
                (0b001, 0.36),
                (0b010, 0.29),
                (0b100, 0.41),
                (0b011, -0.27),
                (0b101, -0.23),
                (0b110, -0.24),
                (0b111, 0.92),
            ],
        )
        .unwrap()
    }

    #[test]
    fn pattern_bit_operations() {
        let p = ExposurePattern::from_bits(0b101);
        assert!(p.contains(0) && !p.contains(1) && p.contains(2));
        assert_eq!(p.count(), 2);
        assert_eq!(p.with(1).bits(), 0b111);
        assert_eq!(p.without(2).bits(), 0b001);
        assert!(p.is_subset_of(ExposurePattern::from_bits(0b111)));
        assert!(!ExposurePattern::from_bits(0b111).is_subset_of(p));
        assert_eq!(p.present_factors().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn bitstring_round_trip() {
        let p = ExposurePattern::from_bits(0b110);
        assert_eq!(p.to_bitstring(3), "011");
        assert_eq!(ExposurePattern::from_bitstring("011", 3).unwrap(), p);
        assert!(ExposurePattern::from_bitstring("01", 3).is_err());
        assert!(ExposurePattern::from_bitstring("012", 3).is_err());
    }

    #[test]
    fn enumerates_all_patterns_in_mask_order() {
        let two = enumerate_patterns(2).unwrap();
        assert_eq!(
            two.iter().map(|p| p.to_bitstring(2)).collect::<Vec<_>>(),
            vec!["00", "10", "01", "11"]
        );
        assert_eq!(enumerate_patterns(3).unwrap().len(), 8);
        assert!(enumerate_patterns(1).is_err());
        assert!(enumerate_patterns(21).is_err());
    }

    #[test]
    fn surface_validation() {
        let f = factors(2);
        assert!(RiskSurface::new(f.clone(), vec![1.0, 2.0, 3.0, 6.0]).is_ok());
        // wrong length
        assert!(RiskSurface::new(f.clone(), vec![1.0, 2.0]).is_err());
        // reference rr must be 1
        assert!(RiskSurface::new(f.clone(), vec![0.9, 2.0, 3.0, 6.0]).is_err());
        // rr must be positive and finite
        assert!(RiskSurface::new(f.clone(), vec![1.0, -2.0, 3.0, 6.0]).is_err());
        assert!(RiskSurface::new(f, vec![1.0, f64::INFINITY, 3.0, 6.0]).is_err());
    }

    #[test]
    fn expands_worked_example_surface() {
        let surface = surface_from_coefficients(&worked_example_table()).unwrap();
        // Singleton relative risks are exp of the main-effect coefficients.
        assert_relative_eq!(surface.singleton_rr(0), (0.36f64).exp(), max_relative = 1e-12);
        assert!((surface.singleton_rr(0) - 1.43).abs() < 0.01);
        assert!((surface.singleton_rr(1) - 1.34).abs() < 0.01);
        assert!((surface.singleton_rr(2) - 1.51).abs() < 0.01);
        // Full pattern: exp of the sum of all seven coefficients.
        let full = ExposurePattern::from_bits(0b111);
        assert_relative_eq!(surface.rr(full), (1.24f64).exp(), max_relative = 1e-12);
        assert!((surface.rr(full) - 3.46).abs() < 0.01);
        // A mixed pattern: x1 and x2 present.
        assert_relative_eq!(
            surface.rr(ExposurePattern::from_bits(0b011)),
            (0.36f64 + 0.29 - 0.27).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_coefficients_give_unit_surface() {
        let table = CoefficientTable::saturated_from_fn(factors(3), |_| 0.0).unwrap();
        let surface = surface_from_coefficients(&table).unwrap();
        assert!(surface.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mobius_recovers_known_two_factor_coefficients() {
        // rr(10)=2, rr(01)=3, rr(11)=12 => beta1=ln2, beta2=ln3, beta12=ln(12/6)=ln2.
        let surface = RiskSurface::new(factors(2), vec![1.0, 2.0, 3.0, 12.0]).unwrap();
        let table = coefficients_from_surface(&surface);
        assert_relative_eq!(table.value(0b01).unwrap(), 2.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(table.value(0b10).unwrap(), 3.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(table.value(0b11).unwrap(), 2.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn unit_surface_gives_zero_coefficients() {
        let surface = RiskSurface::new(factors(3), vec![1.0; 8]).unwrap();
        let table = coefficients_from_surface(&surface);
        for mask in 1..8u32 {
            assert_eq!(table.value(mask).unwrap(), 0.0);
        }
    }

    #[test]
    fn flip_matches_hand_computed_two_factor_table() {
        // rr = (1, 0.5, 2, 1.5); flipping factor 1 gives (1, 2, 3, 4).
        let surface = RiskSurface::new(factors(2), vec![1.0, 0.5, 2.0, 1.5]).unwrap();
        let flipped = flip_factor(&surface, 0).unwrap();
        assert_eq!(flipped.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn flip_reorients_protective_singleton() {
        let surface = RiskSurface::new(factors(2), vec![1.0, 0.25, 2.0, 0.8]).unwrap();
        let flipped = flip_factor(&surface, 0).unwrap();
        assert_relative_eq!(flipped.singleton_rr(0), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn flip_coefficient_map_agrees_with_surface_flip() {
        let table = worked_example_table();
        let surface = surface_from_coefficients(&table).unwrap();
        let by_surface = coefficients_from_surface(&flip_factor(&surface, 2).unwrap());
        let (by_map, _) = flip_factor_coefficients(&table, None, 2).unwrap();
        for mask in 1..8u32 {
            assert_relative_eq!(
                by_map.value(mask).unwrap(),
                by_surface.value(mask).unwrap(),
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn multiplicative_null_iff_product_coefficients_zero() {
        // With all product coefficients zero, ln rr is additive over disjoint
        // unions; perturbing any product coefficient breaks it.
        let f = factors(3);
        let table = CoefficientTable::saturated_from_fn(f, |mask| match mask {
            0b001 => 0.3,
            0b010 => -0.2,
            0b100 => 0.7,
            _ => 0.0,
        })
        .unwrap();
        let surface = surface_from_coefficients(&table).unwrap();
        for s in enumerate_patterns(3).unwrap() {
            for t in enumerate_patterns(3).unwrap() {
                if s.bits() & t.bits() == 0 {
                    let joint = surface.rr(s.union(t));
                    assert_relative_eq!(
                        joint.ln(),
                        surface.rr(s).ln() + surface.rr(t).ln(),
                        epsilon = 1e-12
                    );
                }
            }
        }
        let bent = coefficients_from_surface(&surface);
        let mut values: Vec<(u32, f64)> = (1..8u32)
            .map(|mask| (mask, bent.value(mask).unwrap()))
            .collect();
        let x1x2 = values.iter().position(|&(m, _)| m == 0b011).unwrap();
        values[x1x2].1 += 0.1; // perturb the x1*x2 product term
        let bent = CoefficientTable::new(factors(3), &values).unwrap();
        let bent_surface = surface_from_coefficients(&bent).unwrap();
        let s = ExposurePattern::from_bits(0b001);
        let t = ExposurePattern::from_bits(0b010);
        let lhs = bent_surface.rr(s.union(t)).ln();
        let rhs = bent_surface.rr(s).ln() + bent_surface.rr(t).ln();
        assert!((lhs - rhs).abs() > 0.05);
    }

    proptest! {
        #[test]
        fn coefficients_surface_round_trip(
            n in 2usize..=6,
            seed_values in proptest::collection::vec(-1.0f64..1.0, 63)
        ) {
            let table = CoefficientTable::saturated_from_fn(factors(n), |mask| {
                seed_values[(mask as usize - 1) % seed_values.len()]
            }).unwrap();
            let surface = surface_from_coefficients(&table).unwrap();
            let back = coefficients_from_surface(&surface);
            for mask in 1..(1u32 << n) {
                let a = table.value(mask).unwrap();
                let b = back.value(mask).unwrap();
                prop_assert!((a - b).abs() < 1e-12, "mask {mask:b}: {a} vs {b}");
            }
        }

        #[test]
        fn flip_is_an_involution(
            n in 2usize..=5,
            factor_seed in 0usize..5,
            seed_values in proptest::collection::vec(-1.0f64..1.0, 31)
        ) {
            let factor = factor_seed % n;
            let table = CoefficientTable::saturated_from_fn(factors(n), |mask| {
                seed_values[(mask as usize - 1) % seed_values.len()]
            }).unwrap();
            let surface = surface_from_coefficients(&table).unwrap();
            let twice = flip_factor(&flip_factor(&surface, factor).unwrap(), factor).unwrap();
            for mask in 0..(1usize << n) {
                let a = surface.values()[mask];
                let b = twice.values()[mask];
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
