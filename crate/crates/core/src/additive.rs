//! Additive-scale interaction indices.
//!
//! On the additive scale, interaction between risk factors is departure of
//! the joint excess relative risk from the sum of the component excess
//! relative risks. For `n` factors two summary indices exist:
//!
//! * **TotRERI** — the *total* relative excess risk due to interaction, the
//!   gap between the joint excess risk and the sum of the `n` single-factor
//!   excess risks: `rr(all) - Σ rr(only i) + (n - 1)`. It pools every
//!   interaction order.
//! * **RERI** — the *top-order* index: the signed inclusion–exclusion sum
//!   `Σ over S of (-1)^{n-|S|} · rr(S)` over all `2^n` patterns. It isolates
//!   the n-way contribution that remains after all lower-order interactions.
//!
//! The two are linked by a decomposition: TotRERI equals the top-order RERI
//! plus every lower-order RERI conditioned on the remaining factors being
//! absent. Lower-order indices conditioned on other factors being *present*
//! are also defined (see [`Conditioning`]); both families appear in reports.
//!
//! All indices assume every factor is risk-oriented (singleton rr ≥ 1):
//! excess risks of protective factors are negative and make the additive
//! indices uninterpretable. [`protective_warnings`] detects this and
//! [`enforce_policy`] lets callers choose between warning, refusing, or
//! proceeding silently; re-orientation itself is
//! [`crate::lattice::flip_factor`]'s job.

use crate::error::{Error, Result};
use crate::lattice::{ExposurePattern, RiskSurface};

/// Largest factor count accepted by [`reri_recursive_oracle`]. The recursion
/// enumerates sub-lattices of sub-lattices, which is only meant as an
/// independent cross-check at small `n`.
pub const RECURSIVE_ORACLE_MAX_FACTORS: usize = 8;

/// A conditioning scheme: a set of *active* factors whose interaction is
/// measured, with every remaining factor pinned either *present* or
/// *absent*. The three sets partition the full factor set; at least two
/// factors must be active for an interaction to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conditioning {
    n: usize,
    active: ExposurePattern,
    present: ExposurePattern,
    absent: ExposurePattern,
}

impl Conditioning {
    /// Builds a conditioning over `n` factors. `absent` is inferred as the
    /// complement of `active | present`.
    pub fn new(n: usize, active: u32, present: u32) -> Result<Self> {
        let full = (1u32 << n) - 1;
        if active & !full != 0 || present & !full != 0 {
            return Err(Error::InvalidConditioning(format!(
                "factor masks {active:#b}/{present:#b} out of range for {n} factors"
            )));
        }
        if active & present != 0 {
            return Err(Error::InvalidConditioning(
                "a factor cannot be both active and conditioned present".into(),
            ));
        }
        if active.count_ones() < 2 {
            return Err(Error::InvalidConditioning(format!(
                "need at least 2 active factors for an interaction, got {}",
                active.count_ones()
            )));
        }
        Ok(Conditioning {
            n,
            active: ExposurePattern::from_bits(active),
            present: ExposurePattern::from_bits(present),
            absent: ExposurePattern::from_bits(full & !(active | present)),
        })
    }

    /// The degenerate conditioning where every factor is active.
    pub fn unconditional(n: usize) -> Result<Self> {
        Self::new(n, (1u32 << n) - 1, 0)
    }

    pub fn factor_count(&self) -> usize {
        self.n
    }

    pub fn active(&self) -> ExposurePattern {
        self.active
    }

    pub fn present(&self) -> ExposurePattern {
        self.present
    }

    pub fn absent(&self) -> ExposurePattern {
        self.absent
    }

    /// Order of the conditional index (number of active factors).
    pub fn order(&self) -> usize {
        self.active.count() as usize
    }

    fn check_surface(&self, surface: &RiskSurface) -> Result<()> {
        if surface.factor_count() != self.n {
            return Err(Error::InvalidConditioning(format!(
                "conditioning is over {} factors but the surface has {}",
                self.n,
                surface.factor_count()
            )));
        }
        Ok(())
    }
}

/// Total relative excess risk due to interaction:
/// `rr(all present) - Σ_i rr(only i present) + (n - 1)`.
pub fn tot_reri(surface: &RiskSurface) -> f64 {
    let n = surface.factor_count();
    let mut value = surface.top_rr() + (n as f64 - 1.0);
    for i in 0..n {
        value -= surface.singleton_rr(i);
    }
    value
}

/// Top-order (n-way) relative excess risk due to interaction: the signed
/// inclusion–exclusion sum `Σ_S (-1)^{n - |S|} rr(S)` over all patterns.
pub fn reri_n(surface: &RiskSurface) -> f64 {
    let n = surface.factor_count();
    let mut value = 0.0;
    for mask in 0..(1u32 << n) {
        let sign = if (n as u32 - mask.count_ones()) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        value += sign * surface.rr(ExposurePattern::from_bits(mask));
    }
    value
}

/// Lower-order RERI among the active factors with the remaining factors
/// pinned. The index is the inclusion–exclusion sum over the sub-lattice
/// anchored at the conditioned-present pattern `P`, standardized by `rr(P)`
/// so that the reference category is "conditioned factors present, active
/// factors absent":
///
/// `RERI(A | P present, rest absent) = Σ_{B ⊆ A} (-1)^{|A|-|B|} rr(P ∪ B) / rr(P)`.
///
/// With `P = ∅` this is the plain lower-order RERI with the remaining
/// factors absent, and with every factor active it reduces to [`reri_n`].
pub fn reri_conditional(surface: &RiskSurface, conditioning: &Conditioning) -> Result<f64> {
    conditioning.check_surface(surface)?;
    let active = conditioning.active().bits();
    let present = conditioning.present();
    let order = conditioning.order() as u32;
    let mut sum = 0.0;
    let mut b = active;
    loop {
        let sign = if (order - b.count_ones()) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        sum += sign * surface.rr(present.union(ExposurePattern::from_bits(b)));
        if b == 0 {
            break;
        }
        b = (b - 1) & active;
    }
    Ok(sum / surface.rr(present))
}

/// Independent oracle for [`reri_n`], computed along a different route: the
/// recurrence that *defines* the top-order index as what is left of TotRERI
/// after subtracting every lower-order RERI (each conditioned on the
/// remaining factors being absent).
///
/// For an active subset `A` (everything else absent):
///
/// * `RERI(A) = TotRERI(A)` when `|A| = 2`;
/// * `RERI(A) = TotRERI(A) - Σ_{B ⊂ A, |B| ≥ 2} RERI(B)` otherwise,
///
/// where `TotRERI(A) = rr(A) - Σ_{i ∈ A} rr(only i) + (|A| - 1)`.
///
/// This deliberately never forms the inclusion–exclusion sum, so agreement
/// with [`reri_n`] checks the closed form against the defining recurrence.
/// Exponential in `n`; capped at [`RECURSIVE_ORACLE_MAX_FACTORS`].
pub fn reri_recursive_oracle(surface: &RiskSurface) -> Result<f64> {
    let n = surface.factor_count();
    if n > RECURSIVE_ORACLE_MAX_FACTORS {
        return Err(Error::InvalidArgument(format!(
            "recursive oracle supports at most {RECURSIVE_ORACLE_MAX_FACTORS} factors, got {n}"
        )));
    }
    let full = surface.factors().full_mask();
    let mut memo: Vec<Option<f64>> = vec![None; (full as usize) + 1];
    Ok(reri_recursive(surface, full, &mut memo))
}

fn reri_recursive(surface: &RiskSurface, active: u32, memo: &mut Vec<Option<f64>>) -> f64 {
    if let Some(v) = memo[active as usize] {
        return v;
    }
    let k = active.count_ones();
    let mut value = surface.rr(ExposurePattern::from_bits(active)) + (k as f64 - 1.0);
    for i in ExposurePattern::from_bits(active).present_factors() {
        value -= surface.singleton_rr(i);
    }
    if k > 2 {
        // strict subsets of `active` with at least two factors
        let mut b = (active - 1) & active;
        loop {
            if b.count_ones() >= 2 {
                value -= reri_recursive(surface, b, memo);
            }
            if b == 0 {
                break;
            }
            b = (b - 1) & active;
        }
    }
    memo[active as usize] = Some(value);
    value
}

/// How to react when a surface contains protective factors (singleton
/// rr < 1), for which additive interaction indices are not interpretable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProtectivePolicy {
    /// Proceed silently (explicit override, e.g. for pedagogy).
    Allow,
    /// Proceed but report a structured warning per offending factor.
    #[default]
    Warn,
    /// Refuse to compute.
    Deny,
}

/// A factor whose singleton relative risk is below 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectiveWarning {
    pub factor: usize,
    pub name: String,
    pub rr: f64,
}

impl std::fmt::Display for ProtectiveWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "factor {:?} looks protective (rr = {:.4} < 1); additive interaction indices \
             assume risk orientation — consider recoding it as its complement",
            self.name, self.rr
        )
    }
}

/// Factors of the surface whose singleton rr is strictly below 1.
pub fn protective_warnings(surface: &RiskSurface) -> Vec<ProtectiveWarning> {
    (0..surface.factor_count())
        .filter(|&i| surface.singleton_rr(i) < 1.0)
        .map(|i| ProtectiveWarning {
            factor: i,
            name: surface.factors().name(i).to_string(),
            rr: surface.singleton_rr(i),
        })
        .collect()
}

/// Applies a [`ProtectivePolicy`] to a surface before index computation.
/// Returns the warnings to attach to results (empty under `Allow`).
pub fn enforce_policy(
    surface: &RiskSurface,
    policy: ProtectivePolicy,
) -> Result<Vec<ProtectiveWarning>> {
    let warnings = protective_warnings(surface);
    match policy {
        ProtectivePolicy::Allow => Ok(Vec::new()),
        ProtectivePolicy::Warn => Ok(warnings),
        ProtectivePolicy::Deny => {
            if let Some(w) = warnings.first() {
                Err(Error::InvalidSurface(format!(
                    "factor {:?} is protective (singleton rr = {:.4} < 1) and the policy forbids \
                     computing additive indices; recode the factor or relax the policy",
                    w.name, w.rr
                )))
            } else {
                Ok(Vec::new())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientTable;
    use crate::factors::FactorSet;
    use crate::lattice::{surface_from_coefficients, RiskSurface};
    use approx::assert_relative_eq;

    fn factors(n: usize) -> FactorSet {
        FactorSet::new((0..n).map(|i| format!("x{}", i + 1)).collect::<Vec<_>>()).unwrap()
    }

    /// Three-factor worked example (coefficients 0.36, 0.29, 0.41, -0.27,
    /// -0.23, -0.24, 0.92); published index values are reproduced within the
    /// rounding of the inputs.
    fn worked_surface() -> RiskSurface {
        let table = CoefficientTable::new(
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
        .unwrap();
        surface_from_coefficients(&table).unwrap()
    }

    fn two_factor_multiplicative_null() -> RiskSurface {
        // rr: a=2, b=3, joint=6 (no multiplicative interaction).
        RiskSurface::new(factors(2), vec![1.0, 2.0, 3.0, 6.0]).unwrap()
    }

    #[test]
    fn tot_reri_matches_published_value() {
        assert!((tot_reri(&worked_surface()) - 1.20).abs() < 0.06);
    }

    #[test]
    fn tot_reri_closed_form() {
        let s = worked_surface();
        let direct = s.rr(ExposurePattern::from_bits(0b111))
            - s.singleton_rr(0)
            - s.singleton_rr(1)
            - s.singleton_rr(2)
            + 2.0;
        assert_relative_eq!(tot_reri(&s), direct, epsilon = 1e-12);
    }

    #[test]
    fn tot_reri_is_zero_on_unit_surface() {
        let s = RiskSurface::new(factors(4), vec![1.0; 16]).unwrap();
        assert_eq!(tot_reri(&s), 0.0);
        assert_eq!(reri_n(&s), 0.0);
    }

    #[test]
    fn two_factor_indices_coincide() {
        let s = two_factor_multiplicative_null();
        // rr11 - rr10 - rr01 + 1 = 6 - 2 - 3 + 1 = 2, and TotRERI2 = RERI2.
        assert_relative_eq!(reri_n(&s), 2.0, epsilon = 1e-12);
        assert_relative_eq!(tot_reri(&s), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn reri_n_matches_published_value() {
        assert!((reri_n(&worked_surface()) - 1.98).abs() < 0.06);
    }

    #[test]
    fn conditional_reri_matches_published_absent_rows() {
        let s = worked_surface();
        let cases = [
            (0b011u32, 0b000u32, -0.30), // x1,x2 | x3 absent
            (0b101, 0b000, -0.23),       // x1,x3 | x2 absent
            (0b110, 0b000, -0.25),       // x2,x3 | x1 absent
        ];
        for (active, present, expected) in cases {
            let c = Conditioning::new(3, active, present).unwrap();
            let v = reri_conditional(&s, &c).unwrap();
            assert!((v - expected).abs() < 0.04, "active {active:#b}: {v} vs {expected}");
        }
    }

    #[test]
    fn conditional_reri_matches_published_present_rows() {
        let s = worked_surface();
        let cases = [
            (0b011u32, 0b100u32, 1.11), // x1,x2 | x3 present
            (0b101, 0b010, 1.31),       // x1,x3 | x2 present
            (0b110, 0b001, 1.20),       // x2,x3 | x1 present
        ];
        for (active, present, expected) in cases {
            let c = Conditioning::new(3, active, present).unwrap();
            let v = reri_conditional(&s, &c).unwrap();
            assert!((v - expected).abs() < 0.06, "active {active:#b}: {v} vs {expected}");
        }
    }

    #[test]
    fn conditional_absent_row_closed_form() {
        // RERI2(x1,x2 | x3 absent) = rr(110) - rr(100) - rr(010) + 1 in
        // pattern notation (x1 x2 x3 left to right).
        let s = worked_surface();
        let c = Conditioning::new(3, 0b011, 0).unwrap();
        let direct = s.rr(ExposurePattern::from_bits(0b011)) - s.singleton_rr(0)
            - s.singleton_rr(1)
            + 1.0;
        assert_relative_eq!(reri_conditional(&s, &c).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn conditional_present_row_closed_form() {
        // RERI2(x1,x2 | x3 present) =
        //   (rr(111) - rr(101) - rr(011) + rr(001)) / rr(001)
        // in mask notation (bit 2 = x3).
        let s = worked_surface();
        let c = Conditioning::new(3, 0b011, 0b100).unwrap();
        let rr = |m: u32| s.rr(ExposurePattern::from_bits(m));
        let direct = (rr(0b111) - rr(0b101) - rr(0b110) + rr(0b100)) / rr(0b100);
        assert_relative_eq!(reri_conditional(&s, &c).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_conditioning_equals_top_order_index() {
        let s = worked_surface();
        let c = Conditioning::unconditional(3).unwrap();
        assert_relative_eq!(reri_conditional(&s, &c).unwrap(), reri_n(&s), epsilon = 1e-12);
        let s2 = two_factor_multiplicative_null();
        let c2 = Conditioning::unconditional(2).unwrap();
        assert_relative_eq!(reri_conditional(&s2, &c2).unwrap(), reri_n(&s2), epsilon = 1e-12);
    }

    #[test]
    fn conditioning_validation() {
        assert!(Conditioning::new(3, 0b001, 0).is_err()); // one active factor
        assert!(Conditioning::new(3, 0b011, 0b001).is_err()); // overlap
        assert!(Conditioning::new(3, 0b1011, 0).is_err()); // out of range
        let c = Conditioning::new(4, 0b0011, 0b0100).unwrap();
        assert_eq!(c.absent().bits(), 0b1000);
        assert_eq!(c.order(), 2);
        // conditioning must match the surface dimension
        let s = two_factor_multiplicative_null();
        assert!(reri_conditional(&s, &c).is_err());
    }

    #[test]
    fn recursive_oracle_agrees_on_worked_example() {
        let s = worked_surface();
        assert_relative_eq!(reri_recursive_oracle(&s).unwrap(), reri_n(&s), epsilon = 1e-10);
    }

    #[test]
    fn recursive_oracle_agrees_on_random_surfaces() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in 2..=6usize {
            for _ in 0..50 {
                let table = CoefficientTable::saturated_from_fn(factors(n), |_| {
                    rng.random_range(-1.0..1.0)
                })
                .unwrap();
                let s = surface_from_coefficients(&table).unwrap();
                let oracle = reri_recursive_oracle(&s).unwrap();
                let direct = reri_n(&s);
                assert!(
                    (oracle - direct).abs() < 1e-10,
                    "n={n}: oracle {oracle} vs direct {direct}"
                );
            }
        }
    }

    #[test]
    fn recursive_oracle_rejects_large_n() {
        let n = 9;
        let s = RiskSurface::new(factors(n), vec![1.0; 1 << n]).unwrap();
        assert!(reri_recursive_oracle(&s).is_err());
    }

    #[test]
    fn decomposition_into_conditional_absent_indices() {
        // TotRERI = RERI_n + sum over all proper active subsets (size >= 2,
        // everything else absent) of the conditional RERI.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 2..=5usize {
            let table = CoefficientTable::saturated_from_fn(factors(n), |_| {
                rng.random_range(-1.0..1.0)
            })
            .unwrap();
            let s = surface_from_coefficients(&table).unwrap();
            let mut sum = reri_n(&s);
            for active in 1..((1u32 << n) - 1) {
                if active.count_ones() >= 2 {
                    let c = Conditioning::new(n, active, 0).unwrap();
                    sum += reri_conditional(&s, &c).unwrap();
                }
            }
            assert_relative_eq!(tot_reri(&s), sum, epsilon = 1e-10);
        }
    }

    #[test]
    fn pivot_recursion_identity() {
        // RERI_n = RERI_{n-1}(rest | pivot present) * rr(pivot)
        //        - RERI_{n-1}(rest | pivot absent), for every pivot.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for n in 3..=5usize {
            let table = CoefficientTable::saturated_from_fn(factors(n), |_| {
                rng.random_range(-1.0..1.0)
            })
            .unwrap();
            let s = surface_from_coefficients(&table).unwrap();
            let full = (1u32 << n) - 1;
            for pivot in 0..n {
                let rest = full & !(1 << pivot);
                let with = Conditioning::new(n, rest, 1 << pivot).unwrap();
                let without = Conditioning::new(n, rest, 0).unwrap();
                let recomposed = reri_conditional(&s, &with).unwrap()
                    * s.singleton_rr(pivot)
                    - reri_conditional(&s, &without).unwrap();
                assert_relative_eq!(reri_n(&s), recomposed, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn index_values_are_invariant_under_factor_relabeling() {
        let s = worked_surface();
        // Swap factors 0 and 2: remap every pattern's bits.
        let perm = |mask: u32| -> u32 {
            let b0 = (mask & 0b001) << 2;
            let b1 = mask & 0b010;
            let b2 = (mask & 0b100) >> 2;
            b0 | b1 | b2
        };
        let relabeled = FactorSet::new(vec!["x3", "x2", "x1"]).unwrap();
        let mut rr = vec![0.0; 8];
        for mask in 0..8u32 {
            rr[perm(mask) as usize] = s.rr(ExposurePattern::from_bits(mask));
        }
        let permuted = RiskSurface::new(relabeled, rr).unwrap();
        assert_relative_eq!(tot_reri(&s), tot_reri(&permuted), epsilon = 1e-12);
        assert_relative_eq!(reri_n(&s), reri_n(&permuted), epsilon = 1e-12);
    }

    #[test]
    fn protective_policy_enforcement() {
        // Two protective "treatment" factors with rr 0.25 each.
        let s = RiskSurface::new(factors(2), vec![1.0, 0.25, 0.25, 0.0625]).unwrap();
        let warnings = protective_warnings(&s);
        assert_eq!(warnings.len(), 2);
        assert_eq!(warnings[0].factor, 0);
        assert!(warnings[0].to_string().contains("protective"));

        assert_eq!(enforce_policy(&s, ProtectivePolicy::Allow).unwrap(), vec![]);
        assert_eq!(enforce_policy(&s, ProtectivePolicy::Warn).unwrap().len(), 2);
        assert!(enforce_policy(&s, ProtectivePolicy::Deny).is_err());

        let risk = two_factor_multiplicative_null();
        assert!(protective_warnings(&risk).is_empty());
        assert!(enforce_policy(&risk, ProtectivePolicy::Deny).is_ok());
    }
}
