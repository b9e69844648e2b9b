//! Multiplicative-scale interaction indices and the cross-scale relation.
//!
//! * **TotI** — total multiplicative interaction: the ratio of the joint
//!   relative risk to the product of the single-factor relative risks,
//!   `rr(all) / Π_i rr(only i)`. Equivalently `exp` of the sum of every
//!   product-term coefficient (order ≥ 2) of the saturated model.
//! * **I** — top-order multiplicative interaction: `exp` of the coefficient
//!   on the all-factors product term alone.
//! * **Conditional I** — for an active subset `A` with the remaining factors
//!   pinned present (`P`) or absent, `exp` of the sum of the coefficients on
//!   the subsets `T` with `A ⊆ T ⊆ A ∪ P`. This is the top coefficient of
//!   the sub-model obtained by restricting the lattice to `P ⊆ S ⊆ P ∪ A`
//!   and re-referencing at `P`.
//!
//! The additive and multiplicative scales are linked when every factor is a
//! risk factor (all singleton rr > 1): multiplicative or super-multiplicative
//! joint effects (`TotI ≥ 1`) force super-additivity (`TotRERI > 0`), and
//! contrapositively sub-additivity (`TotRERI ≤ 0`) forces `TotI < 1`.
//! [`scale_relation_check`] evaluates both implications on a surface.

use crate::additive::{tot_reri, Conditioning};
use crate::coefficients::CoefficientTable;
use crate::error::Result;
use crate::lattice::RiskSurface;

/// Total multiplicative interaction: `rr(all) / Π_i rr(only i)`.
pub fn tot_i(surface: &RiskSurface) -> f64 {
    let n = surface.factor_count();
    let mut denom = 1.0;
    for i in 0..n {
        denom *= surface.singleton_rr(i);
    }
    surface.top_rr() / denom
}

/// Top-order multiplicative interaction: `exp` of the coefficient on the
/// product term involving every factor.
pub fn i_top(table: &CoefficientTable) -> Result<f64> {
    table.require_saturated()?;
    Ok(table.top_value().expect("saturated table").exp())
}

/// Conditional multiplicative interaction among the active factors given the
/// conditioned-present set `P` (and the rest absent):
/// `exp( Σ of beta_T over A ⊆ T ⊆ A ∪ P )`.
pub fn i_conditional(table: &CoefficientTable, conditioning: &Conditioning) -> Result<f64> {
    table.require_saturated()?;
    let n = table.factors().len();
    if conditioning.factor_count() != n {
        return Err(crate::error::Error::InvalidConditioning(format!(
            "conditioning is over {} factors but the table has {n}",
            conditioning.factor_count()
        )));
    }
    let active = conditioning.active().bits();
    let present = conditioning.present().bits();
    // Sum beta over subsets T = active | (subset of present).
    let mut log_sum = 0.0;
    let mut extra = present;
    loop {
        log_sum += table.value(active | extra).expect("saturated table");
        if extra == 0 {
            break;
        }
        extra = (extra - 1) & present;
    }
    Ok(log_sum.exp())
}

/// Outcome of checking the additive/multiplicative scale relation on a
/// surface. The implications are only theorems when every factor is
/// risk-oriented (`hypothesis_met`); otherwise they are reported as
/// inapplicable (`None`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRelation {
    pub tot_i: f64,
    pub tot_reri: f64,
    /// All singleton relative risks strictly above 1.
    pub hypothesis_met: bool,
    /// `TotI ≥ 1 ⇒ TotRERI > 0`; `None` when the hypothesis fails or the
    /// implication is vacuous (TotI < 1).
    pub super_multiplicative_implies_super_additive: Option<bool>,
    /// `TotRERI ≤ 0 ⇒ TotI < 1`; `None` when the hypothesis fails or the
    /// implication is vacuous (TotRERI > 0).
    pub sub_additive_implies_sub_multiplicative: Option<bool>,
}

impl ScaleRelation {
    /// False only if a non-vacuous implication failed — which would mean the
    /// surface violates a theorem and something upstream is wrong.
    pub fn consistent(&self) -> bool {
        self.super_multiplicative_implies_super_additive != Some(false)
            && self.sub_additive_implies_sub_multiplicative != Some(false)
    }
}

/// Evaluates both scale-relation implications on a surface.
pub fn scale_relation_check(surface: &RiskSurface) -> ScaleRelation {
    let ti = tot_i(surface);
    let tr = tot_reri(surface);
    let hypothesis_met = (0..surface.factor_count()).all(|i| surface.singleton_rr(i) > 1.0);
    let (sup, sub) = if hypothesis_met {
        (
            if ti >= 1.0 { Some(tr > 0.0) } else { None },
            if tr <= 0.0 { Some(ti < 1.0) } else { None },
        )
    } else {
        (None, None)
    };
    ScaleRelation {
        tot_i: ti,
        tot_reri: tr,
        hypothesis_met,
        super_multiplicative_implies_super_additive: sup,
        sub_additive_implies_sub_multiplicative: sub,
    }
}
