//! Delta-method inference for interaction indices.
//!
//! Every index in this crate — additive or multiplicative, total, top-order
//! or conditional — is a smooth function of the model coefficients of one
//! common shape:
//!
//! ```text
//! f(beta) = ( sum_k s_k * exp(<w_k, beta>) + c ) / exp(<w_0, beta>)
//! ```
//!
//! with integer weight vectors `w` over the coefficient entries (canonical
//! order), signs `s_k`, and a constant `c`. [`IndexExpression`] captures that
//! shape once, so numeric evaluation and the analytic gradient share a single
//! code path:
//!
//! ```text
//! df/dbeta_j = ( sum_k s_k w_kj exp(<w_k, beta>) ) / exp(<w_0, beta>)  -  f * w_0j
//! ```
//!
//! The delta-method variance is then `g' Sigma g` with `g` the gradient at
//! the estimate, and confidence intervals are symmetric Wald intervals
//! `estimate ± z * sqrt(variance)` on the index scale (no log transform),
//! which is the convention used for RERI-type indices.

use crate::additive::Conditioning;
use crate::coefficients::{CoefficientTable, CovarianceBlock};
use crate::error::{Error, Result};
use crate::factors::MAX_FACTORS;

/// The interaction indices an [`IndexExpression`] can represent.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexKind {
    /// Total additive interaction `TotRERI_n`.
    TotReri,
    /// Top-order additive interaction `RERI_n`.
    ReriN,
    /// Lower-order additive interaction under a [`Conditioning`].
    ReriConditional(Conditioning),
    /// Total multiplicative interaction `TotI_n`.
    TotI,
    /// Top-order multiplicative interaction `I_n`.
    ITop,
    /// Lower-order multiplicative interaction under a [`Conditioning`].
    IConditional(Conditioning),
}

/// One signed exponential term `sign * exp(<weights, beta>)`.
#[derive(Debug, Clone, PartialEq)]
struct ExpTerm {
    sign: f64,
    weights: Vec<i32>,
}

/// A closed-form index as a differentiable expression in the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexExpression {
    n: usize,
    terms: Vec<ExpTerm>,
    constant: f64,
    /// Weight vector of the denominator `exp(<w_0, beta>)`; all zero means 1.
    denominator: Vec<i32>,
}

/// Builds the weight-vector machinery for `n` factors: canonical subsets and
/// a mask -> canonical position lookup.
struct EntryIndex {
    subsets: Vec<u32>,
    position: Vec<usize>,
}

impl EntryIndex {
    fn new(n: usize) -> Self {
        let subsets = CoefficientTable::canonical_subsets(n);
        let mut position = vec![0usize; 1 << n];
        for (i, &mask) in subsets.iter().enumerate() {
            position[mask as usize] = i;
        }
        EntryIndex { subsets, position }
    }

    fn len(&self) -> usize {
        self.subsets.len()
    }

    /// Weights of `ln rr(pattern)`: one for every non-empty subset of the
    /// pattern, since `ln rr(S) = sum of beta_T over T ⊆ S`.
    fn pattern_weights(&self, pattern: u32) -> Vec<i32> {
        let mut w = vec![0i32; self.len()];
        let mut t = pattern;
        loop {
            if t != 0 {
                w[self.position[t as usize]] = 1;
            } else {
                break;
            }
            t = (t - 1) & pattern;
        }
        w
    }
}

/// Constructs the [`IndexExpression`] for an index over `n` factors.
pub fn build_expression(kind: &IndexKind, n: usize) -> Result<IndexExpression> {
    if !(2..=MAX_FACTORS).contains(&n) {
        return Err(Error::FactorCount(n));
    }
    let idx = EntryIndex::new(n);
    let m = idx.len();
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut denominator = vec![0i32; m];

    match kind {
        IndexKind::TotReri => {
            terms.push(ExpTerm {
                sign: 1.0,
                weights: idx.pattern_weights((1u32 << n) - 1),
            });
            for i in 0..n {
                terms.push(ExpTerm {
                    sign: -1.0,
                    weights: idx.pattern_weights(1 << i),
                });
            }
            constant = n as f64 - 1.0;
        }
        IndexKind::ReriN => {
            for mask in 1..(1u32 << n) {
                let sign = if (n as u32 - mask.count_ones()) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                terms.push(ExpTerm {
                    sign,
                    weights: idx.pattern_weights(mask),
                });
            }
            // the empty pattern contributes rr(∅) = 1 with sign (-1)^n
            constant = if n % 2 == 0 { 1.0 } else { -1.0 };
        }
        IndexKind::ReriConditional(c) => {
            check_conditioning(c, n)?;
            let active = c.active().bits();
            let present = c.present().bits();
            let order = c.order() as u32;
            let mut b = active;
            loop {
                let sign = if (order - b.count_ones()) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                let pattern = present | b;
                if pattern == 0 {
                    constant += sign;
                } else {
                    terms.push(ExpTerm {
                        sign,
                        weights: idx.pattern_weights(pattern),
                    });
                }
                if b == 0 {
                    break;
                }
                b = (b - 1) & active;
            }
            denominator = idx.pattern_weights(present);
        }
        IndexKind::TotI => {
            // TotI = exp( sum of beta_T over |T| >= 2 )
            let mut weights = vec![0i32; m];
            for (i, &mask) in idx.subsets.iter().enumerate() {
                if mask.count_ones() >= 2 {
                    weights[i] = 1;
                }
            }
            terms.push(ExpTerm { sign: 1.0, weights });
        }
        IndexKind::ITop => {
            let mut weights = vec![0i32; m];
            weights[idx.position[((1u32 << n) - 1) as usize]] = 1;
            terms.push(ExpTerm { sign: 1.0, weights });
        }
        IndexKind::IConditional(c) => {
            check_conditioning(c, n)?;
            let active = c.active().bits();
            let present = c.present().bits();
            let mut weights = vec![0i32; m];
            let mut extra = present;
            loop {
                weights[idx.position[(active | extra) as usize]] = 1;
                if extra == 0 {
                    break;
                }
                extra = (extra - 1) & present;
            }
            terms.push(ExpTerm { sign: 1.0, weights });
        }
    }

    Ok(IndexExpression {
        n,
        terms,
        constant,
        denominator,
    })
}

fn check_conditioning(c: &Conditioning, n: usize) -> Result<()> {
    if c.factor_count() != n {
        return Err(Error::InvalidConditioning(format!(
            "conditioning is over {} factors, expression over {n}",
            c.factor_count()
        )));
    }
    Ok(())
}

impl IndexExpression {
    pub fn factor_count(&self) -> usize {
        self.n
    }

    /// Number of exponential terms in the numerator.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Number of coefficient entries the expression expects (`2^n - 1`).
    pub fn entry_count(&self) -> usize {
        self.denominator.len()
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.entry_count() {
            return Err(Error::InvalidArgument(format!(
                "expression expects {} coefficients, got {}",
                self.entry_count(),
                beta.len()
            )));
        }
        Ok(())
    }

    fn dot(weights: &[i32], beta: &[f64]) -> f64 {
        weights
            .iter()
            .zip(beta)
            .map(|(&w, &b)| f64::from(w) * b)
            .sum()
    }

    /// Evaluates the index at a coefficient vector (canonical order).
    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        self.check_beta(beta)?;
        let mut numerator = self.constant;
        for term in &self.terms {
            numerator += term.sign * Self::dot(&term.weights, beta).exp();
        }
        Ok(numerator / Self::dot(&self.denominator, beta).exp())
    }

    /// Analytic gradient at a coefficient vector.
    pub fn gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_beta(beta)?;
        let m = beta.len();
        let denom = Self::dot(&self.denominator, beta).exp();
        let mut numerator = self.constant;
        let mut grad_num = vec![0.0f64; m];
        for term in &self.terms {
            let e = term.sign * Self::dot(&term.weights, beta).exp();
            numerator += e;
            for (g, &w) in grad_num.iter_mut().zip(&term.weights) {
                *g += e * f64::from(w);
            }
        }
        let f = numerator / denom;
        let grad = grad_num
            .iter()
            .zip(&self.denominator)
            .map(|(&gn, &w0)| gn / denom - f * f64::from(w0))
            .collect();
        Ok(grad)
    }
}

/// Tiny negative delta-method variances are rounding noise from a
/// positive-semi-definite covariance; anything more negative means the
/// supplied matrix was not a covariance matrix at all.
const VARIANCE_SLACK: f64 = -1e-12;

/// Point estimate and delta-method variance of an index:
/// `f(beta)` and `g' Sigma g` with `g` the analytic gradient.
pub fn delta_variance(
    expression: &IndexExpression,
    table: &CoefficientTable,
    covariance: &CovarianceBlock,
) -> Result<(f64, f64)> {
    let beta = table.values_canonical()?;
    if beta.len() != expression.entry_count() {
        return Err(Error::InvalidArgument(format!(
            "coefficient table has {} entries, expression expects {}",
            beta.len(),
            expression.entry_count()
        )));
    }
    if covariance.dim() != beta.len() {
        return Err(Error::Covariance(format!(
            "covariance is {0}x{0} but the model has {1} coefficients",
            covariance.dim(),
            beta.len()
        )));
    }
    let estimate = expression.value(&beta)?;
    let grad = expression.gradient(&beta)?;
    if !estimate.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(
            "index or gradient overflowed during delta-method evaluation".into(),
        ));
    }
    let m = beta.len();
    let mut variance = 0.0;
    for i in 0..m {
        for j in 0..m {
            variance += grad[i] * covariance.get(i, j) * grad[j];
        }
    }
    if !variance.is_finite() {
        return Err(Error::Numerical("delta-method variance overflowed".into()));
    }
    if variance < VARIANCE_SLACK {
        return Err(Error::Numerical(format!(
            "delta-method variance is negative ({variance:e}); the covariance matrix is not \
             positive semi-definite"
        )));
    }
    Ok((estimate, variance.max(0.0)))
}

/// Supported Wald confidence levels, with their standard-normal quantiles
/// pinned as constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfidenceLevel {
    Ninety,
    #[default]
    NinetyFive,
    NinetyNine,
}

impl ConfidenceLevel {
    /// Two-sided standard-normal quantile `z` for the level.
    pub fn z(self) -> f64 {
        match self {
            ConfidenceLevel::Ninety => 1.644854,
            ConfidenceLevel::NinetyFive => 1.959964,
            ConfidenceLevel::NinetyNine => 2.575829,
        }
    }

    pub fn level(self) -> f64 {
        match self {
            ConfidenceLevel::Ninety => 0.90,
            ConfidenceLevel::NinetyFive => 0.95,
            ConfidenceLevel::NinetyNine => 0.99,
        }
    }
}

/// Symmetric Wald interval `estimate ± z * sqrt(variance)` on the index
/// scale. Zero variance yields the degenerate interval at the estimate.
pub fn confidence_interval(
    estimate: f64,
    variance: f64,
    level: ConfidenceLevel,
) -> Result<(f64, f64)> {
    if !estimate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "estimate must be finite, got {estimate}"
        )));
    }
    if !variance.is_finite() || variance < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "variance must be finite and non-negative, got {variance}"
        )));
    }
    let half = level.z() * variance.sqrt();
    Ok((estimate - half, estimate + half))
}
