//! Maximum-likelihood logistic regression for cohort data.
//!
//! The design matrix is an intercept, the exposure terms, and any confounder
//! columns. For a saturated exposure model the terms are one indicator per
//! non-empty subset `T` of factors — `x_T = 1` when every factor in `T` is
//! present — in the canonical coefficient order, so the fitted exposure
//! coefficients drop straight into a [`CoefficientTable`] and their
//! covariance block into a [`CovarianceBlock`].
//!
//! Rows with identical covariates are pooled into binomial observations
//! before iterating, so a cohort of hundreds of thousands of subjects with a
//! handful of exposure patterns costs no more than its distinct rows. The
//! solver is iteratively reweighted least squares with step-halving on the
//! log-likelihood, a pre-fit rank check that names the first linearly
//! dependent column, and a divergence guard that reports the runaway column
//! when the data are separated.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::coefficients::{CoefficientTable, CovarianceBlock};
use crate::data::DataTable;
use crate::error::{Error, Result};

/// Which exposure terms enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureModel {
    /// Every non-empty subset of factors (indicator of joint presence).
    Saturated,
    /// Main effects only; used for orientation screening.
    MainsOnly,
}

/// A fitted logistic model.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Exposure-term estimates, keyed by factor subset.
    pub coefficients: CoefficientTable,
    /// Covariance of the exposure terms in canonical order; present only for
    /// converged saturated fits.
    pub covariance: Option<CovarianceBlock>,
    pub intercept: f64,
    /// Estimates for confounder design columns, in design order.
    pub confounder_estimates: Vec<(String, f64)>,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted IRLS step (starting value first).
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

const SCORE_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 50;
/// `|beta| > 30` means an odds ratio beyond e^30; no cohort supports that,
/// so the likelihood is drifting to a boundary (separated data).
const SEPARATION_BOUND: f64 = 30.0;
const SPARSE_CELL_EVENTS: usize = 5;

/// One pooled binomial observation.
struct PooledRow {
    x: DVector<f64>,
    subjects: f64,
    events: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_likelihood(rows: &[PooledRow], beta: &DVector<f64>) -> f64 {
    rows.iter()
        .map(|r| {
            let eta = r.x.dot(beta);
            -r.events * softplus(-eta) - (r.subjects - r.events) * softplus(eta)
        })
        .sum()
}

/// In-order Cholesky that reports the first column made redundant by the
/// ones before it, so the error can name the offending term.
fn rank_check(xtx: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let p = xtx.nrows();
    let scale = (0..p).map(|j| xtx[(j, j)]).fold(f64::MIN, f64::max);
    let tol = 1e-10 * scale.max(1.0);
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = xtx[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            return Err(Error::RankDeficient {
                column: names[j].clone(),
            });
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..p {
            let mut v = xtx[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(())
}

/// Fits a logistic regression of the table's outcome on its exposures (and
/// confounders, if any).
pub fn fit_logistic(data: &DataTable, model: ExposureModel) -> Result<FitResult> {
    let factors = data.factors().clone();
    let n = factors.len();

    let events = data.event_count();
    if events == 0 {
        return Err(Error::Data(
            "no events in the data; a logistic model cannot be fitted".into(),
        ));
    }
    if events == data.len() {
        return Err(Error::Data(
            "every subject has the event; a logistic model cannot be fitted".into(),
        ));
    }

    // Design columns: intercept, exposure subsets, confounders.
    let exposure_masks: Vec<u32> = match model {
        ExposureModel::Saturated => CoefficientTable::canonical_subsets(n),
        ExposureModel::MainsOnly => (0..n).map(|i| 1u32 << i).collect(),
    };
    let naming = CoefficientTable::new(factors.clone(), &[])?;
    let mut names = vec!["(intercept)".to_string()];
    names.extend(exposure_masks.iter().map(|&m| naming.label(m)));
    let confounder_columns: Vec<(String, Vec<f64>)> = data
        .confounders()
        .iter()
        .flat_map(|c| c.design_columns())
        .collect();
    names.extend(confounder_columns.iter().map(|(name, _)| name.clone()));
    let p = names.len();

    // Pool identical covariate rows into binomial observations.
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rows: Vec<PooledRow> = Vec::new();
    for (i, (pattern, &event)) in data.patterns().iter().zip(data.outcomes()).enumerate() {
        let mut x = DVector::<f64>::zeros(p);
        x[0] = 1.0;
        for (j, &mask) in exposure_masks.iter().enumerate() {
            x[1 + j] = f64::from(mask & pattern.bits() == mask);
        }
        for (k, (_, column)) in confounder_columns.iter().enumerate() {
            x[1 + exposure_masks.len() + k] = column[i];
        }
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let slot = *index.entry(key).or_insert_with(|| {
            rows.push(PooledRow {
                x,
                subjects: 0.0,
                events: 0.0,
            });
            rows.len() - 1
        });
        rows[slot].subjects += 1.0;
        rows[slot].events += f64::from(event);
    }

    // Rank check at beta = 0 (weights proportional to subject counts).
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    for r in &rows {
        xtx.syger(r.subjects, &r.x, &r.x, 1.0);
    }
    rank_check(&xtx, &names)?;

    let mut warnings = Vec::new();
    for (pattern, cell) in data.pattern_cells() {
        if cell.events < SPARSE_CELL_EVENTS || cell.subjects - cell.events < SPARSE_CELL_EVENTS {
            warnings.push(format!(
                "exposure pattern {} has {} events among {} subjects; estimates that touch it \
                 may be unstable",
                pattern.to_bitstring(n),
                cell.events,
                cell.subjects
            ));
        }
    }

    // Iteratively reweighted least squares with step-halving.
    let mut beta = DVector::<f64>::zeros(p);
    let mut ll = log_likelihood(&rows, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::<f64>::zeros(p, p);

    'outer: for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let mut score = DVector::<f64>::zeros(p);
        info.fill(0.0);
        for r in &rows {
            let eta = r.x.dot(&beta);
            let prob = 1.0 / (1.0 + (-eta).exp());
            let weight = r.subjects * prob * (1.0 - prob);
            score.axpy(r.events - r.subjects * prob, &r.x, 1.0);
            info.syger(weight, &r.x, &r.x, 1.0);
        }
        info.fill_upper_triangle_with_lower_triangle();

        if score.amax() < SCORE_TOLERANCE {
            converged = true;
            iterations = iter - 1;
            break;
        }

        let step = Cholesky::new(info.clone())
            .ok_or_else(|| {
                Error::Numerical(
                    "information matrix is not positive definite; the model cannot be fitted \
                     to these data"
                        .into(),
                )
            })?
            .solve(&score);

        let mut t = 1.0;
        loop {
            let candidate = &beta + t * &step;
            let candidate_ll = log_likelihood(&rows, &candidate);
            if candidate_ll + 1e-12 >= ll {
                beta = candidate;
                ll = candidate_ll;
                break;
            }
            t *= 0.5;
            if t < 1e-6 {
                warnings.push(
                    "step-halving failed to improve the likelihood; stopping early".into(),
                );
                break 'outer;
            }
        }
        trace.push(ll);

        if beta.amax() > SEPARATION_BOUND {
            let j = beta.iter().map(|b| b.abs()).enumerate().fold(
                (0, f64::MIN),
                |acc, (k, v)| if v > acc.1 { (k, v) } else { acc },
            );
            return Err(Error::Separation {
                column: names[j.0].clone(),
            });
        }
    }

    if !converged && iterations == MAX_ITERATIONS {
        warnings.push(format!(
            "stopped after {MAX_ITERATIONS} iterations without meeting the score tolerance"
        ));
    }

    // Exposure coefficients in canonical order.
    let entries: Vec<(u32, f64)> = exposure_masks
        .iter()
        .enumerate()
        .map(|(j, &mask)| (mask, beta[1 + j]))
        .collect();
    let coefficients = CoefficientTable::new(factors, &entries)?;

    let covariance = if converged && model == ExposureModel::Saturated {
        let full = Cholesky::new(info.clone())
            .ok_or_else(|| {
                Error::Numerical("information matrix is singular at the optimum".into())
            })?
            .inverse();
        let m = exposure_masks.len();
        let mut block = vec![vec![0.0; m]; m];
        for (i, row) in block.iter_mut().enumerate() {
            for (j, value) in row.iter_mut().enumerate() {
                // symmetrize against rounding in the inverse
                *value = 0.5 * (full[(1 + i, 1 + j)] + full[(1 + j, 1 + i)]);
            }
        }
        Some(CovarianceBlock::new(block)?)
    } else {
        None
    };

    let confounder_estimates = confounder_columns
        .iter()
        .enumerate()
        .map(|(k, (name, _))| (name.clone(), beta[1 + exposure_masks.len() + k]))
        .collect();

    Ok(FitResult {
        coefficients,
        covariance,
        intercept: beta[0],
        confounder_estimates,
        log_likelihood: ll,
        loglik_trace: trace,
        iterations,
        converged,
        warnings,
    })
}
