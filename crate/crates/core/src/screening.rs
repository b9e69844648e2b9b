//! Qualitative-interaction screening, protective-factor detection, and the
//! recommended analysis pipeline.
//!
//! [`run_pipeline`] is the one-call entry point: it takes either a fitted
//! coefficient table (with optional covariance) or raw cohort data, screens
//! factor orientations and optionally recodes protective factors, computes
//! every additive index (total, top-order, and all lower-order RERIs
//! conditioned on the remaining factors being all absent or all present),
//! adds the multiplicative indices as a supplementary section, screens for
//! qualitative interaction, and returns a serializable
//! [`InteractionReport`] with confidence intervals wherever a covariance
//! matrix is available.

use indexmap::IndexMap;

use crate::additive::{
    enforce_policy, protective_warnings, reri_conditional, reri_n, tot_reri, Conditioning,
    ProtectivePolicy, ProtectiveWarning,
};
use crate::coefficients::{CoefficientTable, CovarianceBlock};
use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::factors::{FactorSet, Orientation};
use crate::fit::{fit_logistic, ExposureModel};
use crate::inference::{
    build_expression, confidence_interval, delta_variance, ConfidenceLevel, IndexKind,
};
use crate::lattice::{flip_factor_coefficients, surface_from_coefficients, ExposurePattern,
    RiskSurface};
use crate::multiplicative::{i_conditional, i_top, scale_relation_check, tot_i};
use crate::report::{
    Ci, InputDigest, InteractionReport, OrientationFlag, Provenance, QualitativeFinding,
};

/// One comparison where adding a factor failed to raise risk.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitativeViolation {
    pub factor: usize,
    /// Background pattern over the remaining factors (the screened factor's
    /// bit is always 0).
    pub context: ExposurePattern,
    pub rr_with: f64,
    pub rr_without: f64,
}

/// Result of the qualitative screen: the violations plus how many ordered
/// comparisons were made (`n * 2^(n-1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct QualitativeScreen {
    pub violations: Vec<QualitativeViolation>,
    pub comparisons: usize,
}

/// Checks, for every factor and every context over the remaining factors,
/// that adding the factor raises risk by more than `epsilon`. A violation is
/// emitted when `rr(context + factor) - rr(context) <= epsilon`, so with the
/// default `epsilon = 0` exact ties count as violations: an empty list means
/// every factor strictly raises risk everywhere.
pub fn qualitative_violations(
    surface: &RiskSurface,
    epsilon: f64,
) -> Result<QualitativeScreen> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "qualitative tolerance must be finite and >= 0, got {epsilon}"
        )));
    }
    let n = surface.factor_count();
    let mut violations = Vec::new();
    let mut comparisons = 0usize;
    for factor in 0..n {
        let bit = 1u32 << factor;
        for mask in 0..(1u32 << n) {
            if mask & bit != 0 {
                continue;
            }
            comparisons += 1;
            let rr_without = surface.values()[mask as usize];
            let rr_with = surface.values()[(mask | bit) as usize];
            if rr_with - rr_without <= epsilon {
                violations.push(QualitativeViolation {
                    factor,
                    context: ExposurePattern::from_bits(mask),
                    rr_with,
                    rr_without,
                });
            }
        }
    }
    Ok(QualitativeScreen {
        violations,
        comparisons,
    })
}

/// What to screen for protective orientations.
#[derive(Debug, Clone, Copy)]
pub enum ProtectiveInput<'a> {
    /// A known risk surface: factors with singleton rr < 1 are flagged.
    Surface(&'a RiskSurface),
    /// Raw data: a main-effects-only logistic model is fitted and factors
    /// with a negative main effect are flagged.
    Data(&'a DataTable),
}

/// Screens factor orientations. The returned warnings carry the singleton
/// relative-risk estimate that triggered each flag.
pub fn detect_protective(input: ProtectiveInput<'_>) -> Result<Vec<ProtectiveWarning>> {
    match input {
        ProtectiveInput::Surface(surface) => Ok(protective_warnings(surface)),
        ProtectiveInput::Data(data) => {
            let fit = fit_logistic(data, ExposureModel::MainsOnly)?;
            let factors = data.factors();
            Ok((0..factors.len())
                .filter_map(|i| {
                    let beta = fit
                        .coefficients
                        .value(1 << i)
                        .expect("mains-only fit has every singleton");
                    (beta < 0.0).then(|| ProtectiveWarning {
                        factor: i,
                        name: factors.name(i).to_string(),
                        rr: beta.exp(),
                    })
                })
                .collect())
        }
    }
}

/// Input to the analysis pipeline.
#[derive(Debug, Clone)]
pub enum PipelineInput {
    /// An already-fitted saturated model.
    Coefficients {
        table: CoefficientTable,
        covariance: Option<CovarianceBlock>,
        outcome: Option<String>,
    },
    /// Raw cohort data; the pipeline fits the saturated model itself.
    Data(DataTable),
}

/// Pipeline settings. The defaults recode protective factors, warn (rather
/// than fail) if any slip through, use a strict qualitative screen, and
/// produce 95% intervals.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Tolerance for the qualitative screen.
    pub epsilon: f64,
    /// What to do if the analyzed surface still has a protective factor.
    pub policy: ProtectivePolicy,
    /// Recode flagged factors (swap presence/absence) before computing.
    pub recode_protective: bool,
    pub level: ConfidenceLevel,
    /// Input digests to stamp into the report's provenance.
    pub inputs: Vec<InputDigest>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            epsilon: 0.0,
            policy: ProtectivePolicy::Warn,
            recode_protective: true,
            level: ConfidenceLevel::NinetyFive,
            inputs: Vec::new(),
        }
    }
}

/// Keeps an error's numerical/input classification while recording which
/// pipeline step it came from.
fn at_step(step: &str, e: Error) -> Error {
    if e.is_numerical() {
        Error::Numerical(format!("{step}: {e}"))
    } else {
        Error::InvalidArgument(format!("{step}: {e}"))
    }
}

fn conditional_key(prefix: &str, factors: &FactorSet, c: &Conditioning) -> String {
    let n = factors.len();
    let active: Vec<&str> = (0..n)
        .filter(|&i| c.active().contains(i))
        .map(|i| factors.name(i))
        .collect();
    let conditions: Vec<String> = (0..n)
        .filter(|&i| !c.active().contains(i))
        .map(|i| {
            format!(
                "{}={}",
                factors.name(i),
                u8::from(c.present().contains(i))
            )
        })
        .collect();
    format!(
        "{prefix}{}({}|{})",
        c.order(),
        active.join(","),
        conditions.join(",")
    )
}

/// All lower-order conditionings emitted by the pipeline: every subset of
/// 2 ≤ size < n, with the remaining factors all at `level` (absent or
/// present). Subsets are enumerated small-to-large, then by factor position.
fn lower_order_conditionings(n: usize, present_rest: bool) -> Vec<Conditioning> {
    let full = (1u32 << n) - 1;
    CoefficientTable::canonical_subsets(n)
        .into_iter()
        .filter(|m| {
            let k = m.count_ones() as usize;
            k >= 2 && k < n
        })
        .map(|active| {
            let rest = full & !active;
            let present = if present_rest { rest } else { 0 };
            Conditioning::new(n, active, present).expect("masks are valid by construction")
        })
        .collect()
}

struct ReportBuilder<'a> {
    table: &'a CoefficientTable,
    covariance: Option<&'a CovarianceBlock>,
    level: ConfidenceLevel,
    estimates: IndexMap<String, f64>,
    cis: IndexMap<String, Ci>,
}

impl<'a> ReportBuilder<'a> {
    /// Inserts an index estimate, with a delta-method Wald interval on the
    /// index scale when a covariance matrix is available.
    fn push_index(&mut self, key: String, kind: &IndexKind, value: f64) -> Result<()> {
        self.estimates.insert(key.clone(), value);
        if let Some(cov) = self.covariance {
            let n = self.table.factors().len();
            let expression = build_expression(kind, n)?;
            let (_, variance) = delta_variance(&expression, self.table, cov)
                .map_err(|e| at_step("confidence intervals", e))?;
            let (lower, upper) = confidence_interval(value, variance, self.level)?;
            self.cis.insert(
                key,
                Ci {
                    se: variance.sqrt(),
                    lower,
                    upper,
                    level: self.level.level(),
                },
            );
        }
        Ok(())
    }

    /// Inserts one ratio row `exp(coefficient)`. Ratio intervals are
    /// computed on the log scale (the `se` stored is the log-scale one), the
    /// convention ratio estimates are reported in.
    fn push_ratio_rows(&mut self) -> Result<()> {
        let n = self.table.factors().len();
        let subsets = CoefficientTable::canonical_subsets(n);
        for (position, &mask) in subsets.iter().enumerate() {
            let beta = self
                .table
                .value(mask)
                .expect("pipeline tables are saturated");
            let key = format!("RR({})", self.table.label(mask));
            self.estimates.insert(key.clone(), beta.exp());
            if let Some(cov) = self.covariance {
                let variance = cov.variance(position);
                if variance < 0.0 {
                    return Err(Error::Covariance(format!(
                        "variance of coefficient {:?} is negative",
                        self.table.label(mask)
                    )));
                }
                let se = variance.sqrt();
                let z = self.level.z();
                self.cis.insert(
                    key,
                    Ci {
                        se,
                        lower: (beta - z * se).exp(),
                        upper: (beta + z * se).exp(),
                        level: self.level.level(),
                    },
                );
            }
        }
        Ok(())
    }
}

/// Runs the recommended analysis end to end and assembles the report.
///
/// Step order: orientation screen and recoding; coefficients (as ratio
/// rows); total additive interaction; top-order RERI; lower-order RERIs
/// with the remaining factors absent, then present; the qualitative screen;
/// and the multiplicative indices as a supplementary section in the same
/// order. Interval rows appear wherever the input carried (or the fit
/// produced) a covariance matrix.
pub fn run_pipeline(
    input: &PipelineInput,
    options: &PipelineOptions,
) -> Result<InteractionReport> {
    let mut warnings: Vec<String> = Vec::new();
    let mut flags: Vec<OrientationFlag> = Vec::new();

    // Step 1: orientation screen (and recoding), then obtain the analyzed
    // saturated model (step 2).
    let (table, covariance, outcome) = match input {
        PipelineInput::Coefficients {
            table,
            covariance,
            outcome,
        } => {
            table
                .require_saturated()
                .map_err(|e| at_step("loading coefficients", e))?;
            let surface =
                surface_from_coefficients(table).map_err(|e| at_step("risk surface", e))?;

            // declared orientations are verified, not trusted
            let factors = table.factors();
            for i in 0..factors.len() {
                let rr = surface.singleton_rr(i);
                match factors.orientation(i) {
                    Orientation::Protective if rr >= 1.0 => warnings.push(format!(
                        "factor {:?} is declared protective but its singleton rr is {rr:.4}",
                        factors.name(i)
                    )),
                    Orientation::Risk if rr < 1.0 => warnings.push(format!(
                        "factor {:?} is declared a risk factor but its singleton rr is {rr:.4}",
                        factors.name(i)
                    )),
                    _ => {}
                }
            }

            let detected = detect_protective(ProtectiveInput::Surface(&surface))?;
            let recode = options.recode_protective && !detected.is_empty();
            for w in &detected {
                flags.push(OrientationFlag {
                    factor: w.name.clone(),
                    source: "surface".into(),
                    estimate: w.rr,
                    recoded: recode,
                });
            }
            if recode {
                let mut current = table.clone();
                let mut cov = covariance.clone();
                for w in &detected {
                    let (next, next_cov) =
                        flip_factor_coefficients(&current, cov.as_ref(), w.factor)
                            .map_err(|e| at_step("recoding", e))?;
                    current = next;
                    cov = next_cov;
                }
                (current, cov, outcome.clone())
            } else {
                (table.clone(), covariance.clone(), outcome.clone())
            }
        }
        PipelineInput::Data(data) => {
            let detected = detect_protective(ProtectiveInput::Data(data))
                .map_err(|e| at_step("orientation screen", e))?;
            let recode = options.recode_protective && !detected.is_empty();
            for w in &detected {
                flags.push(OrientationFlag {
                    factor: w.name.clone(),
                    source: "data".into(),
                    estimate: w.rr,
                    recoded: recode,
                });
            }
            let analyzed = if recode {
                let mask = detected.iter().fold(0u32, |m, w| m | (1 << w.factor));
                data.with_recoded_factors(mask)
                    .map_err(|e| at_step("recoding", e))?
            } else {
                data.clone()
            };
            let fit = fit_logistic(&analyzed, ExposureModel::Saturated)
                .map_err(|e| at_step("model fit", e))?;
            warnings.extend(fit.warnings.iter().cloned());
            if !fit.converged {
                warnings.push(format!(
                    "the model fit did not converge in {} iterations; estimates and intervals \
                     are unreliable",
                    fit.iterations
                ));
            }
            (
                fit.coefficients,
                fit.covariance,
                Some(data.outcome_name().to_string()),
            )
        }
    };

    let surface =
        surface_from_coefficients(&table).map_err(|e| at_step("risk surface", e))?;
    for w in enforce_policy(&surface, options.policy)
        .map_err(|e| at_step("orientation policy", e))?
    {
        warnings.push(w.to_string());
    }

    let factors = table.factors().clone();
    let n = factors.len();
    let mut builder = ReportBuilder {
        table: &table,
        covariance: covariance.as_ref(),
        level: options.level,
        estimates: IndexMap::new(),
        cis: IndexMap::new(),
    };

    // Step 2: the model itself, as ratio rows.
    builder.push_ratio_rows()?;

    // Steps 3 and 4: total and top-order additive interaction.
    builder.push_index(
        format!("TotRERI{n}"),
        &IndexKind::TotReri,
        tot_reri(&surface),
    )?;
    builder.push_index(format!("RERI{n}"), &IndexKind::ReriN, reri_n(&surface))?;

    // Steps 5 and 6: lower-order RERIs, remaining factors absent then
    // present.
    for present_rest in [false, true] {
        for c in lower_order_conditionings(n, present_rest) {
            let value = reri_conditional(&surface, &c)
                .map_err(|e| at_step("conditional indices", e))?;
            builder.push_index(
                conditional_key("RERI", &factors, &c),
                &IndexKind::ReriConditional(c),
                value,
            )?;
        }
    }

    // Supplementary multiplicative section, in the same order.
    builder.push_index(format!("TotI{n}"), &IndexKind::TotI, tot_i(&surface))?;
    builder.push_index(
        format!("I{n}"),
        &IndexKind::ITop,
        i_top(&table).map_err(|e| at_step("multiplicative indices", e))?,
    )?;
    for present_rest in [false, true] {
        for c in lower_order_conditionings(n, present_rest) {
            let value = i_conditional(&table, &c)
                .map_err(|e| at_step("multiplicative indices", e))?;
            builder.push_index(
                conditional_key("I", &factors, &c),
                &IndexKind::IConditional(c),
                value,
            )?;
        }
    }

    // Steps 7/8: qualitative screen on the analyzed surface.
    let screen = qualitative_violations(&surface, options.epsilon)
        .map_err(|e| at_step("qualitative screen", e))?;
    let qualitative = screen
        .violations
        .iter()
        .map(|v| QualitativeFinding {
            factor: factors.name(v.factor).to_string(),
            context: v.context.to_bitstring(n),
            rr_with: v.rr_with,
            rr_without: v.rr_without,
        })
        .collect();

    // The additive and multiplicative scales must tell a coherent story
    // when every factor is risk-oriented; a violation here means the
    // numbers themselves cannot be trusted.
    let relation = scale_relation_check(&surface);
    if !relation.consistent() {
        warnings.push(
            "additive and multiplicative indices violate their scale relation; check the \
             inputs for numerical problems"
                .into(),
        );
    }

    Ok(InteractionReport {
        factors: factors.names().to_vec(),
        outcome,
        estimates: builder.estimates,
        cis: builder.cis,
        qualitative,
        qualitative_comparisons: screen.comparisons,
        flags,
        warnings,
        provenance: Provenance::new(options.inputs.clone()),
    })
}
