//! The interaction report: a serializable summary of one analysis.
//!
//! A report lists the factor set, every computed index in a fixed
//! presentation order (hazard/risk ratios first, then additive indices from
//! low order to total, then the multiplicative ones), confidence intervals
//! where a covariance matrix was available, qualitative-interaction
//! findings, orientation flags, warnings, and input digests. The JSON form
//! is the machine interface and round-trips exactly; the table form is a
//! human summary.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A symmetric (or, for ratio rows, log-scale) confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ci {
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    /// Coverage level as a fraction, e.g. 0.95.
    pub level: f64,
}

/// One qualitative-interaction comparison that crossed the threshold: adding
/// `factor` on top of `context` did not increase risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitativeFinding {
    pub factor: String,
    /// Bitstring of the background pattern the factor was added to.
    pub context: String,
    pub rr_with: f64,
    pub rr_without: f64,
}

/// A factor whose coding looked (or was declared) protective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationFlag {
    pub factor: String,
    /// Where the call came from: `"declared"` or `"estimated"`.
    pub source: String,
    /// The singleton relative risk (or its estimate) that triggered it.
    pub estimate: f64,
    /// Whether the analysis recoded the factor (swapped presence/absence).
    pub recoded: bool,
}

/// A named input and its SHA-256 digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDigest {
    pub label: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    /// Provenance stamped with this library's version.
    pub fn new(inputs: Vec<InputDigest>) -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
        }
    }
}

/// The full result of one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionReport {
    pub factors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    /// Index estimates in presentation order.
    pub estimates: IndexMap<String, f64>,
    /// Confidence intervals for the subset of `estimates` that have one.
    pub cis: IndexMap<String, Ci>,
    /// Comparisons where adding a factor failed to increase risk.
    pub qualitative: Vec<QualitativeFinding>,
    /// How many ordered comparisons the qualitative screen performed.
    pub qualitative_comparisons: usize,
    pub flags: Vec<OrientationFlag>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Output encodings for a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Table,
}

/// Renders a report in the requested format. JSON output round-trips through
/// [`parse_report`] exactly.
pub fn emit_report(report: &InteractionReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut text =
                serde_json::to_string_pretty(report).expect("report serialization cannot fail");
            text.push('\n');
            text
        }
        ReportFormat::Table => render_table(report),
    }
}

/// Parses a JSON report back into memory.
pub fn parse_report(text: &str) -> Result<InteractionReport> {
    Ok(serde_json::from_str(text)?)
}

fn render_table(report: &InteractionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("factors: {}\n", report.factors.join(", ")));
    if let Some(outcome) = &report.outcome {
        out.push_str(&format!("outcome: {outcome}\n"));
    }
    out.push('\n');

    let label_width = report
        .estimates
        .keys()
        .map(|k| k.len())
        .chain(["term".len()])
        .max()
        .unwrap_or(4);
    let level = report
        .cis
        .values()
        .next()
        .map(|ci| format!("{:.0}% CI", ci.level * 100.0))
        .unwrap_or_else(|| "CI".to_string());
    out.push_str(&format!(
        "{:<label_width$}  {:>9}  {:>8}  {}\n",
        "term", "estimate", "se", level
    ));
    for (key, value) in &report.estimates {
        match report.cis.get(key) {
            Some(ci) => out.push_str(&format!(
                "{key:<label_width$}  {value:>9.2}  {:>8.2}  ({:.2}, {:.2})\n",
                ci.se, ci.lower, ci.upper
            )),
            None => out.push_str(&format!("{key:<label_width$}  {value:>9.2}\n")),
        }
    }

    out.push('\n');
    if report.qualitative.is_empty() {
        out.push_str(&format!(
            "qualitative interaction: none detected in {} comparisons\n",
            report.qualitative_comparisons
        ));
    } else {
        out.push_str(&format!(
            "qualitative interaction: {} of {} comparisons\n",
            report.qualitative.len(),
            report.qualitative_comparisons
        ));
        for finding in &report.qualitative {
            out.push_str(&format!(
                "  adding {} to pattern {} moves rr {:.3} -> {:.3}\n",
                finding.factor, finding.context, finding.rr_without, finding.rr_with
            ));
        }
    }

    for flag in &report.flags {
        out.push_str(&format!(
            "flag: factor {} looks protective ({}, singleton rr {:.3}){}\n",
            flag.factor,
            flag.source,
            flag.estimate,
            if flag.recoded {
                "; recoded as its absence"
            } else {
                ""
            }
        ));
    }
    for warning in &report.warnings {
        out.push_str(&format!("warning: {warning}\n"));
    }
    out
}
