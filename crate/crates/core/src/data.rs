//! Raw cohort data: CSV parsing, per-pattern cell counts, and recoding.
//!
//! A data table holds one row per subject: the binary exposure pattern, the
//! binary outcome, and optional confounder columns. Factor and outcome
//! columns must contain literally `0` or `1`. A confounder column whose every
//! cell parses as a number is treated as numeric (one design column);
//! otherwise it is categorical and expands into indicator columns against
//! the alphabetically first level as reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::lattice::ExposurePattern;

/// One confounder column, already classified.
#[derive(Debug, Clone, PartialEq)]
pub enum Confounder {
    Numeric {
        name: String,
        values: Vec<f64>,
    },
    /// `levels` sorted; `codes[i]` indexes into `levels`. The first level is
    /// the reference and gets no indicator column.
    Categorical {
        name: String,
        levels: Vec<String>,
        codes: Vec<usize>,
    },
}

impl Confounder {
    pub fn name(&self) -> &str {
        match self {
            Confounder::Numeric { name, .. } => name,
            Confounder::Categorical { name, .. } => name,
        }
    }

    /// Expands the confounder into named design columns.
    pub fn design_columns(&self) -> Vec<(String, Vec<f64>)> {
        match self {
            Confounder::Numeric { name, values } => vec![(name.clone(), values.clone())],
            Confounder::Categorical {
                name,
                levels,
                codes,
            } => levels[1..]
                .iter()
                .enumerate()
                .map(|(k, level)| {
                    let column = codes
                        .iter()
                        .map(|&c| if c == k + 1 { 1.0 } else { 0.0 })
                        .collect();
                    (format!("{name}={level}"), column)
                })
                .collect(),
        }
    }

    fn cell_text(&self, row: usize) -> String {
        match self {
            Confounder::Numeric { values, .. } => format!("{}", values[row]),
            Confounder::Categorical { levels, codes, .. } => levels[codes[row]].clone(),
        }
    }
}

/// Subject-level binary-exposure data with outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    factors: FactorSet,
    outcome_name: String,
    patterns: Vec<ExposurePattern>,
    outcomes: Vec<bool>,
    confounders: Vec<Confounder>,
}

/// Subject and event counts for one exposure pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellCount {
    pub subjects: usize,
    pub events: usize,
}

impl DataTable {
    pub fn new(
        factors: FactorSet,
        outcome_name: impl Into<String>,
        patterns: Vec<ExposurePattern>,
        outcomes: Vec<bool>,
    ) -> Result<Self> {
        if patterns.len() != outcomes.len() {
            return Err(Error::Data(format!(
                "{} exposure patterns but {} outcomes",
                patterns.len(),
                outcomes.len()
            )));
        }
        if patterns.is_empty() {
            return Err(Error::Data("data table has no rows".into()));
        }
        let full = factors.full_mask();
        if let Some(p) = patterns.iter().find(|p| p.bits() & !full != 0) {
            return Err(Error::Data(format!(
                "exposure pattern {} uses factors beyond the {} declared",
                p.bits(),
                factors.len()
            )));
        }
        Ok(DataTable {
            factors,
            outcome_name: outcome_name.into(),
            patterns,
            outcomes,
            confounders: Vec::new(),
        })
    }

    pub fn factors(&self) -> &FactorSet {
        &self.factors
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[ExposurePattern] {
        &self.patterns
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn confounders(&self) -> &[Confounder] {
        &self.confounders
    }

    pub fn event_count(&self) -> usize {
        self.outcomes.iter().filter(|&&y| y).count()
    }

    /// Subject/event counts per observed exposure pattern, ascending by mask.
    pub fn pattern_cells(&self) -> Vec<(ExposurePattern, CellCount)> {
        let mut cells: BTreeMap<u32, CellCount> = BTreeMap::new();
        for (pattern, &event) in self.patterns.iter().zip(&self.outcomes) {
            let cell = cells.entry(pattern.bits()).or_default();
            cell.subjects += 1;
            cell.events += usize::from(event);
        }
        cells
            .into_iter()
            .map(|(bits, cell)| (ExposurePattern::from_bits(bits), cell))
            .collect()
    }

    /// A copy with every factor in `mask` recoded (presence and absence
    /// swapped) by XOR-ing each subject's pattern. Confounders and outcomes
    /// are unchanged; callers are responsible for reporting the recoding.
    pub fn with_recoded_factors(&self, mask: u32) -> Result<DataTable> {
        if mask & !self.factors.full_mask() != 0 {
            return Err(Error::InvalidArgument(format!(
                "recode mask {mask:#b} uses factors beyond the {} declared",
                self.factors.len()
            )));
        }
        let mut recoded = self.clone();
        for pattern in &mut recoded.patterns {
            *pattern = ExposurePattern::from_bits(pattern.bits() ^ mask);
        }
        Ok(recoded)
    }

    /// Serializes the table as CSV (factors, confounders, outcome).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = self.factors.names().iter().map(String::as_str).collect();
        let confounder_names: Vec<String> =
            self.confounders.iter().map(|c| c.name().to_string()).collect();
        header.extend(confounder_names.iter().map(String::as_str));
        header.push(&self.outcome_name);
        let _ = writeln!(out, "{}", header.join(","));
        for (row, (pattern, &event)) in self.patterns.iter().zip(&self.outcomes).enumerate() {
            let mut cells: Vec<String> = (0..self.factors.len())
                .map(|i| if pattern.contains(i) { "1" } else { "0" }.to_string())
                .collect();
            for confounder in &self.confounders {
                cells.push(confounder.cell_text(row));
            }
            cells.push(if event { "1" } else { "0" }.to_string());
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

fn require_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data(format!("column {name:?} not found in data header")))
}

fn parse_binary_cell(text: &str, row: usize, column: &str) -> Result<bool> {
    match text.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Data(format!(
            "row {row}, column {column:?}: expected 0 or 1, got {other:?}"
        ))),
    }
}

/// Parses CSV text into a [`DataTable`].
///
/// `factor_names` and `outcome` select columns by header name; `confounders`
/// may be empty. Rows are reported 1-based counting data rows (the header is
/// row 0).
pub fn parse_data_table(
    text: &str,
    factor_names: &[&str],
    outcome: &str,
    confounders: &[&str],
) -> Result<DataTable> {
    let factors = FactorSet::new(factor_names.to_vec())?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
        .clone();

    let factor_cols: Vec<usize> = factor_names
        .iter()
        .map(|name| require_column(&headers, name))
        .collect::<Result<_>>()?;
    let outcome_col = require_column(&headers, outcome)?;
    let confounder_cols: Vec<usize> = confounders
        .iter()
        .map(|name| require_column(&headers, name))
        .collect::<Result<_>>()?;

    let mut patterns = Vec::new();
    let mut outcomes = Vec::new();
    let mut confounder_cells: Vec<Vec<String>> = vec![Vec::new(); confounders.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        let cell = |col: usize, name: &str| -> Result<&str> {
            record
                .get(col)
                .ok_or_else(|| Error::Data(format!("row {row} has no column {name:?}")))
        };
        let mut mask = 0u32;
        for (bit, (&col, name)) in factor_cols.iter().zip(factor_names).enumerate() {
            if parse_binary_cell(cell(col, name)?, row, name)? {
                mask |= 1 << bit;
            }
        }
        patterns.push(ExposurePattern::from_bits(mask));
        outcomes.push(parse_binary_cell(cell(outcome_col, outcome)?, row, outcome)?);
        for (cells, (&col, name)) in confounder_cells.iter_mut().zip(confounder_cols.iter().zip(confounders)) {
            cells.push(cell(col, name)?.to_string());
        }
    }

    let mut table = DataTable::new(factors, outcome, patterns, outcomes)?;
    for (name, cells) in confounders.iter().zip(confounder_cells) {
        table.confounders.push(classify_confounder(name, cells)?);
    }
    Ok(table)
}

/// Numeric if every cell parses as a float, categorical otherwise.
fn classify_confounder(name: &str, cells: Vec<String>) -> Result<Confounder> {
    if let Some(blank) = cells.iter().position(|c| c.is_empty()) {
        return Err(Error::Data(format!(
            "row {}, column {name:?}: empty confounder value",
            blank + 1
        )));
    }
    let numeric: Option<Vec<f64>> = cells
        .iter()
        .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    if let Some(values) = numeric {
        return Ok(Confounder::Numeric {
            name: name.to_string(),
            values,
        });
    }
    let mut levels: Vec<String> = cells.to_vec();
    levels.sort();
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::Data(format!(
            "categorical confounder {name:?} has a single level {:?}; drop it or vary it",
            levels.first().map(String::as_str).unwrap_or("")
        )));
    }
    let codes = cells
        .iter()
        .map(|c| levels.binary_search(c).expect("level from same cells"))
        .collect();
    Ok(Confounder::Categorical {
        name: name.to_string(),
        levels,
        codes,
    })
}
