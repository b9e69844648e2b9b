//! `reri` — additive and multiplicative interaction analysis for binary
//! risk factors.
//!
//! Subcommands: `analyze` runs the full pipeline on a coefficient document,
//! `fit` does the same starting from raw CSV data, `simulate` draws a
//! synthetic cohort from a spec, and `check` screens a coefficient document
//! (orientations and qualitative interaction) without computing indices.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 numerical failure
//! (separation, rank deficiency, or an invalid covariance surfacing during
//! interval computation). Set `RERI_VERBOSE=1` for progress notes on stderr.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use reri_core::additive::ProtectivePolicy;
use reri_core::data::parse_data_table;
use reri_core::inference::ConfidenceLevel;
use reri_core::io::{parse_coefficient_document, parse_covariance_matrix, ParsedCoefficients};
use reri_core::lattice::surface_from_coefficients;
use reri_core::report::{
    emit_report, InputDigest, InteractionReport, OrientationFlag, Provenance,
    QualitativeFinding, ReportFormat,
};
use reri_core::screening::{
    detect_protective, qualitative_violations, run_pipeline, PipelineInput, PipelineOptions,
    ProtectiveInput,
};
use reri_core::simulate::{parse_simulation_spec, simulate_cohort};

#[derive(Parser)]
#[command(
    name = "reri",
    version,
    about = "Additive and multiplicative interaction indices for binary risk factors"
)]
struct Cli {
    /// Report output format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Confidence level for intervals, in percent.
    #[arg(long, global = true, value_enum, default_value_t = LevelArg::L95)]
    level: LevelArg,
    /// Qualitative-screen tolerance (how much a factor may fail to raise
    /// risk before it is reported; default 0).
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full analysis on a coefficient document.
    Analyze {
        /// Coefficient document (JSON).
        #[arg(long)]
        coeffs: PathBuf,
        /// Covariance matrix (JSON array of rows, canonical order); overrides
        /// any matrix embedded in the document.
        #[arg(long)]
        cov: Option<PathBuf>,
        /// Keep protective factors as coded instead of recoding them.
        #[arg(long)]
        no_recode: bool,
        /// What to do when the analyzed model still has a protective factor.
        #[arg(long, value_enum, default_value_t = PolicyArg::Warn)]
        policy: PolicyArg,
    },
    /// Fit a saturated logistic model to CSV data, then run the analysis.
    Fit {
        /// Cohort CSV with a header row.
        #[arg(long)]
        data: PathBuf,
        /// Outcome column (values 0/1).
        #[arg(long)]
        outcome: String,
        /// Factor columns, comma-separated (values 0/1).
        #[arg(long, value_delimiter = ',', required = true)]
        factors: Vec<String>,
        /// Confounder columns, comma-separated (numeric or categorical).
        #[arg(long, value_delimiter = ',')]
        confounders: Vec<String>,
        /// Keep protective factors as coded instead of recoding them.
        #[arg(long)]
        no_recode: bool,
        /// What to do when the analyzed model still has a protective factor.
        #[arg(long, value_enum, default_value_t = PolicyArg::Warn)]
        policy: PolicyArg,
    },
    /// Draw a synthetic cohort from a simulation spec and write it as CSV.
    Simulate {
        /// Simulation spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Screen a coefficient document (orientations, qualitative interaction)
    /// without computing indices.
    Check {
        /// Coefficient document (JSON).
        #[arg(long)]
        coeffs: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    #[value(name = "90")]
    L90,
    #[value(name = "95")]
    L95,
    #[value(name = "99")]
    L99,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Compute anyway and say nothing.
    Allow,
    /// Compute but attach a warning.
    Warn,
    /// Refuse to compute.
    Deny,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Table => ReportFormat::Table,
        }
    }
}

impl From<LevelArg> for ConfidenceLevel {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::L90 => ConfidenceLevel::Ninety,
            LevelArg::L95 => ConfidenceLevel::NinetyFive,
            LevelArg::L99 => ConfidenceLevel::NinetyNine,
        }
    }
}

impl From<PolicyArg> for ProtectivePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Allow => ProtectivePolicy::Allow,
            PolicyArg::Warn => ProtectivePolicy::Warn,
            PolicyArg::Deny => ProtectivePolicy::Deny,
        }
    }
}

/// A failure carrying its process exit code: 1 for input problems, 2 for
/// numerical ones.
struct Failure {
    code: u8,
    message: String,
}

impl From<reri_core::Error> for Failure {
    fn from(e: reri_core::Error) -> Self {
        Failure {
            code: if e.is_numerical() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn verbose() -> bool {
    std::env::var("RERI_VERBOSE").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn read_input(path: &Path) -> Result<(String, InputDigest), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure {
        code: 1,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let digest = InputDigest {
        label: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let text = String::from_utf8(bytes).map_err(|_| Failure {
        code: 1,
        message: format!("{} is not valid UTF-8", path.display()),
    })?;
    if verbose() {
        eprintln!("read {} (sha256 {})", digest.label, &digest.sha256[..12]);
    }
    Ok((text, digest))
}

fn load_coefficients(
    coeffs: &Path,
    cov: Option<&Path>,
) -> Result<(ParsedCoefficients, Vec<InputDigest>), Failure> {
    let (text, digest) = read_input(coeffs)?;
    let mut parsed = parse_coefficient_document(&text)?;
    let mut digests = vec![digest];
    if let Some(cov_path) = cov {
        let (cov_text, cov_digest) = read_input(cov_path)?;
        let block = parse_covariance_matrix(&cov_text, parsed.table.factors().len())?;
        if parsed.covariance.is_some() {
            parsed.warnings.push(format!(
                "covariance from {} overrides the matrix embedded in the document",
                cov_path.display()
            ));
        }
        if !parsed.table.is_saturated() {
            return Err(Failure {
                code: 1,
                message: "a covariance matrix requires every coefficient to be explicit".into(),
            });
        }
        parsed.covariance = Some(block);
        digests.push(cov_digest);
    }
    Ok((parsed, digests))
}

fn print_report(report: &InteractionReport, format: FormatArg) {
    print!("{}", emit_report(report, format.into()));
}

fn run(cli: Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let epsilon = match cli.tolerance {
        Some(t) if !t.is_finite() || t < 0.0 => {
            return Err(Failure {
                code: 1,
                message: format!("--tolerance must be finite and >= 0, got {t}"),
            })
        }
        Some(t) => t,
        None => 0.0,
    };

    match &cli.command {
        Command::Analyze {
            coeffs,
            cov,
            no_recode,
            policy,
        } => {
            let (parsed, digests) = load_coefficients(coeffs, cov.as_deref())?;
            let options = PipelineOptions {
                epsilon,
                policy: (*policy).into(),
                recode_protective: !no_recode,
                level: cli.level.into(),
                inputs: digests,
            };
            let input = PipelineInput::Coefficients {
                table: parsed.table,
                covariance: parsed.covariance,
                outcome: parsed.outcome,
            };
            let mut report = run_pipeline(&input, &options)?;
            report.warnings.extend(parsed.warnings);
            print_report(&report, cli.format);
        }
        Command::Fit {
            data,
            outcome,
            factors,
            confounders,
            no_recode,
            policy,
        } => {
            let (text, digest) = read_input(data)?;
            let factor_refs: Vec<&str> = factors.iter().map(String::as_str).collect();
            let confounder_refs: Vec<&str> = confounders.iter().map(String::as_str).collect();
            let table = parse_data_table(&text, &factor_refs, outcome, &confounder_refs)?;
            if verbose() {
                eprintln!(
                    "parsed {} subjects, {} events",
                    table.len(),
                    table.event_count()
                );
            }
            let options = PipelineOptions {
                epsilon,
                policy: (*policy).into(),
                recode_protective: !no_recode,
                level: cli.level.into(),
                inputs: vec![digest],
            };
            let report = run_pipeline(&PipelineInput::Data(table), &options)?;
            print_report(&report, cli.format);
        }
        Command::Simulate { spec, out, seed } => {
            let (text, _digest) = read_input(spec)?;
            let mut simulation = parse_simulation_spec(&text)?;
            if let Some(seed) = seed {
                simulation = simulation.with_seed(*seed);
            }
            let cohort = simulate_cohort(&simulation)?;
            std::fs::write(out, cohort.to_csv()).map_err(|e| Failure {
                code: 1,
                message: format!("cannot write {}: {e}", out.display()),
            })?;
            if verbose() {
                eprintln!(
                    "wrote {} subjects ({} events) to {}",
                    cohort.len(),
                    cohort.event_count(),
                    out.display()
                );
            }
        }
        Command::Check { coeffs } => {
            let (parsed, digests) = load_coefficients(coeffs, None)?;
            let surface = surface_from_coefficients(&parsed.table)?;
            let flags = detect_protective(ProtectiveInput::Surface(&surface))?
                .into_iter()
                .map(|w| OrientationFlag {
                    factor: w.name,
                    source: "surface".into(),
                    estimate: w.rr,
                    recoded: false,
                })
                .collect();
            let screen = qualitative_violations(&surface, epsilon)?;
            let n = parsed.table.factors().len();
            let report = InteractionReport {
                factors: parsed.table.factors().names().to_vec(),
                outcome: parsed.outcome,
                estimates: Default::default(),
                cis: Default::default(),
                qualitative: screen
                    .violations
                    .iter()
                    .map(|v| QualitativeFinding {
                        factor: parsed.table.factors().name(v.factor).to_string(),
                        context: v.context.to_bitstring(n),
                        rr_with: v.rr_with,
                        rr_without: v.rr_without,
                    })
                    .collect(),
                qualitative_comparisons: screen.comparisons,
                flags,
                warnings: parsed.warnings,
                provenance: Provenance::new(digests),
            };
            print_report(&report, cli.format);
        }
    }

    if verbose() {
        let mut note = String::new();
        let _ = write!(note, "done in {:.1?}", started.elapsed());
        eprintln!("{note}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/usage itself; requested help exits 0, any
            // actual usage problem exits 1 per the interface contract
            let requested = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return ExitCode::from(u8::from(!requested));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
