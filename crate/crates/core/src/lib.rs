//! Additive and multiplicative multi-way interaction analysis for binary
//! risk factors.
//!
//! Given a saturated log-linear model over `n` binary exposures (from a
//! fitted regression or entered by hand), this crate computes the total and
//! top-order relative excess risk due to interaction (`TotRERI`, `RERI`),
//! every lower-order RERI conditioned on the remaining factors being absent
//! or present, and their multiplicative-scale counterparts (`TotI`, `I`),
//! together with delta-method standard errors and Wald confidence intervals
//! when a coefficient covariance matrix is available.
//!
//! Supporting machinery includes protective-factor detection and recoding,
//! qualitative-interaction screening, a logistic-regression fitter for raw
//! cohort data, and a seeded cohort simulator for calibration studies.
//!
//! ```
//! use reri_core::coefficients::CoefficientTable;
//! use reri_core::factors::FactorSet;
//! use reri_core::lattice::surface_from_coefficients;
//! use reri_core::additive::{tot_reri, reri_n};
//!
//! let factors = FactorSet::new(vec!["a", "b"]).unwrap();
//! // ln RR: a alone = ln 2, b alone = ln 3, product term 0.
//! let table = CoefficientTable::new(
//!     factors,
//!     &[(0b01, 2.0f64.ln()), (0b10, 3.0f64.ln()), (0b11, 0.0)],
//! ).unwrap();
//! let surface = surface_from_coefficients(&table).unwrap();
//! // Joint RR 6 vs singletons 2 and 3: excess risk 5 vs 1 + 2 => RERI = 2.
//! assert!((reri_n(&surface) - 2.0).abs() < 1e-12);
//! assert!((tot_reri(&surface) - 2.0).abs() < 1e-12);
//! ```

pub mod additive;
pub mod coefficients;
pub mod data;
pub mod error;
pub mod factors;
pub mod fit;
pub mod inference;
pub mod io;
pub mod lattice;
pub mod multiplicative;
pub mod report;
pub mod screening;
pub mod simulate;

pub use error::{Error, Result};
