//! Optimal sizing and placement of groundwater heat pump well doublets.
//!
//! The pipeline runs per urban block: candidate wells are laid out on a
//! flow-aligned grid ([`geom`]), their analytical pumping limits come from
//! [`hydro`], a mixed-integer program is assembled ([`model`]) and solved to
//! proven optimality by an embedded branch-and-bound ([`solver`]).
//! [`scenario`] drives whole cities and aggregates the results.
//!
//! ```no_run
//! use doubletopt::geom::PrepConfig;
//! use doubletopt::io::{read_field, read_geometry};
//! use doubletopt::model::ScenarioConfig;
//! use doubletopt::scenario::solve_prepared;
//! use doubletopt::solver::Budget;
//!
//! # fn main() -> Result<(), doubletopt::Error> {
//! let geometry = read_geometry("city.geojson".as_ref())?;
//! let field = read_field("field.csv".as_ref())?;
//! let prepared = geometry.prepare(&field, &PrepConfig::default(), 0)?;
//! let scenarios = ScenarioConfig::standard_matrix(10.0);
//! for run in solve_prepared(&prepared, &scenarios, &Budget::default(), 0)? {
//!     println!("{}: {}", run.scenario.tag(), run.report.total_rate);
//! }
//! # Ok(())
//! # }
//! ```

// `!(x >= 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geom;
pub mod hydro;
pub mod io;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod solver;
pub mod synthetic;
pub mod units;

pub use error::Error;
