//! File formats: block geometry and output features as GeoJSON, the
//! groundwater field and result tables as CSV, run configuration as TOML.
//!
//! Writers format numbers by hand so that identical runs produce identical
//! bytes. Rates are written in l/s with three decimals, coordinates in the
//! shortest form that parses back to the same `f64`.

pub mod config;
pub mod field;
pub mod geometry;
pub mod results;

pub use config::RunConfig;
pub use field::{read_field, GroundwaterField};
pub use geometry::{read_geometry, GeometrySet, RejectedBlock};

/// Version written to and expected in every versioned file.
pub const FORMAT_VERSION: u32 = 1;

use crate::units::Rate;

pub(crate) fn fmt_rate(r: Rate) -> String {
    fmt_fixed(r.l_per_s(), 3)
}

/// Fixed-point formatting that never prints `-0.000`.
pub(crate) fn fmt_fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// JSON string literal.
pub(crate) fn json_str(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}
