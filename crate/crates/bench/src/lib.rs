//! Shared parameter sets for the benchmarks.

use ifront_core::ModelParams;

/// `(label, d, r, c)` of the fronts timed end to end.
pub const FRONT_CASES: &[(&str, f64, f64, f64)] = &[
    ("hom_d2_r1_c0.5", 2.0, 1.0, 0.5),
    ("hom_d2_r1_c2", 2.0, 1.0, 2.0),
    ("het_d0.5_r1_c0.5", 0.5, 1.0, 0.5),
];

pub fn params(d: f64, r: f64, c: f64) -> ModelParams {
    ModelParams::new(d, r, c).expect("benchmark parameters are valid")
}
