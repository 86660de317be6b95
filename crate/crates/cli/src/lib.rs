//! Command-line surface of the front solver.

pub mod plan;
pub mod run;

pub use plan::{parse, parse_or_help, Command, Format, ParseError, RunPlan, UsageError};
pub use run::execute;
